#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carefl/discovery.hpp"
#include "carefl/flow.hpp"
#include "carefl/matrix.hpp"

namespace carefl {

enum class Family {
  linear,                   // x2 = a x1 + z2
  nonlinear_additive,       // x2 = x1 + a x1^3 + z2
  modulated_noise,          // x2 = sig(x1) + x1^2 / 2 + sig(x1) z2
  sigmoid_nonlinear_noise,  // x2 = sig(sig(a x1) + z2)
  highdim_pair,
  intervention_sem,
};
std::string family_name(Family f);
Family parse_family(const std::string& name);
bool is_bivariate(Family f) noexcept;
const std::vector<Family>& bivariate_families();

enum class NoiseKind { laplace, student_t, gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::laplace;
  double dof = 3.0;  // student_t only

  std::string to_string() const;
  // "laplace", "gaussian", "student_t" or "student_t:<dof>".
  static NoiseSpec parse(const std::string& text);
  bool operator==(const NoiseSpec&) const = default;
};

inline constexpr std::size_t kHighdimBlock = 10;
inline constexpr double kCoeffLow = 0.5;
inline constexpr double kCoeffHigh = 1.5;

struct SyntheticSpec {
  Family family = Family::linear;
  std::size_t n = 500;
  std::uint64_t seed = 0;
  double coeff = 1.0;
  NoiseSpec noise;
  bool flip_direction = false;
  // intervention_sem coefficients; drawn from the seed when absent.
  std::optional<double> c1;
  std::optional<double> c2;
  // highdim_pair: per-output form in {1, 2, 3}; drawn when empty, a single
  // entry applies to every output.
  std::vector<int> forms;

  void validate() const;
};

struct GeneratedDataset {
  Matrix data;
  std::vector<std::string> names;
  CausalOrdering true_ordering;
  // Pair families: direction between column block 1 and block 2.
  Direction true_direction = Direction::undecided;
  SyntheticSpec spec;  // with drawn c1, c2 and forms filled in
};

GeneratedDataset generate_bivariate(const SyntheticSpec& spec);
GeneratedDataset generate_multivariate_pair(const SyntheticSpec& spec);
GeneratedDataset generate_intervention_sem(const SyntheticSpec& spec);
GeneratedDataset generate(const SyntheticSpec& spec);

// The latent draws behind a dataset, one column per noise variable in
// generation order (cause first, before any flip).
Matrix noise_matrix(const SyntheticSpec& spec);

nlohmann::json spec_to_json(const SyntheticSpec& spec);
nlohmann::json truth_json(const GeneratedDataset& ds);

// Writes the CSV and, when truth_path is non-empty, the JSON sidecar.
void save_dataset(const GeneratedDataset& ds, const std::string& csv_path,
                  const std::string& truth_path);

double sigmoid(double x) noexcept;

}  // namespace carefl
