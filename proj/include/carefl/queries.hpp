#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "carefl/flow.hpp"
#include "carefl/matrix.hpp"

namespace carefl {

enum class InterventionMode { sequential, parallel };
std::string mode_name(InterventionMode m);
InterventionMode parse_mode(const std::string& name);

// Variable indices are 0-based; values are in original data units.
struct InterventionQuery {
  std::size_t target = 0;
  double value = 0.0;
  std::size_t n_samples = 1000;
  InterventionMode mode = InterventionMode::sequential;
  std::uint64_t seed = 0;
};

struct InterventionResult {
  Matrix samples;  // original units
  std::vector<double> mean;
  std::vector<double> std_error;
};

// Draws are made in fixed-size shards with derived seeds, so the result
// does not depend on the thread count.
inline constexpr std::size_t kSampleShard = 1024;

InterventionResult intervene(const FlowModel& model, const InterventionQuery& q,
                             std::size_t threads = 0);

// Same computation on caller-supplied base draws (one row per sample).
Matrix intervene_on_noise(const FlowModel& model, std::size_t target, double value,
                          InterventionMode mode, const Matrix& z);

// Base draws used by intervene for a given seed.
Matrix intervention_noise(const FlowModel& model, std::size_t n, std::uint64_t seed);

struct Expectation {
  double mean = 0.0;
  double std_error = 0.0;
};

Expectation intervention_expectation(const FlowModel& model, std::size_t target, double value,
                                     std::size_t response, std::size_t n, std::uint64_t seed,
                                     InterventionMode mode = InterventionMode::sequential);

struct CounterfactualQuery {
  std::vector<double> x_obs;  // original units
  std::size_t target = 0;
  double value = 0.0;
};

std::vector<double> counterfactual(const FlowModel& model, const CounterfactualQuery& q);

}  // namespace carefl
