#include "carefl/datagen.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "carefl/csv.hpp"
#include "carefl/error.hpp"
#include "carefl/random.hpp"

namespace carefl {

using nlohmann::json;

namespace {
constexpr std::uint64_t kNoiseStream = 0x4e00;
constexpr std::uint64_t kCoeffStream = 0xc0ef;

std::size_t noise_columns(Family f) {
  switch (f) {
    case Family::highdim_pair:
      return 2 * kHighdimBlock;
    case Family::intervention_sem:
      return 4;
    default:
      return 2;
  }
}

std::vector<std::string> default_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

Matrix swap_blocks(const Matrix& m, std::size_t first) {
  std::vector<std::size_t> idx;
  for (std::size_t c = first; c < m.cols(); ++c) idx.push_back(c);
  for (std::size_t c = 0; c < first; ++c) idx.push_back(c);
  return m.select_cols(idx);
}

void require_family(const SyntheticSpec& spec, bool ok, const char* op) {
  if (!ok) throw ConfigError(std::string(op) + " does not handle family " + family_name(spec.family));
}

}  // namespace

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

std::string family_name(Family f) {
  switch (f) {
    case Family::linear:
      return "linear";
    case Family::nonlinear_additive:
      return "nonlinear_additive";
    case Family::modulated_noise:
      return "modulated_noise";
    case Family::sigmoid_nonlinear_noise:
      return "sigmoid_nonlinear_noise";
    case Family::highdim_pair:
      return "highdim_pair";
    case Family::intervention_sem:
      return "intervention_sem";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  for (auto f : {Family::linear, Family::nonlinear_additive, Family::modulated_noise,
                 Family::sigmoid_nonlinear_noise, Family::highdim_pair, Family::intervention_sem}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown family '" + name + "'");
}

bool is_bivariate(Family f) noexcept {
  return f == Family::linear || f == Family::nonlinear_additive || f == Family::modulated_noise ||
         f == Family::sigmoid_nonlinear_noise;
}

const std::vector<Family>& bivariate_families() {
  static const std::vector<Family> all{Family::linear, Family::nonlinear_additive,
                                       Family::modulated_noise, Family::sigmoid_nonlinear_noise};
  return all;
}

std::string NoiseSpec::to_string() const {
  switch (kind) {
    case NoiseKind::laplace:
      return "laplace";
    case NoiseKind::gaussian:
      return "gaussian";
    case NoiseKind::student_t: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "student_t:%g", dof);
      return buf;
    }
  }
  return "?";
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
  if (text == "laplace") return {NoiseKind::laplace};
  if (text == "gaussian") return {NoiseKind::gaussian};
  if (text == "student_t") return {NoiseKind::student_t};
  const std::string prefix = "student_t:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double dof = std::stod(text.substr(prefix.size()), &used);
      if (used + prefix.size() == text.size()) return {NoiseKind::student_t, dof};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown noise kind '" + text + "'");
}

void SyntheticSpec::validate() const {
  if (n == 0) throw ConfigError("sample count n must be >= 1");
  if (noise.kind == NoiseKind::student_t && !(noise.dof > 2.0)) {
    throw ConfigError("student_t noise needs dof > 2");
  }
  if (!std::isfinite(coeff)) throw ConfigError("coefficient must be finite");
  if ((c1 && !std::isfinite(*c1)) || (c2 && !std::isfinite(*c2))) {
    throw ConfigError("c1 and c2 must be finite");
  }
  if (!forms.empty()) {
    if (forms.size() != 1 && forms.size() != kHighdimBlock) {
      throw ConfigError("forms needs 1 or " + std::to_string(kHighdimBlock) + " entries");
    }
    for (int f : forms) {
      if (f < 1 || f > 3) throw ConfigError("forms entries must be 1, 2 or 3");
    }
  }
  if (family == Family::intervention_sem && flip_direction) {
    throw ConfigError("flip_direction does not apply to intervention_sem");
  }
}

Matrix noise_matrix(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k = noise_columns(spec.family);
  Matrix z(spec.n, k);
  for (std::size_t c = 0; c < k; ++c) {
    Rng rng(derive_seed(spec.seed, kNoiseStream + c));
    for (std::size_t r = 0; r < spec.n; ++r) {
      switch (spec.noise.kind) {
        case NoiseKind::laplace:
          z(r, c) = rng.laplace();
          break;
        case NoiseKind::gaussian:
          z(r, c) = rng.normal();
          break;
        case NoiseKind::student_t:
          z(r, c) = rng.student_t(spec.noise.dof);
          break;
      }
    }
  }
  return z;
}

GeneratedDataset generate_bivariate(const SyntheticSpec& spec) {
  require_family(spec, is_bivariate(spec.family), "generate_bivariate");
  const Matrix z = noise_matrix(spec);
  const double a = spec.coeff;
  Matrix x(spec.n, 2);
  for (std::size_t r = 0; r < spec.n; ++r) {
    const double x1 = z(r, 0);
    const double z2 = z(r, 1);
    double x2 = 0.0;
    switch (spec.family) {
      case Family::linear:
        x2 = a * x1 + z2;
        break;
      case Family::nonlinear_additive:
        x2 = x1 + a * x1 * x1 * x1 + z2;
        break;
      case Family::modulated_noise:
        x2 = sigmoid(x1) + 0.5 * x1 * x1 + sigmoid(x1) * z2;
        break;
      case Family::sigmoid_nonlinear_noise:
        x2 = sigmoid(sigmoid(a * x1) + z2);
        break;
      default:
        break;
    }
    x(r, 0) = x1;
    x(r, 1) = x2;
  }
  GeneratedDataset ds;
  ds.spec = spec;
  ds.names = default_names(2);
  if (spec.flip_direction) {
    ds.data = swap_blocks(x, 1);
    ds.true_ordering = CausalOrdering::from_sequence({1, 0});
    ds.true_direction = Direction::x2_causes_x1;
  } else {
    ds.data = std::move(x);
    ds.true_ordering = CausalOrdering::identity(2);
    ds.true_direction = Direction::x1_causes_x2;
  }
  return ds;
}

GeneratedDataset generate_multivariate_pair(const SyntheticSpec& spec) {
  require_family(spec, spec.family == Family::highdim_pair, "generate_multivariate_pair");
  const Matrix z = noise_matrix(spec);
  constexpr std::size_t B = kHighdimBlock;
  std::vector<int> forms = spec.forms;
  if (forms.empty()) {
    Rng rng(derive_seed(spec.seed, kCoeffStream));
    for (std::size_t i = 0; i < B; ++i) forms.push_back(1 + static_cast<int>(rng.below(3)));
  } else if (forms.size() == 1) {
    forms.assign(B, forms.front());
  }

  Matrix x(spec.n, 2 * B);
  for (std::size_t r = 0; r < spec.n; ++r) {
    double all = 0.0;
    double first_half = 0.0;
    double powers = 0.0;
    for (std::size_t j = 0; j < B; ++j) {
      const double v = z(r, j);
      x(r, j) = v;
      all += v;
      if (j < B / 2) {
        first_half += v;
      } else {
        powers += std::pow(sigmoid(v), static_cast<double>(j + 1 - B / 2));
      }
    }
    for (std::size_t i = 0; i < B; ++i) {
      const double zi = z(r, B + i);
      double g = 0.0;
      switch (forms[i]) {
        case 1:
          g = sigmoid(sigmoid(all) + zi);
          break;
        case 2:
          g = sigmoid(sigmoid(first_half) + zi);
          break;
        default:
          g = sigmoid(powers + zi);
          break;
      }
      x(r, B + i) = g;
    }
  }

  GeneratedDataset ds;
  ds.spec = spec;
  ds.spec.forms = forms;
  ds.names = default_names(2 * B);
  std::vector<std::size_t> seq(2 * B);
  if (spec.flip_direction) {
    ds.data = swap_blocks(x, B);
    for (std::size_t i = 0; i < 2 * B; ++i) seq[i] = (i + B) % (2 * B);
    ds.true_direction = Direction::x2_causes_x1;
  } else {
    ds.data = std::move(x);
    for (std::size_t i = 0; i < 2 * B; ++i) seq[i] = i;
    ds.true_direction = Direction::x1_causes_x2;
  }
  ds.true_ordering = CausalOrdering::from_sequence(seq);
  return ds;
}

GeneratedDataset generate_intervention_sem(const SyntheticSpec& spec) {
  require_family(spec, spec.family == Family::intervention_sem, "generate_intervention_sem");
  const Matrix z = noise_matrix(spec);
  Rng rng(derive_seed(spec.seed, kCoeffStream));
  const double c1_draw = rng.uniform(kCoeffLow, kCoeffHigh);
  const double c2_draw = rng.uniform(kCoeffLow, kCoeffHigh);
  const double c1 = spec.c1.value_or(c1_draw);
  const double c2 = spec.c2.value_or(c2_draw);

  Matrix x(spec.n, 4);
  for (std::size_t r = 0; r < spec.n; ++r) {
    const double x1 = z(r, 0);
    const double x2 = z(r, 1);
    x(r, 0) = x1;
    x(r, 1) = x2;
    x(r, 2) = x1 + c1 * x2 * x2 * x2 + z(r, 2);
    x(r, 3) = c2 * x1 * x1 - x2 + z(r, 3);
  }
  GeneratedDataset ds;
  ds.spec = spec;
  ds.spec.c1 = c1;
  ds.spec.c2 = c2;
  ds.data = std::move(x);
  ds.names = default_names(4);
  ds.true_ordering = CausalOrdering::identity(4);
  return ds;
}

GeneratedDataset generate(const SyntheticSpec& spec) {
  if (is_bivariate(spec.family)) return generate_bivariate(spec);
  if (spec.family == Family::highdim_pair) return generate_multivariate_pair(spec);
  return generate_intervention_sem(spec);
}

json spec_to_json(const SyntheticSpec& spec) {
  json j = {{"family", family_name(spec.family)},
            {"n", spec.n},
            {"seed", spec.seed},
            {"coeff", spec.coeff},
            {"noise", spec.noise.to_string()},
            {"flip_direction", spec.flip_direction}};
  if (spec.c1) j["c1"] = *spec.c1;
  if (spec.c2) j["c2"] = *spec.c2;
  if (!spec.forms.empty()) j["forms"] = spec.forms;
  return j;
}

json truth_json(const GeneratedDataset& ds) {
  json j = {{"generating_params", spec_to_json(ds.spec)},
            {"columns", ds.names},
            {"true_ordering", ds.true_ordering.to_string()}};
  if (ds.spec.family != Family::intervention_sem) {
    j["true_direction"] = direction_name(ds.true_direction);
  }
  return j;
}

void save_dataset(const GeneratedDataset& ds, const std::string& csv_path,
                  const std::string& truth_path) {
  write_csv(csv_path, ds.data, ds.names);
  if (truth_path.empty()) return;
  std::ofstream out(truth_path);
  if (!out) throw DataError("cannot write '" + truth_path + "'");
  out << truth_json(ds).dump(2) << '\n';
}

}  // namespace carefl
