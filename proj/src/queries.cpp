#include "carefl/queries.hpp"

#include <cmath>

#include "carefl/error.hpp"
#include "carefl/parallel.hpp"
#include "carefl/random.hpp"

namespace carefl {

std::string mode_name(InterventionMode m) {
  return m == InterventionMode::parallel ? "parallel" : "sequential";
}

InterventionMode parse_mode(const std::string& name) {
  if (name == "sequential") return InterventionMode::sequential;
  if (name == "parallel") return InterventionMode::parallel;
  throw ConfigError("unknown intervention mode '" + name + "'");
}

namespace {

void check_model(const FlowModel& model) {
  if (model.empty()) throw StateError("model is not trained");
  model.check_ready();
}

double to_std(const FlowModel& model, std::size_t var, double x) {
  return model.scaler() ? model.scaler()->to_standard(var, x) : x;
}

void to_original(const FlowModel& model, std::span<double> x) {
  if (!model.scaler()) return;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = model.scaler()->from_standard(j, x[j]);
}

void check_target(const FlowModel& model, std::size_t target, double value) {
  if (target >= model.dim()) {
    throw ShapeError("target variable x" + std::to_string(target + 1) + " out of range for d=" +
                     std::to_string(model.dim()));
  }
  if (!std::isfinite(value)) throw NumericError("intervention value is not finite");
}

void sequential_rows(const FlowModel& model, std::size_t target, double value, const Matrix& z,
                     std::size_t begin, std::size_t end, Matrix& out) {
  const double a = to_std(model, target, value);
  for (std::size_t r = begin; r < end; ++r) {
    auto x = flow_forward_pinned(model, z.row(r), target, a);
    to_original(model, x);
    x[target] = value;
    std::copy(x.begin(), x.end(), out.row(r).begin());
  }
}

// Batched: push all noise forward, pin the target, pull the latents back to
// read off the target's noise, then push the edited latents forward again.
void parallel_rows(const FlowModel& model, std::size_t target, double value, const Matrix& z,
                   std::size_t begin, std::size_t end, Matrix& out) {
  const double a = to_std(model, target, value);
  const std::size_t n = end - begin;
  const std::size_t d = model.dim();
  Matrix zz(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = flow_forward(model, z.row(begin + i));
    x[target] = a;
    const auto inv = flow_inverse(model, x);
    auto dst = zz.row(i);
    std::copy(z.row(begin + i).begin(), z.row(begin + i).end(), dst.begin());
    dst[target] = inv.z[target];
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto x = flow_forward(model, zz.row(i));
    to_original(model, x);
    x[target] = value;
    std::copy(x.begin(), x.end(), out.row(begin + i).begin());
  }
}

void fill_summary(InterventionResult& res) {
  const std::size_t n = res.samples.rows();
  const std::size_t d = res.samples.cols();
  res.mean.assign(d, 0.0);
  res.std_error.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += res.samples(r, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t r = 0; r < n; ++r) v += (res.samples(r, j) - m) * (res.samples(r, j) - m);
    res.mean[j] = m;
    res.std_error[j] = n > 1 ? std::sqrt(v / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
}

}  // namespace

Matrix intervention_noise(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  check_model(model);
  const std::size_t d = model.dim();
  Matrix z(n, d);
  const std::size_t shards = (n + kSampleShard - 1) / kSampleShard;
  for (std::size_t s = 0; s < shards; ++s) {
    Rng rng(derive_seed(seed, s));
    const std::size_t end = std::min(n, (s + 1) * kSampleShard);
    for (std::size_t r = s * kSampleShard; r < end; ++r) {
      auto v = sample_base(model.base(), d, rng);
      std::copy(v.begin(), v.end(), z.row(r).begin());
    }
  }
  return z;
}

Matrix intervene_on_noise(const FlowModel& model, std::size_t target, double value,
                          InterventionMode mode, const Matrix& z) {
  check_model(model);
  check_target(model, target, value);
  if (z.cols() != model.dim()) throw ShapeError("noise columns do not match model dimension");
  Matrix out(z.rows(), z.cols());
  if (mode == InterventionMode::sequential) {
    sequential_rows(model, target, value, z, 0, z.rows(), out);
  } else {
    parallel_rows(model, target, value, z, 0, z.rows(), out);
  }
  return out;
}

InterventionResult intervene(const FlowModel& model, const InterventionQuery& q,
                             std::size_t threads) {
  check_model(model);
  check_target(model, q.target, q.value);
  if (q.n_samples == 0) throw ConfigError("n_samples must be positive");
  const Matrix z = intervention_noise(model, q.n_samples, q.seed);
  InterventionResult res;
  res.samples = Matrix(q.n_samples, model.dim());
  const std::size_t shards = (q.n_samples + kSampleShard - 1) / kSampleShard;
  parallel_for(
      shards,
      [&](std::size_t s) {
        const std::size_t begin = s * kSampleShard;
        const std::size_t end = std::min(q.n_samples, begin + kSampleShard);
        if (q.mode == InterventionMode::sequential) {
          sequential_rows(model, q.target, q.value, z, begin, end, res.samples);
        } else {
          parallel_rows(model, q.target, q.value, z, begin, end, res.samples);
        }
      },
      threads);
  fill_summary(res);
  return res;
}

Expectation intervention_expectation(const FlowModel& model, std::size_t target, double value,
                                     std::size_t response, std::size_t n, std::uint64_t seed,
                                     InterventionMode mode) {
  if (response == target) {
    throw ConfigError("response variable must differ from the intervened variable");
  }
  if (response >= model.dim()) throw ShapeError("response variable out of range");
  const auto res = intervene(model, {target, value, n, mode, seed});
  return {res.mean[response], res.std_error[response]};
}

std::vector<double> counterfactual(const FlowModel& model, const CounterfactualQuery& q) {
  check_model(model);
  if (q.x_obs.size() != model.dim()) {
    throw ShapeError("x_obs has length " + std::to_string(q.x_obs.size()) +
                     ", model dimension is " + std::to_string(model.dim()));
  }
  check_target(model, q.target, q.value);
  std::vector<double> u = q.x_obs;
  if (model.scaler()) u = model.scaler()->to_standard(q.x_obs);
  const auto abduced = flow_inverse(model, u);
  auto x = flow_forward_pinned(model, abduced.z, q.target, to_std(model, q.target, q.value));
  to_original(model, x);
  x[q.target] = q.value;
  return x;
}

}  // namespace carefl
