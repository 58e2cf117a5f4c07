#include <algorithm>
#include <cmath>
#include <vector>

#include "carefl/datagen.hpp"
#include "carefl/error.hpp"
#include "carefl/queries.hpp"
#include "carefl/training.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carefl;
using carefl::testing::max_abs_diff;

namespace {

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

const FitResult& fitted_intervention_sem() {
  static const FitResult fit = [] {
    SyntheticSpec s;
    s.family = Family::intervention_sem;
    s.n = 2500;
    s.seed = 7;
    auto ds = generate(s);
    return fit_flow(ds.data, CausalOrdering::identity(4), TrainConfig{});
  }();
  return fit;
}

double intervention_c2() {
  SyntheticSpec s;
  s.family = Family::intervention_sem;
  s.n = 1;
  s.seed = 7;
  return *generate(s).spec.c2;
}

FlowModel linear_oracle(double a) {
  auto m = FlowModel::create(CausalOrdering::identity(2), FlowArchitecture{1, {}, Activation::identity()},
                             BaseKind::laplace, false, 0);
  m.set_params(std::vector<double>(m.param_count(), 0.0));
  m.block_of(0, 1).t_net.weights(0)[0] = a;
  return m;
}

}  // namespace

TEST_CASE("interventional samples pin the target exactly") {
  auto m = testing::random_flow(CausalOrdering::from_sequence({2, 0, 1}), 2, {5},
                                Activation::tanh(), BaseKind::laplace, 3);
  m.set_scaler(Scaler{{0.5, -1.0, 2.0}, {2.0, 0.3, 1.7}});
  for (auto mode : {InterventionMode::sequential, InterventionMode::parallel}) {
    auto res = intervene(m, {1, 0.37, 3000, mode, 9});
    REQUIRE(res.samples.rows() == 3000);
    for (std::size_t r = 0; r < res.samples.rows(); ++r) CHECK(res.samples(r, 1) == 0.37);
    CHECK(res.mean[1] == doctest::Approx(0.37).epsilon(1e-14));
    CHECK(res.std_error[1] < 1e-12);
  }
}

TEST_CASE("sequential and parallel agree under shared noise") {
  SUBCASE("oracle model") {
    auto m = testing::intervention_oracle(0.8, 1.2);
    auto z = intervention_noise(m, 2000, 4);
    for (double a : {-2.0, 0.5, 1.75}) {
      for (std::size_t target = 0; target < 4; ++target) {
        auto s = intervene_on_noise(m, target, a, InterventionMode::sequential, z);
        auto p = intervene_on_noise(m, target, a, InterventionMode::parallel, z);
        CHECK(max_abs_diff(s.data(), p.data()) <= 1e-12);
      }
    }
  }
  SUBCASE("random stacked flows with scalers") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const std::size_t d = 2 + seed % 3;
      std::vector<std::size_t> seq(d);
      for (std::size_t k = 0; k < d; ++k) seq[k] = (k + seed) % d;
      auto m = testing::random_flow(CausalOrdering::from_sequence(seq), 1 + seed % 3, {6},
                                    Activation::leaky_relu(), BaseKind::gaussian, seed + 40, 0.4);
      m.set_scaler(Scaler{std::vector<double>(d, 0.2), std::vector<double>(d, 1.5)});
      auto z = intervention_noise(m, 500, seed);
      for (std::size_t target = 0; target < d; ++target) {
        auto s = intervene_on_noise(m, target, -0.6, InterventionMode::sequential, z);
        auto p = intervene_on_noise(m, target, -0.6, InterventionMode::parallel, z);
        CHECK(max_abs_diff(s.data(), p.data()) <= 1e-12);
      }
    }
  }
}

TEST_CASE("intervention leaves non-descendants at their observational law") {
  // On the oracle every variable before the target keeps its draw.
  auto m = testing::intervention_oracle(1.0, 1.0);
  auto z = intervention_noise(m, 300, 2);
  auto s = intervene_on_noise(m, 2, 4.0, InterventionMode::sequential, z);
  auto obs = flow_forward(m, z.row(7));
  CHECK(s(7, 0) == obs[0]);
  CHECK(s(7, 1) == obs[1]);
  CHECK(s(7, 3) == obs[3]);
}

TEST_CASE("linear oracle response") {
  const double a = 1.7;
  auto m = linear_oracle(a);
  auto e = intervention_expectation(m, 0, 2.0, 1, 20000, 5);
  CHECK(std::abs(e.mean - 2.0 * a) <= 3.0 * e.std_error);
  CHECK(e.std_error > 0.0);
  // Laplace(0, 1) noise has variance 2.
  CHECK(e.std_error == doctest::Approx(std::sqrt(2.0 / 20000.0)).epsilon(0.05));
  CHECK_THROWS_AS(intervention_expectation(m, 0, 2.0, 0, 100, 5), ConfigError);
}

TEST_CASE("sharding makes results independent of threads") {
  auto m = testing::random_flow(CausalOrdering::identity(3), 2, {4}, Activation::tanh(),
                                BaseKind::laplace, 8);
  auto a = intervene(m, {0, 1.0, 2500, InterventionMode::parallel, 3}, 1);
  auto b = intervene(m, {0, 1.0, 2500, InterventionMode::parallel, 3}, 3);
  CHECK(a.samples == b.samples);
  auto c = intervene(m, {0, 1.0, 2500, InterventionMode::parallel, 4}, 1);
  CHECK_FALSE(a.samples == c.samples);
}

TEST_CASE("intervention errors") {
  FlowModel empty;
  CHECK_THROWS_AS(intervene(empty, {0, 1.0, 10}), StateError);
  auto m = linear_oracle(1.0);
  CHECK_THROWS_AS(intervene(m, {2, 1.0, 10}), ShapeError);
  CHECK_THROWS_AS(intervene(m, {0, 1.0, 0}), ConfigError);
  CHECK_THROWS_AS(intervene(m, {0, std::nan(""), 10}), NumericError);
  CHECK_THROWS_AS(parse_mode("batched"), ConfigError);
  CHECK(parse_mode("parallel") == InterventionMode::parallel);
}

TEST_CASE("fitted intervention SEM tracks the analytic responses") {
  const auto& fit = fitted_intervention_sem();
  const double c2 = intervention_c2();
  double mse3 = 0.0, mse4 = 0.0;
  int k = 0;
  for (int i = -4; i <= 4; ++i, ++k) {
    const double a = 0.5 * i;
    auto e3 = intervention_expectation(fit.model, 0, a, 2, 4000, 100 + k);
    auto e4 = intervention_expectation(fit.model, 0, a, 3, 4000, 100 + k);
    mse3 += (e3.mean - a) * (e3.mean - a);
    mse4 += (e4.mean - c2 * a * a) * (e4.mean - c2 * a * a);
  }
  CHECK(mse3 / k <= 0.5);
  CHECK(mse4 / k <= 0.5);

  auto z = intervention_noise(fit.model, 1000, 6);
  auto s = intervene_on_noise(fit.model, 0, 1.5, InterventionMode::sequential, z);
  auto p = intervene_on_noise(fit.model, 0, 1.5, InterventionMode::parallel, z);
  CHECK(max_abs_diff(s.data(), p.data()) <= 1e-12);
}

TEST_CASE("intervening on a sink keeps the root distribution") {
  const auto& fit = fitted_intervention_sem();
  auto res = intervene(fit.model, {3, 2.0, 10000, InterventionMode::sequential, 21});
  auto obs = sample(fit.model, 10000, 22);
  const double d = ks_statistic(res.samples.column(0), obs.column(0));
  // Critical value at the 1% level for two samples of 10^4.
  CHECK(d < 1.628 * std::sqrt(2.0 / 10000.0));
}

TEST_CASE("oracle counterfactuals match closed-form abduction") {
  const double c1 = 0.9, c2 = 1.3;
  auto m = testing::intervention_oracle(c1, c2);
  const std::vector<double> x_obs{2.00, 1.50, 0.81, -0.28};
  for (int i = -30; i <= 30; ++i) {
    const double a = 0.1 * i;
    auto cf = counterfactual(m, {x_obs, 0, a});
    CHECK(std::abs(cf[2] - (0.81 + (a - 2.0))) <= 1e-6);
    CHECK(std::abs(cf[3] - (-0.28 + c2 * (a * a - 4.0))) <= 1e-6);
    CHECK(cf[0] == a);
    CHECK(cf[1] == doctest::Approx(1.5).epsilon(1e-12));
  }
}

TEST_CASE("identity counterfactual returns the observation") {
  auto m = testing::random_flow(CausalOrdering::from_sequence({1, 3, 0, 2}), 3, {6},
                                Activation::leaky_relu(), BaseKind::laplace, 17);
  m.set_scaler(Scaler{{1.0, 2.0, -3.0, 0.5}, {0.5, 2.0, 1.5, 3.0}});
  const std::vector<double> x{0.3, -1.2, 2.2, 0.9};
  for (std::size_t j = 0; j < 4; ++j) {
    auto cf = counterfactual(m, {x, j, x[j]});
    CHECK(max_abs_diff(cf, x) <= 1e-9);
  }
  auto o = testing::intervention_oracle(1.0, 1.0);
  const std::vector<double> x_obs{2.00, 1.50, 0.81, -0.28};
  CHECK(max_abs_diff(counterfactual(o, {x_obs, 0, 2.0}), x_obs) <= 1e-9);
}

TEST_CASE("counterfactual on a root leaves other roots alone") {
  auto m = testing::intervention_oracle(0.7, 0.6);
  const std::vector<double> x_obs{2.00, 1.50, 0.81, -0.28};
  auto cf = counterfactual(m, {x_obs, 1, -0.4});
  CHECK(cf[0] == doctest::Approx(x_obs[0]).epsilon(1e-14));
  CHECK(cf[3] == doctest::Approx(-0.28 - (-0.4 - 1.5)).epsilon(1e-12));
}

TEST_CASE("abduction is exact") {
  auto m = testing::random_flow(CausalOrdering::identity(3), 2, {5}, Activation::tanh(),
                                BaseKind::gaussian, 4);
  const std::vector<double> x{1.1, -0.7, 0.2};
  auto z = flow_inverse(m, x).z;
  CHECK(max_abs_diff(flow_forward(m, z), x) <= 1e-9);
}

TEST_CASE("counterfactual errors") {
  auto m = testing::intervention_oracle(1.0, 1.0);
  CHECK_THROWS_AS(counterfactual(m, {{1.0, 2.0}, 0, 1.0}), ShapeError);
  CHECK_THROWS_AS(counterfactual(m, {{1.0, 2.0, 3.0, INFINITY}, 0, 1.0}), NumericError);
  CHECK_THROWS_AS(counterfactual(FlowModel{}, {{1.0}, 0, 1.0}), StateError);
}
