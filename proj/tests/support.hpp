#pragma once

// Shared helpers for the test suites: finite differences and random models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "carefl/flow.hpp"
#include "carefl/random.hpp"

namespace carefl::testing {

inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor.
inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-7) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

inline void randomize(FlowModel& model, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  auto p = model.params();
  for (auto& v : p) v = rng.uniform(-spread, spread);
  model.set_params(p);
}

inline FlowModel random_flow(const CausalOrdering& ordering, std::size_t layers,
                             std::vector<std::size_t> hidden, Activation act, BaseKind base,
                             std::uint64_t seed, double spread = 0.5) {
  FlowArchitecture arch{layers, std::move(hidden), act};
  auto m = FlowModel::create(ordering, arch, base, false, seed);
  randomize(m, seed ^ 0xabcdefULL, spread);
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// log|det| of a small dense matrix via partial-pivot elimination.
inline double log_abs_det(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    acc += std::log(std::abs(a[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return acc;
}

// J[i][j] = d out_i / d in_j by central differences.
inline std::vector<std::vector<double>> fd_jacobian(
    const std::function<std::vector<double>(std::span<const double>)>& f, std::vector<double> x,
    double h = 1e-6) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> J(n, std::vector<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const double o = x[j];
    x[j] = o + h;
    auto up = f(x);
    x[j] = o - h;
    auto dn = f(x);
    x[j] = o;
    for (std::size_t i = 0; i < n; ++i) J[i][j] = (up[i] - dn[i]) / (2 * h);
  }
  return J;
}

inline std::vector<CausalOrdering> some_orderings(std::size_t d) {
  std::vector<std::size_t> seq(d);
  std::iota(seq.begin(), seq.end(), std::size_t{0});
  std::vector<CausalOrdering> out{CausalOrdering::from_sequence(seq)};
  std::reverse(seq.begin(), seq.end());
  out.push_back(CausalOrdering::from_sequence(seq));
  if (d >= 3) {
    std::vector<std::size_t> mid{1};
    for (std::size_t v = 0; v < d; ++v)
      if (v != 1) mid.push_back(v);
    out.push_back(CausalOrdering::from_sequence(mid));
  }
  return out;
}


// x1 = z1, x2 = z2, x3 = x1 + c1 x2^3 + z3, x4 = c2 x1^2 - x2 + z4 as a
// single-layer flow with exact shift functions and zero scales.
inline FlowModel intervention_oracle(double c1, double c2) {
  auto m = FlowModel::create(CausalOrdering::identity(4), FlowArchitecture{1, {}, Activation::identity()},
                             BaseKind::laplace, false, 0);
  m.set_params(std::vector<double>(m.param_count(), 0.0));
  m.set_fixed_conditioner(0, 2, ConditionerRole::shift,
                          [c1](std::span<const double> in, std::span<double> out) {
                            out[0] = in[0] + c1 * in[1] * in[1] * in[1];
                          });
  m.set_fixed_conditioner(0, 3, ConditionerRole::shift,
                          [c2](std::span<const double> in, std::span<double> out) {
                            out[0] = c2 * in[0] * in[0] - in[1];
                          });
  return m;
}

}  // namespace carefl::testing
