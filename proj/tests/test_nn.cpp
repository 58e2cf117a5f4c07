#include <cmath>
#include <vector>

#include "carefl/error.hpp"
#include "carefl/nn.hpp"
#include "carefl/random.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carefl;

namespace {

// Straight-line evaluator sharing no code with ConditionerNet::forward.
double ref_act(const Activation& a, double z) {
  if (a.kind == ActivationKind::tanh) return std::tanh(z);
  if (a.kind == ActivationKind::identity) return z;
  return z >= 0 ? z : a.slope * z;
}

std::vector<double> reference_forward(const ConditionerNet& net, std::vector<double> x) {
  const auto& dims = net.layer_dims();
  const auto p = net.params();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::vector<double> y(dims[l + 1]);
    const std::size_t boff = off + dims[l] * dims[l + 1];
    for (std::size_t o = 0; o < dims[l + 1]; ++o) {
      double acc = p[boff + o];
      for (std::size_t i = 0; i < dims[l]; ++i) acc += p[off + o * dims[l] + i] * x[i];
      y[o] = (l + 2 < dims.size()) ? ref_act(net.activation(), acc) : acc;
    }
    off = boff + dims[l + 1];
    x = std::move(y);
  }
  return x;
}

ConditionerNet random_net(Rng& rng, Activation act) {
  std::vector<std::size_t> dims{1 + rng.below(4)};
  const std::size_t hidden = rng.below(3);
  for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + rng.below(6));
  dims.push_back(1 + rng.below(3));
  auto net = init_net(dims, act, rng.next_u64());
  for (auto& b : net.params()) b += rng.uniform(-0.3, 0.3);
  return net;
}

}  // namespace

TEST_CASE("init_net zero biases, determinism and uniform bound") {
  auto a = init_net({1, 1}, Activation::leaky_relu(), 7);
  CHECK(a.biases(0)[0] == 0.0);

  auto n1 = init_net({2, 10, 1}, Activation::leaky_relu(), 0);
  auto n2 = init_net({2, 10, 1}, Activation::leaky_relu(), 0);
  CHECK(n1 == n2);
  for (std::size_t l = 0; l < n1.n_layers(); ++l) {
    const double bound = 3.0 / std::sqrt(static_cast<double>(n1.layer_dims()[l]));
    // Uniform init has support +-1/sqrt(fan_in), well inside the 3/sqrt bound.
    const double support = 1.0 / std::sqrt(static_cast<double>(n1.layer_dims()[l]));
    for (double w : n1.weights(l)) {
      CHECK(std::abs(w) <= bound);
      CHECK(std::abs(w) <= support);
    }
    for (double b : n1.biases(l)) CHECK(b == 0.0);
  }
  CHECK(init_net({2, 10, 1}, Activation::leaky_relu(), 1) != n1);
}

TEST_CASE("init_net rejects invalid dims") {
  CHECK_THROWS_AS(init_net({}, Activation::leaky_relu(), 0), ConfigError);
  CHECK_THROWS_AS(init_net({3}, Activation::leaky_relu(), 0), ConfigError);
  CHECK_THROWS_AS(init_net({2, 0, 1}, Activation::leaky_relu(), 0), ConfigError);
}

TEST_CASE("net_forward basic arithmetic") {
  SUBCASE("zero weights return the bias") {
    ConditionerNet net({3, 4, 2}, Activation::tanh());
    net.biases(1)[0] = 0.25;
    net.biases(1)[1] = -1.5;
    for (const std::vector<double>& x : {std::vector<double>{1, 2, 3}, std::vector<double>{-5, 0, 9}}) {
      auto y = net_forward(net, x);
      CHECK(y[0] == 0.25);
      CHECK(y[1] == -1.5);
    }
  }
  SUBCASE("piecewise linear leaky relu") {
    ConditionerNet net({1, 1, 1}, Activation::leaky_relu(0.01));
    net.weights(0)[0] = 1.0;
    net.weights(1)[0] = 1.0;
    CHECK(net_forward(net, std::vector<double>{2.0})[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(net_forward(net, std::vector<double>{-2.0})[0] == doctest::Approx(-0.02).epsilon(1e-15));
    auto g = net_backward(net, std::vector<double>{2.0}, std::vector<double>{1.0});
    CHECK(g.input_grad[0] == 1.0);
  }
  SUBCASE("shape errors") {
    ConditionerNet net({2, 1}, Activation::identity());
    CHECK_THROWS_AS(net_forward(net, std::vector<double>{1.0}), ShapeError);
    CHECK_THROWS_AS(net_backward(net, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 1.0}),
                    ShapeError);
  }
}

TEST_CASE("linear conditioner reproduces w.x + b") {
  ConditionerNet net({3, 1}, Activation::leaky_relu());
  net.weights(0)[0] = 0.5;
  net.weights(0)[1] = -2.0;
  net.weights(0)[2] = 0.125;
  net.biases(0)[0] = 3.0;
  const std::vector<double> x{1.5, 0.25, -8.0};
  CHECK(net_forward(net, x)[0] == 0.5 * 1.5 - 2.0 * 0.25 + 0.125 * -8.0 + 3.0);
}

TEST_CASE("forward matches independent evaluator") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const Activation acts[] = {Activation::leaky_relu(0.01), Activation::tanh(),
                               Activation::identity()};
    auto net = random_net(rng, acts[trial % 3]);
    std::vector<double> x(net.input_dim());
    for (auto& v : x) v = rng.uniform(-2, 2);
    auto a = net_forward(net, x);
    auto b = reference_forward(net, x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
  }
}

TEST_CASE("zero output gradient gives zero gradients") {
  Rng rng(3);
  auto net = random_net(rng, Activation::tanh());
  std::vector<double> x(net.input_dim(), 0.7);
  std::vector<double> og(net.output_dim(), 0.0);
  auto g = net_backward(net, x, og);
  for (double v : g.param_grad.values) CHECK(v == 0.0);
  for (double v : g.input_grad) CHECK(v == 0.0);
}

TEST_CASE("reverse-mode gradients match central differences") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Activation acts[] = {Activation::leaky_relu(0.01), Activation::tanh(),
                               Activation::identity()};
    auto net = random_net(rng, acts[trial % 3]);
    std::vector<double> x(net.input_dim());
    for (auto& v : x) v = rng.uniform(-2, 2);
    std::vector<double> og(net.output_dim());
    for (auto& v : og) v = rng.uniform(-1, 1);
    auto inner = [&](const ConditionerNet& n, std::span<const double> in) {
      auto y = reference_forward(n, {in.begin(), in.end()});
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * og[i];
      return s;
    };
    auto g = net_backward(net, x, og);
    auto fd_in = testing::central_difference([&](std::span<const double> in) { return inner(net, in); }, x);
    std::vector<double> p0(net.params().begin(), net.params().end());
    auto fd_p = testing::central_difference(
        [&](std::span<const double> p) {
          ConditionerNet n = net;
          std::copy(p.begin(), p.end(), n.params().begin());
          return inner(n, x);
        },
        p0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(testing::close_rel(g.input_grad[i], fd_in[i], 1e-4));
      ++checked;
    }
    for (std::size_t i = 0; i < p0.size(); ++i) {
      CHECK(testing::close_rel(g.param_grad.values[i], fd_p[i], 1e-4));
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("flatten/unflatten and coordinates") {
  auto net = init_net({2, 3, 1}, Activation::tanh(), 5);
  auto p = net.flatten();
  CHECK(p.size() == 2 * 3 + 3 + 3 + 1);
  auto c = p.coord(7);
  CHECK(c.layer == 0);
  CHECK(c.kind == ParamKind::bias);
  CHECK(c.index == 1);
  CHECK(p.coord(9).kind == ParamKind::weight);
  CHECK(p.coord(9).layer == 1);
  ConditionerNet other({2, 3, 1}, Activation::tanh());
  other.unflatten(p);
  CHECK(other == net);
  CHECK_THROWS_AS(p.coord(100), ShapeError);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves params unchanged") {
    auto s = AdamState::fresh(3);
    ParamVector p{{1.0, -2.0, 3.0}, {}};
    ParamVector g{{0.0, 0.0, 0.0}, {}};
    auto [np, ns] = adam_step(s, p, g);
    CHECK(np.values == p.values);
    CHECK(ns.step_count == 1);
  }
  SUBCASE("first step moves by lr") {
    for (double grad : {1e-3, 0.5, -7.0}) {
      auto s = AdamState::fresh(1, 0.001);
      ParamVector p{{0.0}, {}};
      auto [np, ns] = adam_step(s, p, ParamVector{{grad}, {}});
      CHECK(std::abs(np.values[0]) == doctest::Approx(0.001).epsilon(1e-4));
      CHECK((np.values[0] < 0) == (grad > 0));
      CHECK(ns.v[0] >= 0.0);
    }
  }
  SUBCASE("converges on a strongly convex scalar") {
    auto s = AdamState::fresh(1);
    std::vector<double> theta{0.0};
    std::size_t steps = 0;
    for (; steps < 10000 && std::abs(theta[0] - 3.0) >= 1e-3; ++steps) {
      std::vector<double> g{2.0 * (theta[0] - 3.0)};
      adam_update(s, theta, g);
    }
    CHECK(std::abs(theta[0] - 3.0) < 1e-3);
  }
  SUBCASE("length mismatch") {
    auto s = AdamState::fresh(2);
    CHECK_THROWS_AS(adam_step(s, ParamVector{{1.0}, {}}, ParamVector{{1.0}, {}}), ShapeError);
  }
}
