#include "carefl/nn.hpp"

#include <algorithm>
#include <cmath>

#include "carefl/error.hpp"
#include "carefl/random.hpp"

namespace carefl {

std::string activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::identity: return "identity";
  }
  return "unknown";
}

ActivationKind parse_activation(const std::string& name) {
  if (name == "leaky_relu") return ActivationKind::leaky_relu;
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "identity") return ActivationKind::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

ParamCoord ParamVector::coord(std::size_t i) const {
  for (const auto& seg : segments) {
    if (i >= seg.offset && i < seg.offset + seg.size) {
      return {seg.owner, seg.layer, seg.kind, i - seg.offset};
    }
  }
  throw ShapeError("parameter index " + std::to_string(i) + " out of range");
}

namespace {

inline double activate(const Activation& a, double z) noexcept {
  switch (a.kind) {
    case ActivationKind::leaky_relu: return z > 0.0 ? z : a.slope * z;
    case ActivationKind::tanh: return std::tanh(z);
    case ActivationKind::identity: return z;
  }
  return z;
}

// Derivative expressed through (pre, post) so tanh can reuse its output.
inline double activate_grad(const Activation& a, double pre, double post) noexcept {
  switch (a.kind) {
    case ActivationKind::leaky_relu: return pre > 0.0 ? 1.0 : a.slope;
    case ActivationKind::tanh: return 1.0 - post * post;
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

ConditionerNet::ConditionerNet(std::vector<std::size_t> layer_dims, Activation activation)
    : dims_(std::move(layer_dims)), activation_(activation) {
  if (dims_.size() < 2) throw ConfigError("layer_dims needs at least input and output sizes");
  for (auto d : dims_) {
    if (d == 0) throw ConfigError("layer_dims entries must be >= 1");
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    w_off_.push_back(off);
    off += dims_[l] * dims_[l + 1];
    b_off_.push_back(off);
    off += dims_[l + 1];
  }
  params_.assign(off, 0.0);

  const std::size_t L = n_layers();
  act_off_.assign(L, 0);
  pre_off_.assign(L, 0);
  std::size_t cursor = dims_[0];
  for (std::size_t l = 0; l < L; ++l) {
    pre_off_[l] = cursor;
    cursor += dims_[l + 1];
    if (l + 1 < L) {
      act_off_[l + 1] = cursor;
      cursor += dims_[l + 1];
    }
  }
  tape_size_ = cursor;
}

std::span<double> ConditionerNet::weights(std::size_t l) {
  return {params_.data() + w_off_.at(l), dims_[l] * dims_[l + 1]};
}
std::span<const double> ConditionerNet::weights(std::size_t l) const {
  return {params_.data() + w_off_.at(l), dims_[l] * dims_[l + 1]};
}
std::span<double> ConditionerNet::biases(std::size_t l) {
  return {params_.data() + b_off_.at(l), dims_[l + 1]};
}
std::span<const double> ConditionerNet::biases(std::size_t l) const {
  return {params_.data() + b_off_.at(l), dims_[l + 1]};
}

void NetTape::reset(const ConditionerNet& net) {
  buf_.assign(net.tape_size(), 0.0);
  out_size_ = net.output_dim();
  out_off_ = buf_.size() - out_size_;
  std::size_t widest = 0;
  for (auto d : net.layer_dims()) widest = std::max(widest, d);
  grad_a_.assign(widest, 0.0);
  grad_b_.assign(widest, 0.0);
}

void ConditionerNet::forward(std::span<const double> input, NetTape& tape) const {
  if (input.size() != input_dim()) {
    throw ShapeError("net input has length " + std::to_string(input.size()) + ", expected " +
                     std::to_string(input_dim()));
  }
  if (tape.buf_.size() != tape_size() || tape.out_size_ != output_dim()) tape.reset(*this);
  double* buf = tape.buf_.data();
  std::copy(input.begin(), input.end(), buf);
  const double* a = buf;
  std::size_t cursor = dims_.front();
  const std::size_t last = n_layers() - 1;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const double* w = params_.data() + w_off_[l];
    const double* b = params_.data() + b_off_[l];
    double* pre = buf + cursor;
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* wr = w + o * in;
      for (std::size_t k = 0; k < in; ++k) s += wr[k] * a[k];
      pre[o] = s;
    }
    cursor += out;
    if (l == last) break;
    double* post = buf + cursor;
    for (std::size_t o = 0; o < out; ++o) post[o] = activate(activation_, pre[o]);
    cursor += out;
    a = post;
  }
}

std::vector<double> ConditionerNet::forward(std::span<const double> input) const {
  NetTape tape(*this);
  forward(input, tape);
  auto o = tape.output();
  return {o.begin(), o.end()};
}

void ConditionerNet::backward(const NetTape& tape, std::span<const double> output_grad,
                              std::span<double> param_grad,
                              std::span<double> input_grad) const {
  if (output_grad.size() != output_dim()) throw ShapeError("output_grad length mismatch");
  if (param_grad.size() != params_.size()) throw ShapeError("param_grad length mismatch");
  if (!input_grad.empty() && input_grad.size() != input_dim()) {
    throw ShapeError("input_grad length mismatch");
  }
  const double* buf = tape.buf_.data();
  const std::size_t L = n_layers();
  auto& delta = tape.grad_a_;
  auto& next = tape.grad_b_;
  std::copy(output_grad.begin(), output_grad.end(), delta.begin());
  for (std::size_t li = L; li-- > 0;) {
    const std::size_t in = dims_[li];
    const std::size_t out = dims_[li + 1];
    const double* a = buf + act_off_[li];
    const double* w = params_.data() + w_off_[li];
    double* gw = param_grad.data() + w_off_[li];
    double* gb = param_grad.data() + b_off_[li];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* gwr = gw + o * in;
      for (std::size_t k = 0; k < in; ++k) gwr[k] += d * a[k];
    }
    if (li == 0 && input_grad.empty()) break;
    std::fill(next.begin(), next.begin() + in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* wr = w + o * in;
      for (std::size_t k = 0; k < in; ++k) next[k] += wr[k] * d;
    }
    if (li == 0) {
      std::copy(next.begin(), next.begin() + in, input_grad.begin());
      break;
    }
    const double* pre = buf + pre_off_[li - 1];
    const double* post = buf + act_off_[li];
    for (std::size_t k = 0; k < in; ++k) next[k] *= activate_grad(activation_, pre[k], post[k]);
    std::swap(delta, next);
  }
}

void ConditionerNet::append_segments(std::vector<ParamSegment>& out, const std::string& owner,
                                     std::size_t base_offset) const {
  for (std::size_t l = 0; l < n_layers(); ++l) {
    out.push_back({owner, l, ParamKind::weight, base_offset + w_off_[l], dims_[l] * dims_[l + 1]});
    out.push_back({owner, l, ParamKind::bias, base_offset + b_off_[l], dims_[l + 1]});
  }
}

ParamVector ConditionerNet::flatten(const std::string& owner) const {
  ParamVector p;
  p.values = params_;
  append_segments(p.segments, owner, 0);
  return p;
}

void ConditionerNet::unflatten(const ParamVector& p) {
  if (p.values.size() != params_.size()) throw ShapeError("parameter vector length mismatch");
  params_ = p.values;
}

ConditionerNet init_net(const std::vector<std::size_t>& layer_dims, Activation activation,
                        std::uint64_t seed) {
  ConditionerNet net(layer_dims, activation);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer_dims[l]));
    for (double& w : net.weights(l)) w = rng.uniform(-bound, bound);
  }
  return net;
}

std::vector<double> net_forward(const ConditionerNet& net, std::span<const double> input) {
  return net.forward(input);
}

NetGradient net_backward(const ConditionerNet& net, std::span<const double> input,
                         std::span<const double> output_grad) {
  NetTape tape(net);
  net.forward(input, tape);
  NetGradient g;
  g.param_grad.values.assign(net.param_count(), 0.0);
  net.append_segments(g.param_grad.segments, {}, 0);
  g.input_grad.assign(net.input_dim(), 0.0);
  net.backward(tape, output_grad, g.param_grad.values, g.input_grad);
  return g;
}

AdamState AdamState::fresh(std::size_t n, double lr, double beta1, double beta2,
                           double epsilon) {
  if (!(lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void adam_update(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() ||
      s.v.size() != params.size()) {
    throw ShapeError("adam: params, grads and moments must have equal length");
  }
  ++s.step_count;
  const double t = static_cast<double>(s.step_count);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& grads) {
  ParamVector p = params;
  AdamState s = state;
  adam_update(s, p.values, grads.values);
  return {std::move(p), std::move(s)};
}

}  // namespace carefl
