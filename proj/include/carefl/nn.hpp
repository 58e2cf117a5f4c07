#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace carefl {

enum class ActivationKind { leaky_relu, tanh, identity };

struct Activation {
  ActivationKind kind = ActivationKind::leaky_relu;
  double slope = 0.01;  // only read for leaky_relu

  static Activation leaky_relu(double slope = 0.01) { return {ActivationKind::leaky_relu, slope}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
  static Activation identity() { return {ActivationKind::identity, 0.0}; }

  bool operator==(const Activation&) const = default;
};

std::string activation_name(ActivationKind kind);
ActivationKind parse_activation(const std::string& name);

enum class ParamKind { weight, bias, constant };

// Location of one scalar inside a flattened parameter vector.
struct ParamCoord {
  std::string owner;  // empty for a bare net; "layer0/rank1/s" etc. inside a flow
  std::size_t layer = 0;
  ParamKind kind = ParamKind::weight;
  std::size_t index = 0;
};

struct ParamSegment {
  std::string owner;
  std::size_t layer = 0;
  ParamKind kind = ParamKind::weight;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat parameter (or gradient) vector plus the segment table that maps each
// entry back to its owner.
struct ParamVector {
  std::vector<double> values;
  std::vector<ParamSegment> segments;

  std::size_t size() const noexcept { return values.size(); }
  ParamCoord coord(std::size_t i) const;
};

class ConditionerNet;

// Scratch space recording one forward pass so backward can reuse it.
class NetTape {
 public:
  NetTape() = default;
  explicit NetTape(const ConditionerNet& net) { reset(net); }
  void reset(const ConditionerNet& net);

  std::span<const double> output() const noexcept { return {buf_.data() + out_off_, out_size_}; }

 private:
  friend class ConditionerNet;
  std::vector<double> buf_;
  mutable std::vector<double> grad_a_;
  mutable std::vector<double> grad_b_;
  std::size_t out_off_ = 0;
  std::size_t out_size_ = 0;
};

// Fully connected feed-forward net. Parameters live in one contiguous buffer
// laid out as W0, b0, W1, b1, ... with each W row-major (out x in). Hidden
// layers apply the activation; the output layer is linear.
class ConditionerNet {
 public:
  ConditionerNet() = default;
  // All parameters zero. Throws ConfigError on invalid dims.
  ConditionerNet(std::vector<std::size_t> layer_dims, Activation activation);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t n_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  const Activation& activation() const noexcept { return activation_; }

  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  std::vector<double> forward(std::span<const double> input) const;
  void forward(std::span<const double> input, NetTape& tape) const;
  // Accumulates d<out, output_grad>/d(params) into param_grad and writes the
  // input gradient (may be empty to skip).
  void backward(const NetTape& tape, std::span<const double> output_grad,
                std::span<double> param_grad, std::span<double> input_grad) const;

  ParamVector flatten(const std::string& owner = {}) const;
  void unflatten(const ParamVector& p);
  void append_segments(std::vector<ParamSegment>& out, const std::string& owner,
                       std::size_t base_offset) const;

  bool operator==(const ConditionerNet&) const = default;

 private:
  friend class NetTape;
  std::size_t tape_size() const noexcept { return tape_size_; }

  std::vector<std::size_t> dims_;
  Activation activation_;
  std::vector<double> params_;
  std::vector<std::size_t> w_off_;
  std::vector<std::size_t> b_off_;
  // Tape layout: input, then (pre, post) per hidden layer, then output.
  // act_off_[l] is where layer l reads its input; pre_off_[l] its pre-activation.
  std::vector<std::size_t> act_off_;
  std::vector<std::size_t> pre_off_;
  std::size_t tape_size_ = 0;
};

ConditionerNet init_net(const std::vector<std::size_t>& layer_dims, Activation activation,
                        std::uint64_t seed);

std::vector<double> net_forward(const ConditionerNet& net, std::span<const double> input);

struct NetGradient {
  ParamVector param_grad;
  std::vector<double> input_grad;
};

NetGradient net_backward(const ConditionerNet& net, std::span<const double> input,
                         std::span<const double> output_grad);

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(std::size_t n, double lr = 1e-3, double beta1 = 0.9,
                         double beta2 = 0.999, double epsilon = 1e-8);
};

// In-place Adam update with bias correction.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads);

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& grads);

}  // namespace carefl
