#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carefl/matrix.hpp"
#include "carefl/nn.hpp"
#include "carefl/random.hpp"

namespace carefl {

// A permutation of variables. ranks()[j] is the 0-based causal rank of
// variable j; sequence()[k] is the variable at rank k (causes first).
class CausalOrdering {
 public:
  CausalOrdering() = default;
  static CausalOrdering from_ranks(std::vector<std::size_t> ranks);
  static CausalOrdering from_sequence(const std::vector<std::size_t>& sequence);
  static CausalOrdering identity(std::size_t d);

  std::size_t size() const noexcept { return ranks_.size(); }
  std::size_t rank(std::size_t variable) const { return ranks_.at(variable); }
  std::size_t variable_at(std::size_t rank) const { return sequence_.at(rank); }
  const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
  const std::vector<std::size_t>& sequence() const noexcept { return sequence_; }
  // "1,2,3"-style 1-based causal sequence.
  std::string to_string() const;

  bool operator==(const CausalOrdering&) const = default;

 private:
  std::vector<std::size_t> ranks_;
  std::vector<std::size_t> sequence_;
};

// Groups of variables in causal rank order. Scalar flows use one variable
// per group; the multivariate pair test uses two groups. Conditioners of a
// group read every variable of all earlier groups; variables inside one
// group are conditionally independent given earlier groups.
struct BlockLayout {
  std::vector<std::vector<std::size_t>> blocks;

  static BlockLayout scalar(const CausalOrdering& ordering);
  static BlockLayout two_groups(std::size_t first_size, std::size_t second_size,
                                bool second_causes_first = false);

  std::size_t dim() const noexcept;
  bool is_scalar() const noexcept;
  // Variable ranks obtained by flattening the groups in order.
  CausalOrdering variable_ordering() const;
  void validate() const;

  bool operator==(const BlockLayout&) const = default;
};

enum class BaseKind { laplace, gaussian };
std::string base_name(BaseKind kind);
BaseKind parse_base(const std::string& name);

// Isotropic zero-location unit-scale factorial density.
struct BaseDistribution {
  BaseKind kind = BaseKind::laplace;

  double log_density(double z) const noexcept;
  double log_density_grad(double z) const noexcept;
  double log_density(std::span<const double> z) const noexcept;
};

// Per-variable affine standardization: standard = (x - mean) / scale.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> to_standard(std::span<const double> x) const;
  std::vector<double> from_standard(std::span<const double> u) const;
  double to_standard(std::size_t var, double x) const { return (x - mean[var]) / scale[var]; }
  double from_standard(std::size_t var, double u) const { return u * scale[var] + mean[var]; }
  // log |d standard / d x|
  double log_jacobian() const noexcept;

  bool operator==(const Scaler&) const = default;
};

// Non-trainable conditioner supplied as a plain function (hand-built oracle
// models). Writes block-size outputs.
using FixedConditioner = std::function<void(std::span<const double> in, std::span<double> out)>;

enum class ConditionerRole { scale, shift };

// One group inside one affine layer.
struct BlockTransform {
  std::vector<std::size_t> vars;
  std::size_t input_dim = 0;  // total size of all earlier groups
  // Root group: learned constants.
  std::vector<double> s_const;
  std::vector<double> t_const;
  // Non-root group.
  ConditionerNet s_net;
  ConditionerNet t_net;
  std::shared_ptr<const FixedConditioner> s_fixed;
  std::shared_ptr<const FixedConditioner> t_fixed;

  bool is_root() const noexcept { return input_dim == 0; }
  bool has_fixed() const noexcept { return s_fixed || t_fixed; }
};

struct AffineLayer {
  std::vector<BlockTransform> blocks;  // rank order
};

struct FlowArchitecture {
  std::size_t n_layers = 2;
  std::vector<std::size_t> hidden_dims{10};
  Activation activation = Activation::leaky_relu(0.01);

  bool operator==(const FlowArchitecture&) const = default;
};

// Clamp applied to scale outputs before exponentiation while training.
inline constexpr double kScaleClamp = 7.0;

struct EvalOptions {
  bool clamp_scale = false;
};

// Stack of affine autoregressive layers sharing one layout. flow_forward
// applies layers()[0] first; flow_inverse runs them in reverse.
class FlowModel {
 public:
  FlowModel() = default;

  static FlowModel create(const BlockLayout& layout, const FlowArchitecture& arch,
                          BaseKind base, bool additive, std::uint64_t seed);
  static FlowModel create(const CausalOrdering& ordering, const FlowArchitecture& arch,
                          BaseKind base, bool additive, std::uint64_t seed);

  std::size_t dim() const noexcept { return layout_.dim(); }
  const BlockLayout& layout() const noexcept { return layout_; }
  CausalOrdering ordering() const { return layout_.variable_ordering(); }
  const FlowArchitecture& architecture() const noexcept { return arch_; }
  const BaseDistribution& base() const noexcept { return base_; }
  bool additive() const noexcept { return additive_; }
  bool trainable() const noexcept;
  bool empty() const noexcept { return layers_.empty(); }

  const std::vector<AffineLayer>& layers() const noexcept { return layers_; }
  std::vector<AffineLayer>& layers() noexcept { return layers_; }

  const std::optional<Scaler>& scaler() const noexcept { return scaler_; }
  void set_scaler(std::optional<Scaler> scaler);

  std::size_t param_count() const;
  std::vector<double> params() const;
  void set_params(std::span<const double> params);
  std::vector<ParamSegment> param_segments() const;

  BlockTransform& block_of(std::size_t layer, std::size_t variable);
  // Replace a non-root conditioner by a fixed function; the model stops
  // being trainable or serializable.
  void set_fixed_conditioner(std::size_t layer, std::size_t variable, ConditionerRole role,
                             FixedConditioner fn);

  // Throws StateError unless the model is structurally complete.
  void check_ready() const;

  // Used by deserialization; validates shapes.
  static FlowModel assemble(BlockLayout layout, FlowArchitecture arch, BaseKind base,
                            bool additive, std::vector<AffineLayer> layers,
                            std::optional<Scaler> scaler);

 private:
  BlockLayout layout_;
  FlowArchitecture arch_;
  BaseDistribution base_;
  bool additive_ = false;
  std::vector<AffineLayer> layers_;
  std::optional<Scaler> scaler_;
};

struct InverseResult {
  std::vector<double> z;
  double logdet_inv = 0.0;
};

// All operations below work in the flow's own (standardized) coordinates,
// except log_likelihood and sample which honor the model scaler.
std::vector<double> flow_forward(const FlowModel& model, std::span<const double> z);
InverseResult flow_inverse(const FlowModel& model, std::span<const double> x);

// Forward pass in which `variable` is forced to `value` at the output. Its
// intermediate values in every layer follow by inverting its transformer
// given the predecessors actually produced from z; its entry in z is
// ignored. Other variables follow the ordinary forward pass.
std::vector<double> flow_forward_pinned(const FlowModel& model, std::span<const double> z,
                                        std::size_t variable, double value);

double log_likelihood(const FlowModel& model, std::span<const double> x,
                      EvalOptions options = {});
double mean_log_likelihood(const FlowModel& model, const Matrix& data, EvalOptions options = {});

// Gradient of the mean log-likelihood over the rows of batch. Batch rows are
// in original units when the model has a scaler.
ParamVector loglik_gradient(const FlowModel& model, const Matrix& batch,
                            EvalOptions options = {});

Matrix sample(const FlowModel& model, std::size_t n, std::uint64_t seed);
std::vector<double> sample_base(const BaseDistribution& base, std::size_t d, Rng& rng);

// Reusable scratch for repeated likelihood / gradient evaluations.
class FlowWorkspace {
 public:
  explicit FlowWorkspace(const FlowModel& model);

  // Log-likelihood of one standardized row; accumulates d ll / d params
  // (scaled by weight) into grad when grad is non-empty.
  double loglik_and_grad(const FlowModel& model, std::span<const double> x_std,
                         std::span<double> grad, double weight, EvalOptions options);

 private:
  struct BlockScratch {
    NetTape s_tape;
    NetTape t_tape;
    std::vector<double> input;
    std::vector<double> s;
    std::vector<double> t;
    std::vector<double> z;
    std::vector<char> clamped;
    std::vector<double> ds;
    std::vector<double> dt;
    std::vector<double> din;
    std::size_t param_offset = 0;
  };
  std::vector<std::vector<BlockScratch>> scratch_;
  std::vector<std::vector<double>> levels_;
  std::vector<double> g_lo_;
  std::vector<double> g_hi_;
};

}  // namespace carefl
