#include "carefl/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "carefl/error.hpp"
#include "carefl/random.hpp"

namespace carefl {

// ---------------------------------------------------------------- ordering

CausalOrdering CausalOrdering::from_ranks(std::vector<std::size_t> ranks) {
  const std::size_t d = ranks.size();
  std::vector<std::size_t> seq(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    if (ranks[j] >= d || seq[ranks[j]] != d) {
      throw ConfigError("ordering is not a permutation of 0.." + std::to_string(d - 1));
    }
    seq[ranks[j]] = j;
  }
  CausalOrdering o;
  o.ranks_ = std::move(ranks);
  o.sequence_ = std::move(seq);
  return o;
}

CausalOrdering CausalOrdering::from_sequence(const std::vector<std::size_t>& sequence) {
  const std::size_t d = sequence.size();
  std::vector<std::size_t> ranks(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    if (sequence[k] >= d || ranks[sequence[k]] != d) {
      throw ConfigError("ordering sequence is not a permutation");
    }
    ranks[sequence[k]] = k;
  }
  return from_ranks(std::move(ranks));
}

CausalOrdering CausalOrdering::identity(std::size_t d) {
  std::vector<std::size_t> r(d);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return from_ranks(std::move(r));
}

std::string CausalOrdering::to_string() const {
  std::string out;
  for (std::size_t k = 0; k < sequence_.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(sequence_[k] + 1);
  }
  return out;
}

// ------------------------------------------------------------------ layout

BlockLayout BlockLayout::scalar(const CausalOrdering& ordering) {
  BlockLayout l;
  for (auto v : ordering.sequence()) l.blocks.push_back({v});
  return l;
}

BlockLayout BlockLayout::two_groups(std::size_t first_size, std::size_t second_size,
                                    bool second_causes_first) {
  if (first_size == 0 || second_size == 0) throw ConfigError("groups must be non-empty");
  std::vector<std::size_t> a(first_size), b(second_size);
  std::iota(a.begin(), a.end(), std::size_t{0});
  std::iota(b.begin(), b.end(), first_size);
  BlockLayout l;
  if (second_causes_first) {
    l.blocks = {b, a};
  } else {
    l.blocks = {a, b};
  }
  return l;
}

std::size_t BlockLayout::dim() const noexcept {
  std::size_t d = 0;
  for (const auto& b : blocks) d += b.size();
  return d;
}

bool BlockLayout::is_scalar() const noexcept {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.size() == 1; });
}

CausalOrdering BlockLayout::variable_ordering() const {
  std::vector<std::size_t> seq;
  for (const auto& b : blocks) seq.insert(seq.end(), b.begin(), b.end());
  return CausalOrdering::from_sequence(seq);
}

void BlockLayout::validate() const {
  if (blocks.empty()) throw ConfigError("layout has no groups");
  for (const auto& b : blocks) {
    if (b.empty()) throw ConfigError("layout contains an empty group");
  }
  (void)variable_ordering();
}

// -------------------------------------------------------------------- base

std::string base_name(BaseKind kind) {
  return kind == BaseKind::laplace ? "laplace" : "gaussian";
}

BaseKind parse_base(const std::string& name) {
  if (name == "laplace") return BaseKind::laplace;
  if (name == "gaussian") return BaseKind::gaussian;
  throw ConfigError("unknown base distribution '" + name + "'");
}

namespace {
constexpr double kLn2 = std::numbers::ln2;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

double BaseDistribution::log_density(double z) const noexcept {
  if (kind == BaseKind::laplace) return -std::abs(z) - kLn2;
  return -0.5 * z * z - kHalfLog2Pi;
}

double BaseDistribution::log_density_grad(double z) const noexcept {
  if (kind == BaseKind::laplace) return z > 0.0 ? -1.0 : (z < 0.0 ? 1.0 : 0.0);
  return -z;
}

double BaseDistribution::log_density(std::span<const double> z) const noexcept {
  double s = 0.0;
  for (double v : z) s += log_density(v);
  return s;
}

std::vector<double> sample_base(const BaseDistribution& base, std::size_t d, Rng& rng) {
  std::vector<double> z(d);
  for (auto& v : z) v = base.kind == BaseKind::laplace ? rng.laplace() : rng.normal();
  return z;
}

// ------------------------------------------------------------------ scaler

std::vector<double> Scaler::to_standard(std::span<const double> x) const {
  if (x.size() != mean.size()) throw ShapeError("scaler dimension mismatch");
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - mean[i]) / scale[i];
  return u;
}

std::vector<double> Scaler::from_standard(std::span<const double> u) const {
  if (u.size() != mean.size()) throw ShapeError("scaler dimension mismatch");
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) x[i] = u[i] * scale[i] + mean[i];
  return x;
}

double Scaler::log_jacobian() const noexcept {
  double s = 0.0;
  for (double c : scale) s -= std::log(c);
  return s;
}

// ------------------------------------------------------------------- model

FlowModel FlowModel::create(const BlockLayout& layout, const FlowArchitecture& arch,
                            BaseKind base, bool additive, std::uint64_t seed) {
  layout.validate();
  if (arch.n_layers == 0) throw ConfigError("flow needs at least one layer");
  FlowModel m;
  m.layout_ = layout;
  m.arch_ = arch;
  m.base_.kind = base;
  m.additive_ = additive;
  m.layers_.resize(arch.n_layers);
  for (std::size_t l = 0; l < arch.n_layers; ++l) {
    std::size_t preceding = 0;
    for (std::size_t r = 0; r < layout.blocks.size(); ++r) {
      BlockTransform bt;
      bt.vars = layout.blocks[r];
      bt.input_dim = preceding;
      const std::size_t width = bt.vars.size();
      if (bt.is_root()) {
        bt.s_const.assign(width, 0.0);
        bt.t_const.assign(width, 0.0);
      } else {
        std::vector<std::size_t> dims{preceding};
        dims.insert(dims.end(), arch.hidden_dims.begin(), arch.hidden_dims.end());
        dims.push_back(width);
        // Seeds depend on (layer, rank) only, so relabeling variables
        // leaves the fit unchanged.
        const std::uint64_t stream = (l << 32) | (r << 1);
        if (additive) {
          bt.s_net = ConditionerNet(dims, arch.activation);
        } else {
          bt.s_net = init_net(dims, arch.activation, derive_seed(seed, stream));
        }
        bt.t_net = init_net(dims, arch.activation, derive_seed(seed, stream | 1));
      }
      preceding += width;
      m.layers_[l].blocks.push_back(std::move(bt));
    }
  }
  return m;
}

FlowModel FlowModel::create(const CausalOrdering& ordering, const FlowArchitecture& arch,
                            BaseKind base, bool additive, std::uint64_t seed) {
  return create(BlockLayout::scalar(ordering), arch, base, additive, seed);
}

FlowModel FlowModel::assemble(BlockLayout layout, FlowArchitecture arch, BaseKind base,
                              bool additive, std::vector<AffineLayer> layers,
                              std::optional<Scaler> scaler) {
  layout.validate();
  FlowModel m;
  m.layout_ = std::move(layout);
  m.arch_ = std::move(arch);
  m.base_.kind = base;
  m.additive_ = additive;
  m.layers_ = std::move(layers);
  m.check_ready();
  m.set_scaler(std::move(scaler));
  return m;
}

bool FlowModel::trainable() const noexcept {
  for (const auto& layer : layers_)
    for (const auto& b : layer.blocks)
      if (b.has_fixed()) return false;
  return true;
}

void FlowModel::set_scaler(std::optional<Scaler> scaler) {
  if (scaler) {
    if (scaler->mean.size() != dim() || scaler->scale.size() != dim()) {
      throw ShapeError("scaler dimension does not match model");
    }
    for (double s : scaler->scale) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("scaler scales must be positive");
    }
  }
  scaler_ = std::move(scaler);
}

void FlowModel::check_ready() const {
  if (layers_.empty()) throw StateError("model has no layers");
  const std::size_t nb = layout_.blocks.size();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.blocks.size() != nb) {
      throw StateError("layer " + std::to_string(l) + " does not follow the model ordering");
    }
    std::size_t preceding = 0;
    for (std::size_t r = 0; r < nb; ++r) {
      const auto& b = layer.blocks[r];
      if (b.vars != layout_.blocks[r] || b.input_dim != preceding) {
        throw StateError("layer " + std::to_string(l) + " does not follow the model ordering");
      }
      const std::size_t w = b.vars.size();
      if (b.is_root()) {
        if (b.s_const.size() != w || b.t_const.size() != w) {
          throw StateError("layer " + std::to_string(l) + ": root constants missing");
        }
      } else {
        auto net_ok = [&](const ConditionerNet& n, bool fixed) {
          return fixed || (n.n_layers() > 0 && n.input_dim() == preceding && n.output_dim() == w);
        };
        if (!net_ok(b.s_net, b.s_fixed != nullptr) || !net_ok(b.t_net, b.t_fixed != nullptr)) {
          throw StateError("layer " + std::to_string(l) + " rank " + std::to_string(r) +
                           ": conditioner missing or mis-shaped");
        }
      }
      preceding += w;
    }
  }
}

std::size_t FlowModel::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_)
    for (const auto& b : layer.blocks)
      n += b.is_root() ? b.s_const.size() + b.t_const.size()
                       : b.s_net.param_count() + b.t_net.param_count();
  return n;
}

std::vector<double> FlowModel::params() const {
  std::vector<double> p;
  p.reserve(param_count());
  for (const auto& layer : layers_)
    for (const auto& b : layer.blocks) {
      if (b.is_root()) {
        p.insert(p.end(), b.s_const.begin(), b.s_const.end());
        p.insert(p.end(), b.t_const.begin(), b.t_const.end());
      } else {
        auto s = b.s_net.params();
        auto t = b.t_net.params();
        p.insert(p.end(), s.begin(), s.end());
        p.insert(p.end(), t.begin(), t.end());
      }
    }
  return p;
}

void FlowModel::set_params(std::span<const double> p) {
  if (p.size() != param_count()) throw ShapeError("flow parameter vector length mismatch");
  std::size_t off = 0;
  auto take = [&](std::span<double> dst) {
    std::copy(p.begin() + off, p.begin() + off + dst.size(), dst.begin());
    off += dst.size();
  };
  for (auto& layer : layers_)
    for (auto& b : layer.blocks) {
      if (b.is_root()) {
        take(b.s_const);
        take(b.t_const);
      } else {
        take(b.s_net.params());
        take(b.t_net.params());
      }
    }
}

std::vector<ParamSegment> FlowModel::param_segments() const {
  std::vector<ParamSegment> segs;
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    for (std::size_t r = 0; r < layer.blocks.size(); ++r) {
      const auto& b = layer.blocks[r];
      const std::string base = "layer" + std::to_string(l) + "/rank" + std::to_string(r);
      if (b.is_root()) {
        segs.push_back({base + "/s", 0, ParamKind::constant, off, b.s_const.size()});
        off += b.s_const.size();
        segs.push_back({base + "/t", 0, ParamKind::constant, off, b.t_const.size()});
        off += b.t_const.size();
      } else {
        b.s_net.append_segments(segs, base + "/s", off);
        off += b.s_net.param_count();
        b.t_net.append_segments(segs, base + "/t", off);
        off += b.t_net.param_count();
      }
    }
  }
  return segs;
}

BlockTransform& FlowModel::block_of(std::size_t layer, std::size_t variable) {
  auto& blocks = layers_.at(layer).blocks;
  for (auto& b : blocks) {
    if (std::find(b.vars.begin(), b.vars.end(), variable) != b.vars.end()) return b;
  }
  throw ShapeError("variable " + std::to_string(variable) + " not in model");
}

void FlowModel::set_fixed_conditioner(std::size_t layer, std::size_t variable,
                                      ConditionerRole role, FixedConditioner fn) {
  auto& b = block_of(layer, variable);
  if (b.is_root()) throw ConfigError("root groups use constants, not conditioners");
  auto ptr = std::make_shared<const FixedConditioner>(std::move(fn));
  if (role == ConditionerRole::scale) {
    b.s_fixed = std::move(ptr);
  } else {
    b.t_fixed = std::move(ptr);
  }
}

// -------------------------------------------------------------- evaluation

namespace {

void gather_inputs(const AffineLayer& layer, std::size_t rank, std::span<const double> values,
                   std::span<double> in) {
  std::size_t k = 0;
  for (std::size_t r = 0; r < rank; ++r)
    for (auto v : layer.blocks[r].vars) in[k++] = values[v];
}

std::string where(std::size_t layer, std::size_t var) {
  return "layer " + std::to_string(layer) + ", variable x" + std::to_string(var + 1);
}

// Scale and shift of one group given its predecessor inputs.
void conditioners(const BlockTransform& b, bool additive, std::span<const double> in,
                  std::span<double> s, std::span<double> t, const EvalOptions& opt,
                  NetTape* s_tape = nullptr, NetTape* t_tape = nullptr,
                  std::span<char> clamped = {}) {
  const std::size_t w = b.vars.size();
  if (b.is_root()) {
    std::copy(b.s_const.begin(), b.s_const.end(), s.begin());
    std::copy(b.t_const.begin(), b.t_const.end(), t.begin());
  } else {
    if (b.t_fixed) {
      (*b.t_fixed)(in, t);
    } else if (t_tape) {
      b.t_net.forward(in, *t_tape);
      auto o = t_tape->output();
      std::copy(o.begin(), o.end(), t.begin());
    } else {
      auto o = b.t_net.forward(in);
      std::copy(o.begin(), o.end(), t.begin());
    }
    if (additive) {
      // Only the output bias is live: a learned constant scale.
      auto bias = b.s_net.biases(b.s_net.n_layers() - 1);
      std::copy(bias.begin(), bias.end(), s.begin());
    } else if (b.s_fixed) {
      (*b.s_fixed)(in, s);
    } else if (s_tape) {
      b.s_net.forward(in, *s_tape);
      auto o = s_tape->output();
      std::copy(o.begin(), o.end(), s.begin());
    } else {
      auto o = b.s_net.forward(in);
      std::copy(o.begin(), o.end(), s.begin());
    }
  }
  for (std::size_t k = 0; k < w; ++k) {
    bool c = false;
    if (opt.clamp_scale && (s[k] > kScaleClamp || s[k] < -kScaleClamp)) {
      s[k] = std::clamp(s[k], -kScaleClamp, kScaleClamp);
      c = true;
    }
    if (!clamped.empty()) clamped[k] = c;
  }
}

void check_input(const FlowModel& model, std::span<const double> v, const char* what) {
  if (v.size() != model.dim()) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(v.size()) +
                     ", model dimension is " + std::to_string(model.dim()));
  }
  for (double e : v) {
    if (!std::isfinite(e)) throw NumericError(std::string(what) + " contains a non-finite value");
  }
}

struct PinSpec {
  std::size_t variable;
  double value;
};

std::vector<double> forward_impl(const FlowModel& model, std::span<const double> z,
                                 std::optional<PinSpec> pin) {
  model.check_ready();
  const std::size_t d = model.dim();
  const std::size_t L = model.layers().size();
  const EvalOptions opt{};
  // levels[l] holds the output of layer l-1 (levels[0] = z).
  std::vector<std::vector<double>> levels(L + 1, std::vector<double>(d, 0.0));
  std::copy(z.begin(), z.end(), levels[0].begin());
  const auto& layout = model.layout();
  std::vector<double> in, s, t;
  std::vector<double> pin_s(L), pin_t(L);
  // Rank-major sweep: a group is completed through every layer before the
  // next group starts. Equivalent to the layer-major pass.
  for (std::size_t r = 0; r < layout.blocks.size(); ++r) {
    const auto& vars = layout.blocks[r];
    const std::size_t w = vars.size();
    s.resize(w);
    t.resize(w);
    std::size_t pin_k = w;
    if (pin) {
      for (std::size_t k = 0; k < w; ++k)
        if (vars[k] == pin->variable) pin_k = k;
    }
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = model.layers()[l];
      const auto& b = layer.blocks[r];
      in.resize(b.input_dim);
      gather_inputs(layer, r, levels[l + 1], in);
      conditioners(b, model.additive(), in, s, t, opt);
      for (std::size_t k = 0; k < w; ++k) {
        if (k == pin_k) {
          pin_s[l] = s[k];
          pin_t[l] = t[k];
          continue;
        }
        const double y = std::exp(s[k]) * levels[l][vars[k]] + t[k];
        if (!std::isfinite(y)) throw NumericError("non-finite forward value at " + where(l, vars[k]));
        levels[l + 1][vars[k]] = y;
      }
    }
    if (pin_k < w) {
      const std::size_t v = vars[pin_k];
      levels[L][v] = pin->value;
      for (std::size_t l = L; l-- > 0;) {
        const double u = std::exp(-pin_s[l]) * (levels[l + 1][v] - pin_t[l]);
        if (!std::isfinite(u)) throw NumericError("non-finite pinned value at " + where(l, v));
        levels[l][v] = u;
      }
    }
  }
  return levels[L];
}

}  // namespace

std::vector<double> flow_forward(const FlowModel& model, std::span<const double> z) {
  check_input(model, z, "z");
  return forward_impl(model, z, std::nullopt);
}

std::vector<double> flow_forward_pinned(const FlowModel& model, std::span<const double> z,
                                        std::size_t variable, double value) {
  check_input(model, z, "z");
  if (variable >= model.dim()) throw ShapeError("pinned variable out of range");
  if (!std::isfinite(value)) throw NumericError("pinned value is not finite");
  return forward_impl(model, z, PinSpec{variable, value});
}

InverseResult flow_inverse(const FlowModel& model, std::span<const double> x) {
  check_input(model, x, "x");
  model.check_ready();
  const std::size_t L = model.layers().size();
  std::vector<double> hi(x.begin(), x.end());
  std::vector<double> lo(hi.size());
  std::vector<double> in, s, t;
  double logdet = 0.0;
  const EvalOptions opt{};
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers()[l];
    for (std::size_t r = 0; r < layer.blocks.size(); ++r) {
      const auto& b = layer.blocks[r];
      const std::size_t w = b.vars.size();
      in.resize(b.input_dim);
      s.resize(w);
      t.resize(w);
      gather_inputs(layer, r, hi, in);
      conditioners(b, model.additive(), in, s, t, opt);
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t v = b.vars[k];
        const double z = std::exp(-s[k]) * (hi[v] - t[k]);
        if (!std::isfinite(z)) throw NumericError("non-finite inverse value at " + where(l, v));
        lo[v] = z;
        logdet -= s[k];
      }
    }
    std::swap(hi, lo);
  }
  return {std::move(hi), logdet};
}

// --------------------------------------------------------------- workspace

FlowWorkspace::FlowWorkspace(const FlowModel& model) {
  model.check_ready();
  const std::size_t L = model.layers().size();
  scratch_.resize(L);
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    for (const auto& b : model.layers()[l].blocks) {
      BlockScratch bs;
      const std::size_t w = b.vars.size();
      if (!b.is_root()) {
        if (!b.s_fixed) bs.s_tape.reset(b.s_net);
        if (!b.t_fixed) bs.t_tape.reset(b.t_net);
      }
      bs.input.assign(b.input_dim, 0.0);
      bs.din.assign(b.input_dim, 0.0);
      bs.s.assign(w, 0.0);
      bs.t.assign(w, 0.0);
      bs.z.assign(w, 0.0);
      bs.ds.assign(w, 0.0);
      bs.dt.assign(w, 0.0);
      bs.clamped.assign(w, 0);
      bs.param_offset = off;
      off += b.is_root() ? 2 * w : b.s_net.param_count() + b.t_net.param_count();
      scratch_[l].push_back(std::move(bs));
    }
  }
  levels_.assign(L + 1, std::vector<double>(model.dim(), 0.0));
  g_lo_.assign(model.dim(), 0.0);
  g_hi_.assign(model.dim(), 0.0);
}

double FlowWorkspace::loglik_and_grad(const FlowModel& model, std::span<const double> x,
                                      std::span<double> grad, double weight,
                                      EvalOptions opt) {
  const std::size_t L = model.layers().size();
  const bool want_grad = !grad.empty();
  if (want_grad && !model.trainable()) {
    throw StateError("model has fixed conditioners and cannot be differentiated");
  }
  std::copy(x.begin(), x.end(), levels_[L].begin());
  double logdet = 0.0;
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers()[l];
    const auto& hi = levels_[l + 1];
    auto& lo = levels_[l];
    for (std::size_t r = 0; r < layer.blocks.size(); ++r) {
      const auto& b = layer.blocks[r];
      auto& sc = scratch_[l][r];
      gather_inputs(layer, r, hi, sc.input);
      conditioners(b, model.additive(), sc.input, sc.s, sc.t, opt, &sc.s_tape, &sc.t_tape,
                   sc.clamped);
      for (std::size_t k = 0; k < b.vars.size(); ++k) {
        const std::size_t v = b.vars[k];
        const double z = std::exp(-sc.s[k]) * (hi[v] - sc.t[k]);
        if (!std::isfinite(z)) throw NumericError("non-finite inverse value at " + where(l, v));
        sc.z[k] = z;
        lo[v] = z;
        logdet -= sc.s[k];
      }
    }
  }
  double base_ll = 0.0;
  for (const auto& blk : model.layout().blocks)
    for (auto v : blk) base_ll += model.base().log_density(levels_[0][v]);
  const double ll = base_ll + logdet;
  if (!want_grad) return ll;

  for (std::size_t v = 0; v < g_lo_.size(); ++v) {
    g_lo_[v] = weight * model.base().log_density_grad(levels_[0][v]);
  }
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = model.layers()[l];
    std::fill(g_hi_.begin(), g_hi_.end(), 0.0);
    for (std::size_t r = 0; r < layer.blocks.size(); ++r) {
      const auto& b = layer.blocks[r];
      auto& sc = scratch_[l][r];
      const std::size_t w = b.vars.size();
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t v = b.vars[k];
        const double g = g_lo_[v];
        const double e = std::exp(-sc.s[k]);
        g_hi_[v] += g * e;
        sc.dt[k] = -g * e;
        sc.ds[k] = sc.clamped[k] ? 0.0 : -g * sc.z[k] - weight;
      }
      double* gp = grad.data() + sc.param_offset;
      if (b.is_root()) {
        for (std::size_t k = 0; k < w; ++k) {
          gp[k] += sc.ds[k];
          gp[w + k] += sc.dt[k];
        }
        continue;
      }
      const std::size_t ns = b.s_net.param_count();
      const std::size_t nt = b.t_net.param_count();
      b.t_net.backward(sc.t_tape, sc.dt, {gp + ns, nt}, sc.din);
      std::size_t k = 0;
      for (std::size_t rr = 0; rr < r; ++rr)
        for (auto pv : layer.blocks[rr].vars) g_hi_[pv] += sc.din[k++];
      if (model.additive()) {
        for (std::size_t kk = 0; kk < w; ++kk) gp[ns - w + kk] += sc.ds[kk];
      } else {
        b.s_net.backward(sc.s_tape, sc.ds, {gp, ns}, sc.din);
        k = 0;
        for (std::size_t rr = 0; rr < r; ++rr)
          for (auto pv : layer.blocks[rr].vars) g_hi_[pv] += sc.din[k++];
      }
    }
    std::swap(g_lo_, g_hi_);
  }
  return ll;
}

// ---------------------------------------------------------- public wrappers

double log_likelihood(const FlowModel& model, std::span<const double> x, EvalOptions options) {
  check_input(model, x, "x");
  FlowWorkspace ws(model);
  if (model.scaler()) {
    const auto u = model.scaler()->to_standard(x);
    return ws.loglik_and_grad(model, u, {}, 1.0, options) + model.scaler()->log_jacobian();
  }
  return ws.loglik_and_grad(model, x, {}, 1.0, options);
}

double mean_log_likelihood(const FlowModel& model, const Matrix& data, EvalOptions options) {
  if (data.rows() == 0) throw DataError("cannot evaluate likelihood of an empty dataset");
  if (data.cols() != model.dim()) throw ShapeError("data columns do not match model dimension");
  FlowWorkspace ws(model);
  double total = 0.0;
  std::vector<double> u(model.dim());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto row = data.row(i);
    for (double e : row) {
      if (!std::isfinite(e)) throw NumericError("data row " + std::to_string(i) + " is not finite");
    }
    if (model.scaler()) {
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = model.scaler()->to_standard(j, row[j]);
      total += ws.loglik_and_grad(model, u, {}, 1.0, options);
    } else {
      total += ws.loglik_and_grad(model, row, {}, 1.0, options);
    }
  }
  double mean = total / static_cast<double>(data.rows());
  if (model.scaler()) mean += model.scaler()->log_jacobian();
  return mean;
}

ParamVector loglik_gradient(const FlowModel& model, const Matrix& batch, EvalOptions options) {
  if (batch.rows() == 0) throw DataError("gradient needs a non-empty batch");
  if (batch.cols() != model.dim()) throw ShapeError("batch columns do not match model dimension");
  FlowWorkspace ws(model);
  ParamVector g;
  g.values.assign(model.param_count(), 0.0);
  g.segments = model.param_segments();
  const double w = 1.0 / static_cast<double>(batch.rows());
  std::vector<double> u(model.dim());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    auto row = batch.row(i);
    if (model.scaler()) {
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = model.scaler()->to_standard(j, row[j]);
      ws.loglik_and_grad(model, u, g.values, w, options);
    } else {
      ws.loglik_and_grad(model, row, g.values, w, options);
    }
  }
  return g;
}

Matrix sample(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample count must be >= 1");
  model.check_ready();
  Rng rng(seed);
  Matrix out(n, model.dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto z = sample_base(model.base(), model.dim(), rng);
    auto x = flow_forward(model, z);
    if (model.scaler()) x = model.scaler()->from_standard(x);
    std::copy(x.begin(), x.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace carefl
