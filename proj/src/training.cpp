#include "carefl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "carefl/error.hpp"
#include "carefl/random.hpp"

namespace carefl {

using nlohmann::json;

namespace {
// Sub-seed streams.
constexpr std::uint64_t kSplitStream = 0x5311;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5400000000ULL;
}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) {
    throw ConfigError("scheduler factor must lie in (0, 1)");
  }
  if (scheduler.patience == 0) throw ConfigError("scheduler patience must be positive");
  if (!(scheduler.threshold >= 0.0)) throw ConfigError("scheduler threshold must be >= 0");
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
    throw ConfigError("split_fraction must lie in (0, 1]");
  }
  if (architecture.n_layers == 0) throw ConfigError("architecture needs at least one flow layer");
  for (auto h : architecture.hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
}

json architecture_to_json(const FlowArchitecture& a) {
  return {{"n_layers", a.n_layers},
          {"hidden_dims", a.hidden_dims},
          {"activation", activation_name(a.activation.kind)},
          {"slope", a.activation.slope}};
}

FlowArchitecture architecture_from_json(const json& j) {
  FlowArchitecture a;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_layers") {
      a.n_layers = value.get<std::size_t>();
    } else if (key == "hidden_dims") {
      a.hidden_dims = value.get<std::vector<std::size_t>>();
    } else if (key == "activation") {
      a.activation.kind = parse_activation(value.get<std::string>());
    } else if (key == "slope") {
      a.activation.slope = value.get<double>();
    } else {
      throw ConfigError("unknown architecture key '" + key + "'");
    }
  }
  return a;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"betas", {c.beta1, c.beta2}},
          {"epsilon", c.epsilon},
          {"scheduler",
           {{"factor", c.scheduler.factor},
            {"patience", c.scheduler.patience},
            {"threshold", c.scheduler.threshold}}},
          {"split_fraction", c.split_fraction},
          {"seed", c.seed},
          {"architecture", architecture_to_json(c.architecture)},
          {"base", base_name(c.base_kind)},
          {"additive", c.additive_only},
          {"standardize", c.standardize}};
}

void train_config_from_json(const json& j, TrainConfig& c) {
  try {
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("betas")) {
      auto b = j["betas"].get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("betas must have two entries");
      c.beta1 = b[0];
      c.beta2 = b[1];
    }
    if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
    if (j.contains("scheduler")) {
      for (const auto& [key, value] : j["scheduler"].items()) {
        if (key == "factor") {
          c.scheduler.factor = value.get<double>();
        } else if (key == "patience") {
          c.scheduler.patience = value.get<std::size_t>();
        } else if (key == "threshold") {
          c.scheduler.threshold = value.get<double>();
        } else {
          throw ConfigError("unknown scheduler key '" + key + "'");
        }
      }
    }
    if (j.contains("split_fraction")) c.split_fraction = j["split_fraction"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("architecture")) c.architecture = architecture_from_json(j["architecture"]);
    if (j.contains("base")) c.base_kind = parse_base(j["base"].get<std::string>());
    if (j.contains("additive")) c.additive_only = j["additive"].get<bool>();
    if (j.contains("standardize")) c.standardize = j["standardize"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string config_digest(const json& j) {
  // FNV-1a over the canonical (sorted-key) dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------------- split

Scaler fit_scaler(const Matrix& data) {
  if (data.rows() == 0) throw DataError("cannot fit a scaler on zero rows");
  Scaler s;
  s.mean.assign(data.cols(), 0.0);
  s.scale.assign(data.cols(), 0.0);
  const double n = static_cast<double>(data.rows());
  for (std::size_t c = 0; c < data.cols(); ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) m += data(r, c);
    m /= n;
    double v = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) v += (data(r, c) - m) * (data(r, c) - m);
    v /= n;
    s.mean[c] = m;
    s.scale[c] = std::max(std::sqrt(v), kStdFloor);
  }
  return s;
}

Matrix standardize(const Matrix& data, const Scaler& scaler) {
  Matrix out(data.rows(), data.cols());
  for (std::size_t r = 0; r < data.rows(); ++r)
    for (std::size_t c = 0; c < data.cols(); ++c) out(r, c) = scaler.to_standard(c, data(r, c));
  return out;
}

DataSplit split_standardize(const Matrix& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("split fraction must lie in (0, 1]");
  const std::size_t n = data.rows();
  if (n == 0) throw DataError("dataset is empty");
  if (n < 2 && fraction < 1.0) throw DataError("need at least 2 rows to split train/test");
  for (double v : data.data()) {
    if (!std::isfinite(v)) throw DataError("dataset contains non-finite values");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kSplitStream));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  DataSplit s;
  if (fraction >= 1.0) {
    s.train_indices = perm;
    s.test_indices = perm;
  } else {
    auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    s.train_indices.assign(perm.begin(), perm.begin() + n_train);
    s.test_indices.assign(perm.begin() + n_train, perm.end());
  }
  s.train = data.select_rows(s.train_indices);
  s.test = data.select_rows(s.test_indices);
  s.scaler = fit_scaler(s.train);
  return s;
}

// --------------------------------------------------------------------- fit

FitResult fit_flow(const Matrix& data, const CausalOrdering& ordering, const TrainConfig& config) {
  return fit_flow(data, BlockLayout::scalar(ordering), config);
}

FitResult fit_flow(const Matrix& data, const BlockLayout& layout, const TrainConfig& config) {
  config.validate();
  if (data.cols() != layout.dim()) {
    throw ShapeError("data has " + std::to_string(data.cols()) + " columns, ordering covers " +
                     std::to_string(layout.dim()));
  }
  return fit_flow_on_split(split_standardize(data, config.split_fraction, config.seed), layout,
                           config);
}

FitResult fit_flow_on_split(const DataSplit& split, const BlockLayout& layout,
                            const TrainConfig& config) {
  config.validate();
  layout.validate();
  if (split.train.cols() != layout.dim()) throw ShapeError("split does not match layout dimension");
  if (split.train.rows() == 0 || split.test.rows() == 0) throw DataError("empty train or test split");

  FitResult res;
  res.model = FlowModel::create(layout, config.architecture, config.base_kind,
                                config.additive_only, derive_seed(config.seed, kInitStream));
  Scaler scaler = split.scaler;
  if (!config.standardize) {
    scaler.mean.assign(layout.dim(), 0.0);
    scaler.scale.assign(layout.dim(), 1.0);
  }
  res.model.set_scaler(scaler);
  const Matrix train = standardize(split.train, scaler);
  const double log_jac = scaler.log_jacobian();

  FlowModel& model = res.model;
  std::vector<double> params = model.params();
  std::vector<double> grad(params.size());
  std::vector<double> descent(params.size());
  AdamState adam = AdamState::fresh(params.size(), config.lr, config.beta1, config.beta2,
                                    config.epsilon);
  FlowWorkspace ws(model);
  const EvalOptions train_opts{true};

  const std::size_t n = train.rows();
  std::vector<std::size_t> order(n);
  double best_loss = std::numeric_limits<double>::infinity();
  double best_ll = -std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, kShuffleStream + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    res.lr_curve.push_back(adam.lr);
    double epoch_ll = 0.0;
    try {
      for (std::size_t start = 0; start < n; start += config.batch_size) {
        const std::size_t stop = std::min(n, start + config.batch_size);
        const double w = 1.0 / static_cast<double>(stop - start);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t k = start; k < stop; ++k) {
          epoch_ll += ws.loglik_and_grad(model, train.row(order[k]), grad, w, train_opts);
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
          if (!std::isfinite(grad[i])) {
            throw TrainingDiverged("non-finite gradient in epoch " + std::to_string(epoch), epoch);
          }
          descent[i] = -grad[i];
        }
        adam_update(adam, params, descent);
        model.set_params(params);
      }
    } catch (const NumericError& e) {
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + e.what(),
                             epoch);
    }
    epoch_ll = epoch_ll / static_cast<double>(n) + log_jac;
    if (!std::isfinite(epoch_ll)) {
      throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), epoch);
    }
    res.train_curve.push_back(epoch_ll);
    best_ll = std::max(best_ll, epoch_ll);
    res.best_curve.push_back(best_ll);

    const double loss = -epoch_ll;
    if (loss < best_loss - config.scheduler.threshold) {
      best_loss = loss;
      bad_epochs = 0;
    } else if (++bad_epochs > config.scheduler.patience) {
      adam.lr *= config.scheduler.factor;
      ++res.plateau_events;
      bad_epochs = 0;
    }
  }

  res.final_lr = adam.lr;
  res.n_train = split.train.rows();
  res.n_test = split.test.rows();
  res.train_indices = split.train_indices;
  res.test_indices = split.test_indices;
  try {
    res.test_loglik = mean_log_likelihood(model, split.test);
  } catch (const NumericError& e) {
    throw TrainingDiverged(std::string("held-out evaluation failed: ") + e.what(), config.epochs);
  }
  if (!std::isfinite(res.test_loglik)) {
    throw TrainingDiverged("non-finite held-out log-likelihood after training", config.epochs);
  }
  return res;
}

}  // namespace carefl
