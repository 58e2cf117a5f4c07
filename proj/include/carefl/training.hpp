#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carefl/flow.hpp"
#include "carefl/matrix.hpp"

namespace carefl {

struct SchedulerConfig {
  double factor = 0.1;
  std::size_t patience = 10;
  double threshold = 1e-4;  // minimum improvement in nats

  bool operator==(const SchedulerConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  SchedulerConfig scheduler;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  FlowArchitecture architecture;
  BaseKind base_kind = BaseKind::laplace;
  bool additive_only = false;
  bool standardize = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
// Reads the keys it knows from `j` into `config`; unknown keys are left to
// the caller to reject.
void train_config_from_json(const nlohmann::json& j, TrainConfig& config);
nlohmann::json architecture_to_json(const FlowArchitecture& arch);
FlowArchitecture architecture_from_json(const nlohmann::json& j);
// Short stable hex digest of a JSON value's canonical dump.
std::string config_digest(const nlohmann::json& j);

struct DataSplit {
  Matrix train;  // original units
  Matrix test;
  Scaler scaler;  // fitted on train only
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Shuffles rows by seed; the first ceil(fraction * n) rows (at most n - 1
// when fraction < 1) train. fraction == 1 evaluates on the training rows.
DataSplit split_standardize(const Matrix& data, double fraction, std::uint64_t seed);
Matrix standardize(const Matrix& data, const Scaler& scaler);
Scaler fit_scaler(const Matrix& data);

inline constexpr double kStdFloor = 1e-8;

struct FitResult {
  FlowModel model;
  std::vector<double> train_curve;  // mean train log-likelihood per epoch
  std::vector<double> best_curve;   // running best of train_curve
  std::vector<double> lr_curve;     // learning rate used in each epoch
  std::size_t plateau_events = 0;
  double final_lr = 0.0;
  double test_loglik = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

FitResult fit_flow(const Matrix& data, const CausalOrdering& ordering, const TrainConfig& config);
FitResult fit_flow(const Matrix& data, const BlockLayout& layout, const TrainConfig& config);
// Fits on an existing split so several fits can share identical rows.
FitResult fit_flow_on_split(const DataSplit& split, const BlockLayout& layout,
                            const TrainConfig& config);

}  // namespace carefl
