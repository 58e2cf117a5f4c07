#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carefl/flow.hpp"
#include "carefl/matrix.hpp"
#include "carefl/training.hpp"

namespace carefl {

enum class Direction { x1_causes_x2, x2_causes_x1, undecided };
std::string direction_name(Direction d);
Direction mirror(Direction d) noexcept;
Direction decide(double ratio, double threshold) noexcept;

struct DiscoveryConfig {
  TrainConfig train;
  // Candidate architectures; each direction keeps its best held-out fit.
  // Empty means train.architecture alone.
  std::vector<FlowArchitecture> architectures;
  double threshold = 0.0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct DirectionReport {
  double loglik_forward = 0.0;   // x1 before x2
  double loglik_backward = 0.0;  // x2 before x1
  double R = 0.0;
  Direction decision = Direction::undecided;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t forward_architecture = 0;  // index of the winning architecture
  std::size_t backward_architecture = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

nlohmann::json direction_report_to_json(const DirectionReport& r);

struct OrderingScore {
  CausalOrdering ordering;
  double loglik = 0.0;
};

struct OrderingReport {
  std::vector<OrderingScore> scores;  // descending by loglik
  CausalOrdering best;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

nlohmann::json ordering_report_to_json(const OrderingReport& r);

inline constexpr std::size_t kDefaultMaxOrderingDim = 5;

DirectionReport likelihood_ratio_bivariate(const Matrix& data, const DiscoveryConfig& config);
DirectionReport likelihood_ratio_bivariate(const Matrix& data, const TrainConfig& config);

// x1 and x2 are blocks of columns observed on the same rows.
DirectionReport group_direction(const Matrix& x1, const Matrix& x2, const DiscoveryConfig& config);
DirectionReport group_direction(const Matrix& x1, const Matrix& x2, const TrainConfig& config);

OrderingReport ordering_search(const Matrix& data, const DiscoveryConfig& config,
                               std::size_t max_d = kDefaultMaxOrderingDim);
OrderingReport ordering_search(const Matrix& data, const TrainConfig& config,
                               std::size_t max_d = kDefaultMaxOrderingDim);

// Digest of everything that determines a discovery result apart from data.
std::string discovery_digest(const DiscoveryConfig& config);

}  // namespace carefl
