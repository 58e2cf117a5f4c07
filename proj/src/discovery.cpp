#include "carefl/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>

#include <nlohmann/json.hpp>

#include "carefl/error.hpp"
#include "carefl/parallel.hpp"

namespace carefl {

using nlohmann::json;

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::x1_causes_x2:
      return "x1_causes_x2";
    case Direction::x2_causes_x1:
      return "x2_causes_x1";
    case Direction::undecided:
      break;
  }
  return "undecided";
}

Direction mirror(Direction d) noexcept {
  switch (d) {
    case Direction::x1_causes_x2:
      return Direction::x2_causes_x1;
    case Direction::x2_causes_x1:
      return Direction::x1_causes_x2;
    case Direction::undecided:
      break;
  }
  return Direction::undecided;
}

Direction decide(double ratio, double threshold) noexcept {
  if (ratio > threshold) return Direction::x1_causes_x2;
  if (ratio < -threshold) return Direction::x2_causes_x1;
  return Direction::undecided;
}

void DiscoveryConfig::validate() const {
  train.validate();
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw ConfigError("decision threshold must be finite and >= 0");
  }
  for (const auto& a : architectures) {
    auto c = train;
    c.architecture = a;
    c.validate();
  }
}

std::string discovery_digest(const DiscoveryConfig& config) {
  json archs = json::array();
  for (const auto& a : config.architectures) archs.push_back(architecture_to_json(a));
  return config_digest({{"train", train_config_to_json(config.train)},
                        {"architectures", archs},
                        {"threshold", config.threshold}});
}

json direction_report_to_json(const DirectionReport& r) {
  return {{"loglik_forward", r.loglik_forward},
          {"loglik_backward", r.loglik_backward},
          {"R", r.R},
          {"decision", direction_name(r.decision)},
          {"threshold", r.threshold},
          {"fit_meta",
           {{"seed", r.seed},
            {"config_digest", r.config_digest},
            {"n_train", r.n_train},
            {"n_test", r.n_test},
            {"forward_architecture", r.forward_architecture},
            {"backward_architecture", r.backward_architecture}}}};
}

json ordering_report_to_json(const OrderingReport& r) {
  json scores = json::array();
  for (const auto& s : r.scores) {
    scores.push_back({{"ordering", s.ordering.to_string()}, {"loglik", s.loglik}});
  }
  return {{"scores", scores},
          {"best", r.best.to_string()},
          {"fit_meta",
           {{"seed", r.seed},
            {"config_digest", r.config_digest},
            {"n_train", r.n_train},
            {"n_test", r.n_test}}}};
}

namespace {

std::vector<FlowArchitecture> candidate_architectures(const DiscoveryConfig& c) {
  if (c.architectures.empty()) return {c.train.architecture};
  return c.architectures;
}

struct Candidate {
  BlockLayout layout;
  std::string label;
};

struct Scored {
  double loglik = 0.0;
  std::size_t arch = 0;
};

// Fits every (candidate, architecture) pair on a shared split and keeps the
// best held-out likelihood per candidate.
std::vector<Scored> score_candidates(const DataSplit& split, const std::vector<Candidate>& cands,
                                     const DiscoveryConfig& config) {
  const auto archs = candidate_architectures(config);
  const std::size_t jobs = cands.size() * archs.size();
  std::vector<double> ll(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  parallel_for(
      jobs,
      [&](std::size_t k) {
        try {
          TrainConfig c = config.train;
          c.architecture = archs[k % archs.size()];
          ll[k] = fit_flow_on_split(split, cands[k / archs.size()].layout, c).test_loglik;
        } catch (...) {
          errors[k] = std::current_exception();
        }
      },
      config.threads);

  for (std::size_t k = 0; k < jobs; ++k) {
    if (!errors[k]) continue;
    const std::string where = "direction " + cands[k / archs.size()].label + ": ";
    try {
      std::rethrow_exception(errors[k]);
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged(where + e.what(), e.epoch());
    } catch (const NumericError& e) {
      throw NumericError(where + e.what());
    }
  }

  std::vector<Scored> best(cands.size());
  for (std::size_t c = 0; c < cands.size(); ++c) {
    best[c] = {ll[c * archs.size()], 0};
    for (std::size_t a = 1; a < archs.size(); ++a) {
      if (ll[c * archs.size() + a] > best[c].loglik) best[c] = {ll[c * archs.size() + a], a};
    }
  }
  return best;
}

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw DataError(std::string(what) + " contains non-finite values");
  }
}

DirectionReport direction_test(const Matrix& data, std::size_t d1, const DiscoveryConfig& config) {
  config.validate();
  const std::size_t d2 = data.cols() - d1;
  const auto split = split_standardize(data, config.train.split_fraction, config.train.seed);
  const std::vector<Candidate> cands{{BlockLayout::two_groups(d1, d2, false), "x1->x2"},
                                     {BlockLayout::two_groups(d1, d2, true), "x2->x1"}};
  const auto scored = score_candidates(split, cands, config);

  DirectionReport r;
  r.loglik_forward = scored[0].loglik;
  r.loglik_backward = scored[1].loglik;
  r.forward_architecture = scored[0].arch;
  r.backward_architecture = scored[1].arch;
  r.R = r.loglik_forward - r.loglik_backward;
  r.threshold = config.threshold;
  r.decision = decide(r.R, config.threshold);
  r.seed = config.train.seed;
  r.config_digest = discovery_digest(config);
  r.n_train = split.train.rows();
  r.n_test = split.test.rows();
  r.train_indices = split.train_indices;
  r.test_indices = split.test_indices;
  return r;
}

DiscoveryConfig wrap(const TrainConfig& c) {
  DiscoveryConfig d;
  d.train = c;
  return d;
}

}  // namespace

DirectionReport likelihood_ratio_bivariate(const Matrix& data, const DiscoveryConfig& config) {
  if (data.cols() != 2) {
    throw ShapeError("bivariate test needs exactly 2 columns, got " + std::to_string(data.cols()));
  }
  if (data.rows() < 10) {
    throw DataError("bivariate test needs at least 10 rows, got " + std::to_string(data.rows()));
  }
  check_finite(data, "data");
  return direction_test(data, 1, config);
}

DirectionReport likelihood_ratio_bivariate(const Matrix& data, const TrainConfig& config) {
  return likelihood_ratio_bivariate(data, wrap(config));
}

DirectionReport group_direction(const Matrix& x1, const Matrix& x2, const DiscoveryConfig& config) {
  if (x1.rows() != x2.rows()) {
    throw DataError("group blocks have different row counts: " + std::to_string(x1.rows()) +
                    " vs " + std::to_string(x2.rows()));
  }
  if (x1.cols() == 0 || x2.cols() == 0) throw ShapeError("group blocks need at least one column");
  if (x1.rows() < 2) throw DataError("group test needs at least 2 rows");
  check_finite(x1, "first group");
  check_finite(x2, "second group");
  return direction_test(hstack(x1, x2), x1.cols(), config);
}

DirectionReport group_direction(const Matrix& x1, const Matrix& x2, const TrainConfig& config) {
  return group_direction(x1, x2, wrap(config));
}

OrderingReport ordering_search(const Matrix& data, const DiscoveryConfig& config,
                               std::size_t max_d) {
  const std::size_t d = data.cols();
  if (d < 2) throw ShapeError("ordering search needs at least 2 columns");
  if (d > max_d) {
    throw InfeasibleError("ordering search over d=" + std::to_string(d) + " variables needs " +
                          std::to_string(d) + "! fits; exceeds max_d=" + std::to_string(max_d));
  }
  check_finite(data, "data");
  config.validate();
  const auto split = split_standardize(data, config.train.split_fraction, config.train.seed);

  std::vector<Candidate> cands;
  std::vector<std::size_t> seq(d);
  std::iota(seq.begin(), seq.end(), std::size_t{0});
  do {
    auto o = CausalOrdering::from_sequence(seq);
    cands.push_back({BlockLayout::scalar(o), o.to_string()});
  } while (std::next_permutation(seq.begin(), seq.end()));

  const auto scored = score_candidates(split, cands, config);
  OrderingReport r;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    r.scores.push_back({cands[k].layout.variable_ordering(), scored[k].loglik});
  }
  std::stable_sort(r.scores.begin(), r.scores.end(),
                   [](const OrderingScore& a, const OrderingScore& b) { return a.loglik > b.loglik; });
  r.best = r.scores.front().ordering;
  r.seed = config.train.seed;
  r.config_digest = discovery_digest(config);
  r.n_train = split.train.rows();
  r.n_test = split.test.rows();
  return r;
}

OrderingReport ordering_search(const Matrix& data, const TrainConfig& config, std::size_t max_d) {
  return ordering_search(data, wrap(config), max_d);
}

}  // namespace carefl
