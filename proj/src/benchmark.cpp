#include "carefl/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carefl/csv.hpp"
#include "carefl/error.hpp"
#include "carefl/parallel.hpp"
#include "carefl/random.hpp"

namespace carefl {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kFlipStream = 0xf11b;
constexpr std::uint64_t kTrainStream = 0x7a1;

std::vector<Family> families_of(const BenchmarkConfig& c) {
  return c.families.empty() ? bivariate_families() : c.families;
}

DirectionReport run_one(const GeneratedDataset& ds, const DiscoveryConfig& cfg) {
  if (ds.spec.family != Family::highdim_pair) return likelihood_ratio_bivariate(ds.data, cfg);
  std::vector<std::size_t> first(kHighdimBlock), second(kHighdimBlock);
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), kHighdimBlock);
  return group_direction(ds.data.select_cols(first), ds.data.select_cols(second), cfg);
}

const std::vector<double>& decision_rates() {
  static const std::vector<double> q{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  return q;
}

struct Cell {
  Family family;
  std::size_t n;
  std::vector<const BenchmarkRow*> rows;
};

std::vector<Cell> cells(const std::vector<BenchmarkRow>& rows) {
  std::vector<Cell> out;
  for (const auto& r : rows) {
    if (out.empty() || out.back().family != r.family || out.back().n != r.n) {
      out.push_back({r.family, r.n, {}});
    }
    out.back().rows.push_back(&r);
  }
  return out;
}

// Accuracy among the k most confident repetitions, k = ceil(q m).
std::vector<double> rate_curve(const Cell& cell) {
  auto sorted = cell.rows;
  std::stable_sort(sorted.begin(), sorted.end(), [](const BenchmarkRow* a, const BenchmarkRow* b) {
    return std::abs(a->R) > std::abs(b->R);
  });
  std::vector<double> curve;
  for (double q : decision_rates()) {
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()) - 1e-9)));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < k; ++i) hit += sorted[i]->correct;
    curve.push_back(static_cast<double>(hit) / static_cast<double>(k));
  }
  return curve;
}

}  // namespace

void BenchmarkConfig::validate() const {
  for (auto f : families_of(*this)) {
    if (f == Family::intervention_sem) {
      throw ConfigError("benchmark families must be pair families, not intervention_sem");
    }
  }
  if (sizes.empty()) throw ConfigError("benchmark needs at least one sample size");
  for (auto n : sizes) {
    if (n < 10) throw ConfigError("benchmark sample sizes must be at least 10");
  }
  if (reps == 0) throw ConfigError("benchmark repetitions must be positive");
  discovery.validate();
}

std::uint64_t benchmark_data_seed(std::uint64_t seed, Family family, std::size_t n,
                                  std::size_t repetition) {
  return derive_seed(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(family)), n),
                     repetition);
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  std::vector<BenchmarkRow> rows;
  for (auto f : families_of(config)) {
    for (auto n : config.sizes) {
      for (std::size_t r = 0; r < config.reps; ++r) {
        BenchmarkRow row;
        row.family = f;
        row.n = n;
        row.repetition = r;
        row.data_seed = benchmark_data_seed(config.seed, f, n, r);
        row.train_seed = derive_seed(row.data_seed, kTrainStream);
        row.flipped = Rng(derive_seed(row.data_seed, kFlipStream)).below(2) == 1;
        rows.push_back(row);
      }
    }
  }
  parallel_for(
      rows.size(),
      [&](std::size_t i) {
        auto& row = rows[i];
        SyntheticSpec spec;
        spec.family = row.family;
        spec.n = row.n;
        spec.seed = row.data_seed;
        spec.coeff = config.coeff;
        spec.noise = config.noise;
        spec.flip_direction = row.flipped;
        const auto ds = generate(spec);
        auto cfg = config.discovery;
        cfg.train.seed = row.train_seed;
        cfg.threads = 1;
        const auto rep = run_one(ds, cfg);
        row.truth = ds.true_direction;
        row.decision = rep.decision;
        row.R = rep.R;
        row.correct = rep.decision == row.truth;
      },
      config.threads);
  return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream os;
  os << "family,N,repetition,decision,R,correct\n";
  for (const auto& r : rows) {
    os << family_name(r.family) << ',' << r.n << ',' << r.repetition << ','
       << direction_name(r.decision) << ',' << format_double(r.R) << ',' << (r.correct ? 1 : 0)
       << '\n';
  }
  return os.str();
}

double accuracy(const std::vector<BenchmarkRow>& rows, Family family, std::size_t n) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (const auto& r : rows) {
    if (r.family != family || r.n != n) continue;
    ++total;
    hit += r.correct;
  }
  if (total == 0) throw ConfigError("no benchmark rows for " + family_name(family));
  return static_cast<double>(hit) / static_cast<double>(total);
}

json benchmark_summary(const std::vector<BenchmarkRow>& rows) {
  json table = json::array();
  for (const auto& c : cells(rows)) {
    std::size_t hit = 0;
    std::size_t undecided = 0;
    for (const auto* r : c.rows) {
      hit += r->correct;
      undecided += r->decision == Direction::undecided;
    }
    table.push_back({{"family", family_name(c.family)},
                     {"N", c.n},
                     {"repetitions", c.rows.size()},
                     {"accuracy", static_cast<double>(hit) / static_cast<double>(c.rows.size())},
                     {"undecided", undecided},
                     {"decision_rate", decision_rates()},
                     {"accuracy_at_rate", rate_curve(c)}});
  }
  json list = json::array();
  for (const auto& r : rows) {
    list.push_back({{"family", family_name(r.family)},
                    {"N", r.n},
                    {"repetition", r.repetition},
                    {"data_seed", r.data_seed},
                    {"train_seed", r.train_seed},
                    {"flipped", r.flipped},
                    {"truth", direction_name(r.truth)},
                    {"decision", direction_name(r.decision)},
                    {"R", r.R},
                    {"correct", r.correct}});
  }
  return {{"accuracy", table}, {"rows", list}, {"row_count", rows.size()}};
}

std::string decision_rate_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream os;
  os << "family,N,decision_rate,accuracy\n";
  for (const auto& c : cells(rows)) {
    const auto curve = rate_curve(c);
    for (std::size_t k = 0; k < curve.size(); ++k) {
      os << family_name(c.family) << ',' << c.n << ',' << format_double(decision_rates()[k]) << ','
         << format_double(curve[k]) << '\n';
    }
  }
  return os.str();
}

}  // namespace carefl
