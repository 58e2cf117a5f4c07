#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carefl/datagen.hpp"
#include "carefl/discovery.hpp"

namespace carefl {

struct BenchmarkConfig {
  std::vector<Family> families;  // empty means the four bivariate families
  std::vector<std::size_t> sizes{25, 50, 100, 250, 500};
  std::size_t reps = 25;
  NoiseSpec noise;
  double coeff = 1.0;
  DiscoveryConfig discovery;  // discovery.train.seed is ignored
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void validate() const;
};

struct BenchmarkRow {
  Family family = Family::linear;
  std::size_t n = 0;
  std::size_t repetition = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  bool flipped = false;
  Direction truth = Direction::undecided;
  Direction decision = Direction::undecided;
  double R = 0.0;
  bool correct = false;
};

// Seeds for one repetition; the flip is drawn from the data seed.
std::uint64_t benchmark_data_seed(std::uint64_t seed, Family family, std::size_t n,
                                  std::size_t repetition);

// One row per (family, size, repetition), sorted in that order.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config);

// family,N,repetition,decision,R,correct
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

// Accuracy per (family, N) and decision-rate curves: accuracy among the
// fraction q of repetitions with the largest |R|.
nlohmann::json benchmark_summary(const std::vector<BenchmarkRow>& rows);
std::string decision_rate_csv(const std::vector<BenchmarkRow>& rows);

double accuracy(const std::vector<BenchmarkRow>& rows, Family family, std::size_t n);

}  // namespace carefl
