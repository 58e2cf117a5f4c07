// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "carefl/benchmark.hpp"
#include "carefl/cli.hpp"
#include "carefl/csv.hpp"
#include "carefl/datagen.hpp"
#include "carefl/flow.hpp"
#include "carefl/queries.hpp"
#include "carefl/random.hpp"
#include "carefl/training.hpp"
#include "schema_check.hpp"
#include "support.hpp"

using namespace carefl;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / ("carefl_accept_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// ---------------------------------------------------------------- 1

Outcome numerical_core() {
  using namespace carefl::testing;
  double grad = 0.0, roundtrip = 0.0, logdet = 0.0, offdiag = 0.0, mass = 0.0;
  Rng rng(2024);
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t d = 2 + seed % 3;
    const BaseKind base = seed % 2 ? BaseKind::gaussian : BaseKind::laplace;
    const Activation act = seed % 3 == 0 ? Activation::leaky_relu() : Activation::tanh();
    const auto ordering = some_orderings(d)[seed % some_orderings(d).size()];
    auto m = random_flow(ordering, 1 + seed % 3, {4}, act, base, seed + 500);
    if (seed % 4 == 1) m.set_scaler(Scaler{std::vector<double>(d, 0.1), std::vector<double>(d, 1.3)});

    Matrix batch(6, d);
    for (auto& v : batch.data()) v = rng.uniform(-2, 2);
    const auto g = loglik_gradient(m, batch).values;
    const auto fd = central_difference(
        [&](std::span<const double> p) {
          FlowModel c = m;
          c.set_params(p);
          return mean_log_likelihood(c, batch);
        },
        m.params());
    for (std::size_t i = 0; i < g.size(); ++i) {
      grad = std::max(grad, std::abs(g[i] - fd[i]) / std::max({1e-3, std::abs(g[i]), std::abs(fd[i])}));
    }

    m.set_scaler(std::nullopt);
    std::vector<double> z(d);
    for (auto& v : z) v = rng.uniform(-3, 3);
    roundtrip = std::max(roundtrip, max_abs_diff(flow_inverse(m, flow_forward(m, z)).z, z));
    roundtrip = std::max(roundtrip, max_abs_diff(flow_forward(m, flow_inverse(m, z).z), z));

    auto Ji = fd_jacobian([&](std::span<const double> in) { return flow_inverse(m, in).z; }, z);
    logdet = std::max(logdet, std::abs(log_abs_det(Ji) - flow_inverse(m, z).logdet_inv));

    auto Jf = fd_jacobian([&](std::span<const double> in) { return flow_forward(m, in); }, z);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (ordering.rank(j) > ordering.rank(i)) offdiag = std::max(offdiag, std::abs(Jf[i][j]));
  }
  for (BaseKind base : {BaseKind::laplace, BaseKind::gaussian}) {
    auto m = random_flow(CausalOrdering::from_sequence({1, 0}), 2, {3}, Activation::tanh(), base, 41, 0.25);
    FlowWorkspace ws(m);
    const double h = 0.04;
    const int n = static_cast<int>(40.0 / h);
    double total = 0.0;
    std::vector<double> x(2);
    for (int i = 0; i < n; ++i) {
      x[0] = -20.0 + (i + 0.5) * h;
      for (int j = 0; j < n; ++j) {
        x[1] = -20.0 + (j + 0.5) * h;
        total += std::exp(ws.loglik_and_grad(m, x, {}, 1.0, {}));
      }
    }
    mass = std::max(mass, std::abs(total * h * h - 1.0));
  }
  const bool pass = grad <= 1e-4 && roundtrip <= 1e-9 && logdet <= 1e-4 && offdiag <= 1e-8 && mass <= 1e-3;
  return {pass, "grad_rel=" + fmt(grad) + " (<=1e-4) roundtrip=" + fmt(roundtrip) +
                    " (<=1e-9) logdet=" + fmt(logdet) + " (<=1e-4) offdiag=" + fmt(offdiag) +
                    " (<=1e-8) mass_err=" + fmt(mass) + " (<=1e-3)"};
}

// ---------------------------------------------------------------- 2 and 3

constexpr std::uint64_t kBenchSeed = 0;

std::vector<BenchmarkRow> pair_benchmark(std::vector<Family> families, bool additive, NoiseSpec noise,
                                         std::size_t reps) {
  BenchmarkConfig bc;
  bc.families = std::move(families);
  bc.sizes = {500};
  bc.reps = reps;
  bc.noise = noise;
  bc.discovery.train.additive_only = additive;
  bc.seed = kBenchSeed;
  return run_benchmark(bc);
}

double laplace_ii_accuracy = -1.0;

Outcome pair_accuracy() {
  const auto affine = pair_benchmark(bivariate_families(), false, {}, 25);
  const auto ns = pair_benchmark({Family::linear, Family::nonlinear_additive}, true, {}, 25);
  bool pass = true;
  std::string detail = "affine:";
  for (auto f : bivariate_families()) {
    const double a = accuracy(affine, f, 500);
    if (f == Family::nonlinear_additive) laplace_ii_accuracy = a;
    pass = pass && a >= 0.85;
    detail += " " + family_name(f) + "=" + fmt(a);
  }
  detail += "; additive:";
  for (auto f : {Family::linear, Family::nonlinear_additive}) {
    const double a = accuracy(ns, f, 500);
    pass = pass && a >= 0.85;
    detail += " " + family_name(f) + "=" + fmt(a);
  }
  return {pass, detail + " (each >=0.85, N=500, 25 reps)"};
}

Outcome prior_mismatch() {
  const double matched = laplace_ii_accuracy >= 0.0
                             ? laplace_ii_accuracy
                             : accuracy(pair_benchmark({Family::nonlinear_additive}, false, {}, 25),
                                        Family::nonlinear_additive, 500);
  bool pass = true;
  std::string detail = "laplace=" + fmt(matched);
  for (const auto& noise : {NoiseSpec{NoiseKind::gaussian, 3.0}, NoiseSpec{NoiseKind::student_t, 3.0}}) {
    const double a = accuracy(pair_benchmark({Family::nonlinear_additive}, false, noise, 25),
                              Family::nonlinear_additive, 500);
    pass = pass && std::abs(a - matched) <= 0.10 + 1e-12;
    detail += " " + noise.to_string() + "=" + fmt(a);
  }
  return {pass, detail + " (within 0.10 of laplace, nonlinear_additive, N=500)"};
}

// ---------------------------------------------------------------- 4

Outcome highdim() {
  const auto rows = pair_benchmark({Family::highdim_pair}, false, {}, 10);
  const double a = accuracy(rows, Family::highdim_pair, 500);
  return {a >= 0.8, "group accuracy=" + fmt(a) + " (>=0.8, N=500, 10 reps)"};
}

// ---------------------------------------------------------------- 5

Outcome interventions() {
  SyntheticSpec s;
  s.family = Family::intervention_sem;
  s.n = 2500;
  s.seed = 0;
  const auto ds = generate(s);
  const double c2 = *ds.spec.c2;
  const auto fit = fit_flow(ds.data, CausalOrdering::identity(4), TrainConfig{});
  double mse3 = 0.0, mse4 = 0.0, mode_gap = 0.0;
  int k = 0;
  for (int i = -4; i <= 4; ++i, ++k) {
    const double a = 0.5 * i;
    const auto res = intervene(fit.model, {0, a, 100000, InterventionMode::sequential, derive_seed(1, k)});
    mse3 += (res.mean[2] - a) * (res.mean[2] - a);
    mse4 += (res.mean[3] - c2 * a * a) * (res.mean[3] - c2 * a * a);
    const auto z = intervention_noise(fit.model, 2000, derive_seed(2, k));
    const auto seq = intervene_on_noise(fit.model, 0, a, InterventionMode::sequential, z);
    const auto par = intervene_on_noise(fit.model, 0, a, InterventionMode::parallel, z);
    mode_gap = std::max(mode_gap, testing::max_abs_diff(seq.data(), par.data()));
  }
  mse3 /= k;
  mse4 /= k;
  const bool pass = mse3 <= 0.5 && mse4 <= 0.5 && mode_gap <= 1e-12;
  return {pass, "mse_x3=" + fmt(mse3) + " mse_x4=" + fmt(mse4) + " (each <=0.5, c2=" + fmt(c2) +
                    ") mode_gap=" + fmt(mode_gap) + " (<=1e-12)"};
}

// ---------------------------------------------------------------- 6

Outcome counterfactuals() {
  const std::vector<double> x_obs{2.00, 1.50, 0.81, -0.28};
  double err = 0.0, identity = 0.0;
  for (auto [c1, c2] : {std::pair{0.9, 1.3}, std::pair{1.2, 0.6}, std::pair{0.5, 1.5}}) {
    const auto m = testing::intervention_oracle(c1, c2);
    for (int i = -60; i <= 60; ++i) {
      const double a = 0.05 * i;
      const auto cf = counterfactual(m, {x_obs, 0, a});
      err = std::max(err, std::abs(cf[2] - (0.81 + (a - 2.0))));
      err = std::max(err, std::abs(cf[3] - (-0.28 + c2 * (a * a - 4.0))));
    }
    for (std::size_t j = 0; j < 4; ++j) {
      identity = std::max(identity, testing::max_abs_diff(counterfactual(m, {x_obs, j, x_obs[j]}), x_obs));
    }
  }
  return {err <= 1e-6 && identity <= 1e-9,
          "max_err=" + fmt(err) + " (<=1e-6) identity_err=" + fmt(identity) + " (<=1e-9)"};
}

// ---------------------------------------------------------------- 7

Outcome discover_cli() {
  const json schema = json::parse(slurp(CAREFL_SCHEMA_PATH));
  SyntheticSpec s;
  s.family = Family::modulated_noise;
  s.n = 300;
  s.seed = 5;
  const auto ds = generate(s);
  // A user file with its own column names, and one with no header at all.
  const auto named = (work_dir() / "user_named.csv").string();
  const auto bare = (work_dir() / "user_bare.csv").string();
  write_csv(named, ds.data, {"temperature", "altitude"});
  {
    std::ofstream f(bare);
    for (std::size_t r = 0; r < ds.data.rows(); ++r) {
      f << format_double(ds.data(r, 0)) << ',' << format_double(ds.data(r, 1)) << "\r\n";
    }
  }
  std::vector<std::string> problems;
  for (const auto& file : {named, bare}) {
    const auto run = cli({"discover", "--data", file, "--seed", "3"});
    if (run.code != 0) {
      problems.push_back(fs::path(file).filename().string() + ": exit " + std::to_string(run.code));
      continue;
    }
    const auto report = json::parse(run.out);
    for (const auto& e : testing::schema_errors(schema, report["results"])) problems.push_back(e);
    if (!report.contains("seed") || !report.contains("config_digest") || !report.contains("command")) {
      problems.push_back("report envelope incomplete");
    }
  }
  return {problems.empty(), problems.empty() ? "2 user CSVs, reports schema-valid"
                                             : "violations: " + problems.front()};
}

// ---------------------------------------------------------------- 8

std::string strip_clock(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    if (line.find("\"wall_clock_seconds\"") == std::string::npos) out += line + "\n";
  }
  return out;
}

Outcome determinism() {
  const auto dir = work_dir();
  const auto pair = (dir / "det_pair.csv").string();
  const auto sem = (dir / "det_sem.csv").string();
  const auto model = (dir / "det_model.json").string();
  cli({"simulate", "--family", "sigmoid_nonlinear_noise", "--n", "300", "--seed", "1", "--data", pair});
  cli({"simulate", "--family", "intervention_sem", "--n", "400", "--seed", "1", "--data", sem});
  const std::vector<std::vector<std::string>> commands{
      {"discover", "--data", pair, "--seed", "4"},
      {"order", "--data", pair, "--seed", "4", "--epochs", "50"},
      {"intervene", "--data", sem, "--target", "1", "--value", "-1,0.5", "--n-samples", "2000", "--seed", "4",
       "--epochs", "30", "--save-model", model},
      {"counterfactual", "--model", model, "--target", "1", "--value", "1.5", "--obs", "2,1.5,0.81,-0.28",
       "--seed", "4"},
      {"simulate", "--family", "highdim_pair", "--n", "200", "--seed", "4", "--data",
       (dir / "det_hd.csv").string()},
      {"benchmark", "--n", "40", "--reps", "3", "--seed", "4", "--epochs", "20"},
  };
  std::vector<std::string> differing;
  for (const auto& cmd : commands) {
    const auto a = cli(cmd);
    const auto b = cli(cmd);
    if (a.code != 0 || b.code != 0 || strip_clock(a.out) != strip_clock(b.out)) differing.push_back(cmd[0]);
  }
  std::string detail = "6 subcommands re-run";
  if (!differing.empty()) {
    detail += "; differing:";
    for (const auto& d : differing) detail += " " + d;
  }
  return {differing.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"numerical core", numerical_core},
      {"pair benchmark", pair_accuracy},
      {"noise mismatch", prior_mismatch},
      {"high-dimensional pair", highdim},
      {"interventions", interventions},
      {"counterfactuals", counterfactuals},
      {"discover on user CSV", discover_cli},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(work_dir(), ec);
  return failed == 0 ? 0 : 1;
}
