#include "carefl/cli.hpp"

#include <chrono>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "carefl/benchmark.hpp"
#include "carefl/csv.hpp"
#include "carefl/datagen.hpp"
#include "carefl/discovery.hpp"
#include "carefl/error.hpp"
#include "carefl/queries.hpp"
#include "carefl/random.hpp"
#include "carefl/serialize.hpp"
#include "carefl/training.hpp"

namespace carefl {

using json = nlohmann::json;

namespace {

enum class Kind { uint, real, text, reals, uints, texts, boolean };

struct FlagDef {
  const char* flag;
  const char* key;
  Kind kind;
  const char* help;
};

const FlagDef kConfig{"--config", "config", Kind::text, "JSON run configuration; flags override it"};
const FlagDef kSeed{"--seed", "seed", Kind::uint, "master seed (entropy-derived and recorded when omitted)"};
const FlagDef kOut{"--out", "out", Kind::text, "write the report to this file instead of stdout"};
const FlagDef kThreads{"--threads", "threads", Kind::uint, "worker threads (0 = all cores)"};
const FlagDef kEpochs{"--epochs", "epochs", Kind::uint, "training epochs"};
const FlagDef kAdditive{"--additive", "additive", Kind::boolean, "additive flows (input-free scale)"};
const FlagDef kData{"--data", "data", Kind::text, "CSV dataset"};
const FlagDef kThreshold{"--threshold", "threshold", Kind::real, "undecided band for |R|"};
const FlagDef kMaxD{"--max-d", "max_d", Kind::uint, "largest dimension for exhaustive search"};
const FlagDef kModel{"--model", "model", Kind::text, "saved model JSON instead of fitting --data"};
const FlagDef kSaveModel{"--save-model", "save_model", Kind::text, "write the fitted model JSON"};
const FlagDef kOrdering{"--ordering", "ordering", Kind::uints, "causal order as 1-based columns, e.g. 1,2,3"};
const FlagDef kTarget{"--target", "target", Kind::uint, "intervened variable (1-based)"};
const FlagDef kValue{"--value", "value", Kind::reals, "intervention value(s), comma-separated"};
const FlagDef kNSamples{"--n-samples", "n_samples", Kind::uint, "Monte Carlo samples per value"};
const FlagDef kMode{"--mode", "mode", Kind::text, "sequential or parallel"};
const FlagDef kObs{"--obs", "obs", Kind::reals, "observed vector, comma-separated"};
const FlagDef kFamily{"--family", "family", Kind::texts, "synthetic family (benchmark: comma list)"};
const FlagDef kN{"--n", "n", Kind::uints, "sample size (benchmark: comma list)"};
const FlagDef kReps{"--reps", "reps", Kind::uint, "benchmark repetitions"};
const FlagDef kNoise{"--noise", "noise", Kind::text, "laplace, gaussian, student_t[:dof]"};
const FlagDef kCoeff{"--coeff", "coeff", Kind::real, "family coefficient"};
const FlagDef kFlip{"--flip", "flip", Kind::boolean, "swap cause and effect columns"};
const FlagDef kTruth{"--truth", "truth", Kind::text, "ground-truth JSON path"};
const FlagDef kCsv{"--csv", "csv", Kind::text, "benchmark rows CSV"};
const FlagDef kCurves{"--curves", "curves", Kind::text, "decision-rate curves CSV"};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      // TrainConfig
      "epochs", "batch_size", "lr", "betas", "epsilon", "scheduler", "split_fraction", "seed",
      "architecture", "base", "additive", "standardize",
      // subcommands
      "architectures", "threshold", "threads", "data", "model", "save_model", "ordering", "target",
      "value", "n_samples", "mode", "obs", "family", "n", "reps", "noise", "coeff", "flip", "truth",
      "csv", "curves", "max_d", "out"};
  return keys;
}

// ------------------------------------------------------------ conversions

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  auto [p, ec] = std::from_chars(first, end, v);
  if (ec != std::errc() || p != end || first == end) {
    throw ConfigError(what + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) parts.push_back(cur);
  if (!s.empty() && s.back() == ',') parts.emplace_back();
  return parts;
}

json flag_value(const FlagDef& def, const std::string& raw) {
  const std::string what = def.flag;
  switch (def.kind) {
    case Kind::uint:
      return parse_uint(raw, what);
    case Kind::real:
      return parse_real(raw, what);
    case Kind::text:
      return raw;
    case Kind::boolean:
      return true;
    case Kind::reals: {
      json a = json::array();
      for (const auto& p : split_commas(raw)) a.push_back(parse_real(p, what));
      return a;
    }
    case Kind::uints: {
      json a = json::array();
      for (const auto& p : split_commas(raw)) a.push_back(parse_uint(p, what));
      return a;
    }
    case Kind::texts: {
      json a = json::array();
      for (const auto& p : split_commas(raw)) a.push_back(p);
      return a;
    }
  }
  return raw;
}

// Scalars are accepted where lists are expected and vice versa for
// one-element lists.
json as_list(const json& v) { return v.is_array() ? v : json::array({v}); }

template <class T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    const json& v = cfg.at(key);
    if (v.is_array() && v.size() == 1) return v[0].get<T>();
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <class T>
std::vector<T> get_list(const json& cfg, const std::string& key, std::vector<T> fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return as_list(cfg.at(key)).get<std::vector<T>>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::string require_text(const json& cfg, const std::string& key, const std::string& flag) {
  if (!cfg.contains(key)) throw ConfigError("missing " + flag);
  return get_or<std::string>(cfg, key, "");
}

std::size_t one_based(std::size_t v, const std::string& what) {
  if (v == 0) throw ConfigError(what + " is 1-based; 0 is not a column");
  return v - 1;
}

Family parse_family_alias(const std::string& name) {
  static const std::map<std::string, Family> aliases{{"i", Family::linear},
                                                     {"ii", Family::nonlinear_additive},
                                                     {"iii", Family::modulated_noise},
                                                     {"iv", Family::sigmoid_nonlinear_noise},
                                                     {"highdim", Family::highdim_pair}};
  auto it = aliases.find(name);
  return it != aliases.end() ? it->second : parse_family(name);
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path + "'");
}

// ------------------------------------------------------------- run context

struct Run {
  std::string subcommand;
  json cfg;        // merged file + flags
  json resolved;   // effective settings echoed in the report
  std::uint64_t seed = 0;
  std::string seed_source;
  TrainConfig train;
  json input = json::object();
};

json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + one_line(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  return j;
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void resolve_common(Run& run) {
  for (const auto& [key, value] : run.cfg.items()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (run.cfg.contains("seed")) {
    run.seed = get_or<std::uint64_t>(run.cfg, "seed", 0);
  } else {
    run.seed = entropy_seed();
    run.seed_source = "entropy";
  }
  json train_part = json::object();
  for (const auto& key : {"epochs", "batch_size", "lr", "betas", "epsilon", "scheduler",
                          "split_fraction", "architecture", "base", "additive", "standardize"}) {
    if (run.cfg.contains(key)) train_part[key] = run.cfg[key];
  }
  train_config_from_json(train_part, run.train);
  run.train.seed = run.seed;
  run.train.validate();
  run.resolved["train"] = train_config_to_json(run.train);
  run.resolved["seed"] = run.seed;
}

std::size_t threads_of(const Run& run) { return get_or<std::size_t>(run.cfg, "threads", 0); }

DiscoveryConfig discovery_config(Run& run) {
  DiscoveryConfig dc;
  dc.train = run.train;
  dc.threshold = get_or<double>(run.cfg, "threshold", 0.0);
  dc.threads = threads_of(run);
  if (run.cfg.contains("architectures")) {
    if (!run.cfg["architectures"].is_array()) throw ConfigError("architectures must be a list");
    try {
      for (const auto& a : run.cfg["architectures"]) dc.architectures.push_back(architecture_from_json(a));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("architectures: ") + one_line(e.what()));
    }
  }
  dc.validate();
  json archs = json::array();
  for (const auto& a : dc.architectures) archs.push_back(architecture_to_json(a));
  run.resolved["architectures"] = archs;
  run.resolved["threshold"] = dc.threshold;
  return dc;
}

CsvTable load_input(Run& run) {
  const auto path = require_text(run.cfg, "data", "--data");
  auto table = load_csv(path);
  run.resolved["data"] = path;
  run.input = {{"path", path}, {"rows", table.data.rows()}, {"columns", table.names}};
  return table;
}

// ---------------------------------------------------------------- commands

json cmd_discover(Run& run) {
  const auto table = load_input(run);
  const auto dc = discovery_config(run);
  return direction_report_to_json(likelihood_ratio_bivariate(table.data, dc));
}

json cmd_order(Run& run) {
  const auto table = load_input(run);
  const auto dc = discovery_config(run);
  const auto max_d = get_or<std::size_t>(run.cfg, "max_d", kDefaultMaxOrderingDim);
  run.resolved["max_d"] = max_d;
  return ordering_report_to_json(ordering_search(table.data, dc, max_d));
}

struct LoadedModel {
  FlowModel model;
  std::vector<std::string> names;
  json fit = json::object();
};

LoadedModel obtain_model(Run& run) {
  const bool has_model = run.cfg.contains("model");
  const bool has_data = run.cfg.contains("data");
  if (has_model == has_data) throw ConfigError("give exactly one of --data or --model");
  LoadedModel lm;
  if (has_model) {
    const auto path = get_or<std::string>(run.cfg, "model", "");
    lm.model = load_model(path);
    run.resolved["model"] = path;
    for (std::size_t j = 0; j < lm.model.dim(); ++j) lm.names.push_back("x" + std::to_string(j + 1));
    lm.fit = {{"source", "file"}, {"path", path}, {"ordering", lm.model.ordering().to_string()}};
  } else {
    const auto table = load_input(run);
    std::vector<std::size_t> seq;
    for (auto v : get_list<std::size_t>(run.cfg, "ordering", {})) seq.push_back(one_based(v, "--ordering"));
    if (seq.empty()) {
      for (std::size_t j = 0; j < table.data.cols(); ++j) seq.push_back(j);
    }
    if (seq.size() != table.data.cols()) {
      throw ShapeError("ordering names " + std::to_string(seq.size()) + " variables, data has " +
                       std::to_string(table.data.cols()) + " columns");
    }
    const auto ordering = CausalOrdering::from_sequence(seq);
    auto fit = fit_flow(table.data, ordering, run.train);
    lm.model = std::move(fit.model);
    lm.names = table.names;
    lm.fit = {{"source", "fit"},
              {"ordering", ordering.to_string()},
              {"test_loglik", fit.test_loglik},
              {"n_train", fit.n_train},
              {"n_test", fit.n_test},
              {"final_lr", fit.final_lr},
              {"seed", run.train.seed}};
    run.resolved["ordering"] = ordering.to_string();
  }
  if (run.cfg.contains("save_model")) {
    const auto path = get_or<std::string>(run.cfg, "save_model", "");
    save_model(lm.model, path);
    run.resolved["save_model"] = path;
  }
  return lm;
}

std::size_t target_of(Run& run) {
  if (!run.cfg.contains("target")) throw ConfigError("missing --target");
  const auto t = get_or<std::size_t>(run.cfg, "target", 1);
  run.resolved["target"] = t;
  return one_based(t, "--target");
}

std::vector<double> values_of(Run& run) {
  if (!run.cfg.contains("value")) throw ConfigError("missing --value");
  auto v = get_list<double>(run.cfg, "value", {});
  if (v.empty()) throw ConfigError("--value needs at least one number");
  run.resolved["value"] = v;
  return v;
}

json cmd_intervene(Run& run) {
  const auto target = target_of(run);
  const auto values = values_of(run);
  const auto n = get_or<std::size_t>(run.cfg, "n_samples", 1000);
  const auto mode = parse_mode(get_or<std::string>(run.cfg, "mode", "sequential"));
  run.resolved["n_samples"] = n;
  run.resolved["mode"] = mode_name(mode);
  const auto lm = obtain_model(run);
  json table = json::array();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const std::uint64_t seed = derive_seed(run.seed, 0x1000 + k);
    const auto res = intervene(lm.model, {target, values[k], n, mode, seed}, threads_of(run));
    table.push_back({{"value", values[k]}, {"seed", seed}, {"mean", res.mean}, {"std_error", res.std_error}});
  }
  return {{"target", target + 1},
          {"mode", mode_name(mode)},
          {"n_samples", n},
          {"columns", lm.names},
          {"model", lm.fit},
          {"table", table}};
}

json cmd_counterfactual(Run& run) {
  const auto target = target_of(run);
  const auto values = values_of(run);
  if (!run.cfg.contains("obs")) throw ConfigError("missing --obs");
  const auto obs = get_list<double>(run.cfg, "obs", {});
  run.resolved["obs"] = obs;
  const auto lm = obtain_model(run);
  json table = json::array();
  for (double a : values) {
    table.push_back({{"value", a}, {"counterfactual", counterfactual(lm.model, {obs, target, a})}});
  }
  return {{"target", target + 1}, {"obs", obs}, {"columns", lm.names}, {"model", lm.fit}, {"table", table}};
}

SyntheticSpec synthetic_spec(Run& run, Family family, std::size_t n) {
  SyntheticSpec s;
  s.family = family;
  s.n = n;
  s.seed = run.seed;
  s.coeff = get_or<double>(run.cfg, "coeff", 1.0);
  s.noise = NoiseSpec::parse(get_or<std::string>(run.cfg, "noise", "laplace"));
  s.flip_direction = get_or<bool>(run.cfg, "flip", false);
  return s;
}

std::string truth_path_for(const std::string& csv) {
  const std::string ext = ".csv";
  if (csv.size() > ext.size() && csv.compare(csv.size() - ext.size(), ext.size(), ext) == 0) {
    return csv.substr(0, csv.size() - ext.size()) + ".truth.json";
  }
  return csv + ".truth.json";
}

json cmd_simulate(Run& run) {
  const auto families = get_list<std::string>(run.cfg, "family", {});
  if (families.size() != 1) throw ConfigError("simulate needs exactly one --family");
  const auto sizes = get_list<std::size_t>(run.cfg, "n", {500});
  if (sizes.size() != 1) throw ConfigError("simulate needs exactly one --n");
  const auto csv = require_text(run.cfg, "data", "--data (output CSV)");
  const auto truth = get_or<std::string>(run.cfg, "truth", truth_path_for(csv));
  auto spec = synthetic_spec(run, parse_family_alias(families[0]), sizes[0]);
  const auto ds = generate(spec);
  save_dataset(ds, csv, truth);
  run.resolved["generator"] = spec_to_json(spec);
  run.resolved["data"] = csv;
  run.resolved["truth"] = truth;
  return {{"csv", csv},
          {"truth_path", truth},
          {"rows", ds.data.rows()},
          {"cols", ds.data.cols()},
          {"truth", truth_json(ds)}};
}

json cmd_benchmark(Run& run) {
  BenchmarkConfig bc;
  for (const auto& f : get_list<std::string>(run.cfg, "family", {})) {
    bc.families.push_back(parse_family_alias(f));
  }
  bc.sizes = get_list<std::size_t>(run.cfg, "n", bc.sizes);
  bc.reps = get_or<std::size_t>(run.cfg, "reps", bc.reps);
  bc.noise = NoiseSpec::parse(get_or<std::string>(run.cfg, "noise", "laplace"));
  bc.coeff = get_or<double>(run.cfg, "coeff", 1.0);
  bc.discovery = discovery_config(run);
  bc.seed = run.seed;
  bc.threads = threads_of(run);
  bc.validate();
  json fams = json::array();
  for (auto f : bc.families.empty() ? bivariate_families() : bc.families) fams.push_back(family_name(f));
  run.resolved["family"] = fams;
  run.resolved["n"] = bc.sizes;
  run.resolved["reps"] = bc.reps;
  run.resolved["noise"] = bc.noise.to_string();
  run.resolved["coeff"] = bc.coeff;
  const auto rows = run_benchmark(bc);
  auto results = benchmark_summary(rows);
  results["seeding"] =
      "data_seed = derive(derive(derive(seed, family), N), repetition); "
      "train_seed = derive(data_seed, 0x7a1); flip drawn from derive(data_seed, 0xf11b)";
  if (run.cfg.contains("csv")) {
    const auto path = get_or<std::string>(run.cfg, "csv", "");
    write_text(path, benchmark_csv(rows));
    results["csv"] = path;
  }
  if (run.cfg.contains("curves")) {
    const auto path = get_or<std::string>(run.cfg, "curves", "");
    write_text(path, decision_rate_csv(rows));
    results["curves"] = path;
  }
  return results;
}

// ------------------------------------------------------------------ parser

struct Subcommand {
  const char* name;
  const char* help;
  std::vector<FlagDef> flags;
  std::function<json(Run&)> run;
};

std::vector<Subcommand> subcommands() {
  const std::vector<FlagDef> common{kConfig, kSeed, kOut, kThreads};
  const std::vector<FlagDef> training{kEpochs, kAdditive};
  auto with = [&](std::vector<FlagDef> extra, bool trains) {
    std::vector<FlagDef> all = common;
    if (trains) all.insert(all.end(), training.begin(), training.end());
    all.insert(all.end(), extra.begin(), extra.end());
    return all;
  };
  return {
      {"discover", "likelihood-ratio direction test on a 2-column CSV",
       with({kData, kThreshold}, true), cmd_discover},
      {"order", "exhaustive causal ordering search", with({kData, kMaxD}, true), cmd_order},
      {"intervene", "interventional Monte Carlo E[x | do(x_target = value)]",
       with({kData, kModel, kSaveModel, kOrdering, kTarget, kValue, kNSamples, kMode}, true),
       cmd_intervene},
      {"counterfactual", "counterfactual of an observation under x_target <- value",
       with({kData, kModel, kSaveModel, kOrdering, kTarget, kValue, kObs}, true), cmd_counterfactual},
      {"simulate", "write a synthetic dataset and its ground truth",
       with({kFamily, kN, kNoise, kCoeff, kFlip, kData, kTruth}, false), cmd_simulate},
      {"benchmark", "direction accuracy over synthetic families",
       with({kFamily, kN, kReps, kNoise, kCoeff, kThreshold, kCsv, kCurves}, true), cmd_benchmark},
  };
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << "error[" << kind << "]: " << one_line(message) << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"Causal autoregressive flows: direction discovery, interventions, counterfactuals",
               "carefl"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  auto subs = subcommands();
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> flags;
  std::vector<std::pair<CLI::App*, const Subcommand*>> registered;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    for (const auto& f : s.flags) {
      const std::string storage = std::string(s.name) + ":" + f.key;
      if (f.kind == Kind::boolean) {
        sub->add_flag(f.flag, flags[storage], f.help);
      } else {
        sub->add_option(f.flag, raw[storage], f.help)->allow_extra_args(false);
      }
    }
    registered.emplace_back(sub, &s);
  }

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    bool known = false;
    for (const auto& s : subs) known = known || args[0] == s.name;
    if (!known) {
      report_error(err, "usage", "unknown subcommand '" + args[0] + "'");
      err << app.help();
      return kExitUsage;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    err << app.help();
    return kExitUsage;
  }

  CLI::App* chosen = nullptr;
  const Subcommand* spec = nullptr;
  for (auto& [sub, s] : registered) {
    if (sub->parsed()) {
      chosen = sub;
      spec = s;
    }
  }

  Run run;
  run.subcommand = spec->name;
  run.seed_source = "flag";
  std::string out_path;
  try {
    json from_file = json::object();
    if (chosen->count("--config") > 0) {
      from_file = read_config_file(raw[std::string(spec->name) + ":config"]);
    }
    run.cfg = from_file;
    for (const auto& f : spec->flags) {
      if (std::string(f.key) == "config") continue;
      if (chosen->count(f.flag) == 0) continue;
      run.cfg[f.key] = flag_value(f, raw[std::string(spec->name) + ":" + f.key]);
    }
    if (chosen->count("--seed") == 0 && from_file.contains("seed")) run.seed_source = "config";
    out_path = get_or<std::string>(run.cfg, "out", "");
    resolve_common(run);
    json results = spec->run(run);

    json report;
    report["command"] = {{"subcommand", run.subcommand}, {"argv", args}};
    report["config"] = run.resolved;
    report["config_digest"] = config_digest(run.resolved);
    report["seed"] = run.seed;
    report["seed_source"] = run.seed_source;
    report["input"] = run.input;
    report["results"] = results;
    report["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty()) {
      out << text;
    } else {
      write_text(out_path, text);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    report_error(err, e.kind(), e.what());
    return kExitUsage;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return kExitData;
  } catch (const json::exception& e) {
    report_error(err, "config", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitData;
  }
}

}  // namespace carefl
