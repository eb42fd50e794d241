#pragma once

// Experiment configuration, run persistence and the four CLI commands.
// Output layout under --out:
//   costs.json                      measured or configured cost table
//   runs/<label>_seed<k>.jsonl      one executed query per line
//   runs/<label>_seed<k>.summary.json
//   validation.json
//   report.json, reliability.csv, cost_per_counterexample.csv,
//   counterexample_counts.csv, fidelity_execution.csv

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mffals/embedded_schemas.hpp"
#include "mffals/environment.hpp"
#include "mffals/falsifier.hpp"
#include "mffals/json_schema.hpp"

namespace mffals {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3 };

/// Configuration or input-file problem (exit code 2).
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// ---------------------------------------------------------------------------
// Logging (level from MFFALS_LOG_LEVEL: error, warn, info, debug)

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel log_level() {
  const char* v = std::getenv("MFFALS_LOG_LEVEL");
  if (!v) return LogLevel::warn;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

inline void log(LogLevel lvl, const std::string& msg) {
  static std::mutex mu;
  if (lvl > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Schemas

inline const json& schema(const std::string& name) {
  static const std::map<std::string, json> all = [] {
    std::map<std::string, json> m;
    for (const auto& [k, text] : embedded_schemas()) m[k] = json::parse(text);
    return m;
  }();
  auto it = all.find(name);
  if (it == all.end()) throw InvalidInput("no schema named '" + name + "'");
  return it->second;
}

inline void require_schema(const json& value, const std::string& name, const std::string& what) {
  const auto errs = schema_errors(value, schema(name));
  if (errs.empty()) return;
  std::string msg = what + " does not match " + name + ":";
  for (const auto& e : errs) msg += "\n  " + e;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct MethodSpec {
  Method method = Method::mfbo;
  std::string label;
  std::vector<int> fidelities;
  std::vector<std::size_t> init_sizes;
};

struct CostSource {
  std::string source = "table";
  std::vector<double> lambdas;
  int n_trials = 10;
  int n_probes = 5;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name;
  json environment;
  json spec;  // null: environment default
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds;
  int budget = 100;
  EsConfig es{};
  int refit_every = 10;
  int fit_restarts = 2;
  int fit_max_evaluations = 1000;
  bool fit_noise = true;
  CostSource costs;
  TurboConfig turbo{};
  double pibo_beta = 0.7;
  double pibo_std_fraction = 0.1;
  json raw;
};

inline std::string default_label(const MethodSpec& m) {
  std::string s = to_string(m.method);
  if (!m.fidelities.empty()) {
    s += "_f";
    for (std::size_t i = 0; i < m.fidelities.size(); ++i) s += (i ? "-" : "") + std::to_string(m.fidelities[i]);
  }
  return s;
}

inline CartPoleFidelityConfig cartpole_fidelity_from_json(const json& j) {
  CartPoleFidelityConfig c;
  c.integrator = integrator_from_string(j.value("integrator", std::string("semi_implicit_euler")));
  c.force_magnitude = j.value("force", c.force_magnitude);
  if (j.contains("noise") && !j["noise"].is_null())
    c.position_noise = PositionNoise{j["noise"].value("mean", 0.0), j["noise"].value("variance", 0.25)};
  c.sensor_digits = j.value("digits", c.sensor_digits);
  c.episode_length = j.value("length", c.episode_length);
  c.validate();
  return c;
}

inline IdmParams idm_fidelity_from_json(const json& j) {
  IdmParams p;
  p.a = j.value("a", p.a);
  p.b = j.value("b", p.b);
  p.T = j.value("T", p.T);
  p.s0 = j.value("s0", p.s0);
  p.v0 = j.value("v0", p.v0);
  p.validate();
  return p;
}

/// Builds the environment (with any formula override from the config applied) described by a config.
inline Environment build_environment(const ExperimentConfig& cfg) {
  const json& ej = cfg.environment;
  const std::string id = ej.at("id").get<std::string>();
  Environment env;
  CartPoleSpecOptions cp;
  double min_gap = ej.value("min_gap", 5.0);
  double shift = ej.value("synthetic_shift", kSyntheticShift);
  if (id == "cartpole") {
    std::vector<CartPoleFidelityConfig> fids{CartPoleFidelityConfig::low(), CartPoleFidelityConfig::middle(),
                                             CartPoleFidelityConfig::high()};
    if (ej.contains("fidelities")) {
      fids.clear();
      for (const auto& f : ej["fidelities"]) fids.push_back(cartpole_fidelity_from_json(f));
    }
    std::array<double, 4> gains = kDefaultBalanceGains;
    if (ej.contains("controller") && ej["controller"].contains("gains")) {
      const auto g = ej["controller"]["gains"].get<std::vector<double>>();
      if (g.size() != 4) throw ConfigError("cart-pole controller needs 4 gains");
      std::copy(g.begin(), g.end(), gains.begin());
    }
    CartPolePhysics phys;
    if (ej.contains("physics")) {
      phys.gravity = ej["physics"].value("gravity", phys.gravity);
      phys.cart_mass = ej["physics"].value("cart_mass", phys.cart_mass);
      phys.dt = ej["physics"].value("dt", phys.dt);
    }
    cp.cart_mass = phys.cart_mass;
    env = make_cartpole_environment(fids, pd_balance_controller(gains), phys, cp);
  } else if (id == "idm_chain") {
    std::vector<IdmParams> fids{IdmParams::low(), IdmParams::middle(), IdmParams::high()};
    if (ej.contains("fidelities")) {
      fids.clear();
      for (const auto& f : ej["fidelities"]) fids.push_back(idm_fidelity_from_json(f));
    }
    Controller ctl = headway_controller();
    if (ej.contains("controller")) {
      const auto& c = ej["controller"];
      const auto type = c.value("type", std::string("headway"));
      if (type == "headway") ctl = headway_controller(c.value("headway", 0.7), c.value("margin", 3.0));
      else if (type == "aggressive") ctl = aggressive_controller(c.value("trigger_gap", 3.0));
      else if (type == "idle") ctl = idle_controller();
      else throw ConfigError("unknown IDM controller '" + type + "'");
    }
    env = make_idm_environment(fids, ctl, {}, min_gap);
  } else if (id == "synthetic") {
    env = make_synthetic_environment(shift);
  } else {
    throw ConfigError("unknown environment '" + id + "'");
  }

  if (cfg.spec.is_object()) {
    const auto lib = PredicateLibrary::builtins(cp, min_gap, shift);
    env = env.with_spec(formula_from_json(cfg.spec, lib));
  } else if (cfg.spec.is_string()) {
    const auto s = cfg.spec.get<std::string>();
    const std::map<std::string, std::string> default_for{
        {"cartpole", "cartpole"}, {"idm_chain", "idm_gap"}, {"synthetic", "synthetic"}};
    if (s != "default" && s != default_for.at(id))
      throw ConfigError("spec '" + s + "' does not apply to environment '" + id + "'");
  }
  return env;
}

inline ExperimentConfig parse_experiment(const json& j) {
  require_schema(j, "experiment", "experiment config");
  ExperimentConfig c;
  c.raw = j;
  c.name = j.value("name", std::string("experiment"));
  c.environment = j["environment"];
  c.spec = j.value("spec", json());
  c.budget = j["budget"].get<int>();
  c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  for (const auto& m : j["methods"]) {
    MethodSpec ms;
    ms.method = method_from_string(m["method"].get<std::string>());
    ms.fidelities = m.value("fidelities", std::vector<int>{});
    ms.init_sizes = m.value("init_sizes", std::vector<std::size_t>{});
    ms.label = m.value("label", default_label(ms));
    c.methods.push_back(std::move(ms));
  }
  if (j.contains("acquisition")) {
    const auto& a = j["acquisition"];
    c.es.n_candidates = a.value("n_candidates", c.es.n_candidates);
    c.es.n_posterior_samples = a.value("n_posterior_samples", c.es.n_posterior_samples);
    c.es.n_fantasies = a.value("n_fantasies", c.es.n_fantasies);
    c.es.threads = a.value("threads", c.es.threads);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.refit_every = m.value("refit_every", c.refit_every);
    c.fit_restarts = m.value("restarts", c.fit_restarts);
    c.fit_max_evaluations = m.value("max_evaluations", c.fit_max_evaluations);
    c.fit_noise = m.value("fit_noise", c.fit_noise);
  }
  const auto& cj = j["costs"];
  c.costs.source = cj["source"].get<std::string>();
  c.costs.lambdas = cj.value("lambdas", std::vector<double>{});
  c.costs.n_trials = cj.value("n_trials", c.costs.n_trials);
  c.costs.n_probes = cj.value("n_probes", c.costs.n_probes);
  c.costs.seed = cj.value("seed", c.costs.seed);
  if (j.contains("turbo")) {
    const auto& t = j["turbo"];
    c.turbo.L_init = t.value("L_init", c.turbo.L_init);
    c.turbo.L_max = t.value("L_max", c.turbo.L_max);
    c.turbo.L_min = t.value("L_min", c.turbo.L_min);
    c.turbo.tau_succ = t.value("tau_succ", c.turbo.tau_succ);
    c.turbo.tau_fail = t.value("tau_fail", c.turbo.tau_fail);
  }
  if (j.contains("pibo")) {
    c.pibo_beta = j["pibo"].value("beta_star", c.pibo_beta);
    c.pibo_std_fraction = j["pibo"].value("std_fraction", c.pibo_std_fraction);
  }

  // Cross-field checks that need the environment.
  Environment env;
  try {
    env = build_environment(c);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("environment: ") + ex.what());
  }
  if (c.costs.source == "table") {
    if (static_cast<int>(c.costs.lambdas.size()) != env.q())
      throw ConfigError("cost table needs " + std::to_string(env.q()) + " entries");
  }
  std::map<std::string, int> seen;
  for (const auto& m : c.methods) {
    if (seen[m.label]++) throw ConfigError("duplicate method label '" + m.label + "'");
    int prev = 0;
    for (int f : m.fidelities) {
      if (f <= prev || f > env.q()) throw ConfigError(m.label + ": fidelities must be increasing and within 1.." + std::to_string(env.q()));
      prev = f;
    }
    if (m.method != Method::mfbo && m.fidelities.size() > 1) throw ConfigError(m.label + ": baseline methods use one fidelity");
    const std::size_t levels = m.fidelities.empty() ? (m.method == Method::mfbo ? static_cast<std::size_t>(env.q()) : 1) : m.fidelities.size();
    if (!m.init_sizes.empty() && m.init_sizes.size() != levels) throw ConfigError(m.label + ": one init size per fidelity");
    for (std::size_t l = 1; l < m.init_sizes.size(); ++l)
      if (m.init_sizes[l] > m.init_sizes[l - 1]) throw ConfigError(m.label + ": init sizes must be non-increasing");
  }
  return c;
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw ConfigError(p.string() + ": " + ex.what());
  }
}

inline ExperimentConfig load_experiment(const fs::path& p) { return parse_experiment(read_json_file(p)); }

inline FalsifierConfig falsifier_config(const ExperimentConfig& c, const MethodSpec& m, std::uint64_t seed) {
  FalsifierConfig f;
  f.method = m.method;
  f.fidelities = m.fidelities;
  f.budget_iterations = c.budget;
  f.init_sizes = m.init_sizes;
  f.es = c.es;
  f.seed = seed;
  f.refit_every = c.refit_every;
  f.fit_restarts = c.fit_restarts;
  f.fit_max_evaluations = c.fit_max_evaluations;
  f.fit_noise = c.fit_noise;
  f.turbo = c.turbo;
  f.pibo_beta = c.pibo_beta;
  f.pibo_std_fraction = c.pibo_std_fraction;
  return f;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline json to_json(const QueryEntry& q) {
  json j{{"iteration", q.iteration}, {"e", q.e},       {"fidelity", q.fidelity}, {"level", q.level},
         {"seed", q.seed},           {"rho", q.rho},   {"cost", q.cost},         {"cumulative_cost", q.cumulative_cost}};
  if (q.alpha) j["alpha"] = *q.alpha;
  if (q.score) j["score"] = *q.score;
  if (!q.best_score_per_level.empty()) j["best_score_per_level"] = q.best_score_per_level;
  if (q.trust_length) j["trust_length"] = *q.trust_length;
  return j;
}

inline QueryEntry entry_from_json(const json& j) {
  QueryEntry q;
  q.iteration = j.at("iteration").get<int>();
  q.e = j.at("e").get<Point>();
  q.fidelity = j.at("fidelity").get<int>();
  q.level = j.at("level").get<int>();
  q.seed = j.at("seed").get<std::uint64_t>();
  q.rho = j.at("rho").get<double>();
  q.cost = j.at("cost").get<double>();
  q.cumulative_cost = j.at("cumulative_cost").get<double>();
  if (j.contains("alpha")) q.alpha = j["alpha"].get<double>();
  if (j.contains("score")) q.score = j["score"].get<double>();
  q.best_score_per_level = j.value("best_score_per_level", std::vector<double>{});
  if (j.contains("trust_length")) q.trust_length = j["trust_length"].get<double>();
  return q;
}

inline json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json metrics_json(const RunRecord& rec) {
  json m{{"total_cost", rec.total_cost()},
         {"init_cost", rec.init_cost()},
         {"iterations", rec.iterations_done()},
         {"n_counterexamples", rec.counterexamples.size()},
         {"cost_per_counterexample", nullable(cost_per_counterexample(rec, false))},
         {"fidelity_execution_percent", fidelity_execution_percent(rec)}};
  const bool validated = std::all_of(rec.counterexamples.begin(), rec.counterexamples.end(),
                                     [](const Counterexample& c) { return c.validated.has_value(); });
  if (validated) {
    std::size_t n = 0;
    for (const auto& c : rec.counterexamples) n += *c.validated ? 1 : 0;
    m["n_validated"] = n;
    m["reliability_percent"] =
        rec.counterexamples.empty() ? json(nullptr) : json(100.0 * static_cast<double>(n) / rec.counterexamples.size());
    m["cost_per_validated_counterexample"] = nullable(cost_per_counterexample(rec, true));
    const auto hit = cost_to_first_validated(rec);
    m["cost_to_first_validated"] = hit.cost;
    m["first_validated_censored"] = hit.censored;
  }
  return m;
}

inline json summary_json(const RunRecord& rec, const std::string& label, const json& config_echo) {
  json ces = json::array();
  for (const auto& c : rec.counterexamples) {
    json cj{{"entry", c.entry}, {"e", c.e}, {"found_at_fidelity", c.found_at_fidelity}, {"rho", c.rho}};
    if (c.validated) cj["validated"] = *c.validated;
    if (c.rho_at_q) cj["rho_at_q"] = *c.rho_at_q;
    if (c.validation_seed) cj["validation_seed"] = *c.validation_seed;
    ces.push_back(std::move(cj));
  }
  json snaps = json::array();
  for (const auto& s : rec.snapshots)
    snaps.push_back({{"iteration", s.iteration},
                     {"eta", s.eta},
                     {"noise_variance", s.noise_variance},
                     {"signal_variance", s.signal_variance},
                     {"lengthscales", s.lengthscales},
                     {"log_likelihood", s.log_likelihood},
                     {"output_mean", s.output_mean},
                     {"output_scale", s.output_scale}});
  json j{{"label", label},
         {"method", rec.method},
         {"env_id", rec.env_id},
         {"fidelities", rec.fidelities},
         {"q_env", rec.q_env},
         {"lambdas", rec.lambdas},
         {"seed", rec.seed},
         {"budget", rec.budget_iterations},
         {"status", rec.status},
         {"counterexamples", std::move(ces)},
         {"snapshots", std::move(snaps)},
         {"metrics", metrics_json(rec)}};
  if (!rec.error.empty()) j["error"] = rec.error;
  if (!config_echo.is_null()) j["config"] = config_echo;
  return j;
}

inline RunRecord record_from_json(const json& summary, const std::vector<json>& entries) {
  RunRecord rec;
  rec.method = summary.at("method").get<std::string>();
  rec.env_id = summary.at("env_id").get<std::string>();
  rec.fidelities = summary.at("fidelities").get<std::vector<int>>();
  rec.q_env = summary.at("q_env").get<int>();
  rec.lambdas = summary.at("lambdas").get<std::vector<double>>();
  rec.seed = summary.at("seed").get<std::uint64_t>();
  rec.budget_iterations = summary.at("budget").get<int>();
  rec.status = summary.at("status").get<std::string>();
  rec.error = summary.value("error", std::string());
  for (const auto& e : entries) rec.entries.push_back(entry_from_json(e));
  for (const auto& c : summary.at("counterexamples")) {
    Counterexample ce;
    ce.entry = c.at("entry").get<std::size_t>();
    ce.e = c.at("e").get<Point>();
    ce.found_at_fidelity = c.at("found_at_fidelity").get<int>();
    ce.rho = c.at("rho").get<double>();
    if (c.contains("validated")) ce.validated = c["validated"].get<bool>();
    if (c.contains("rho_at_q")) ce.rho_at_q = c["rho_at_q"].get<double>();
    if (c.contains("validation_seed")) ce.validation_seed = c["validation_seed"].get<std::uint64_t>();
    rec.counterexamples.push_back(std::move(ce));
  }
  for (const auto& s : summary.at("snapshots")) {
    ModelSnapshot m;
    m.iteration = s.at("iteration").get<int>();
    m.eta = s.at("eta").get<std::vector<double>>();
    m.noise_variance = s.at("noise_variance").get<double>();
    m.signal_variance = s.at("signal_variance").get<double>();
    m.lengthscales = s.at("lengthscales").get<std::vector<double>>();
    m.log_likelihood = s.at("log_likelihood").get<double>();
    m.output_mean = s.value("output_mean", 0.0);
    m.output_scale = s.value("output_scale", 1.0);
    rec.snapshots.push_back(std::move(m));
  }
  return rec;
}

struct StoredRun {
  std::string label;
  fs::path summary_path;
  fs::path entries_path;
  json summary;
  RunRecord record;
};

inline std::string run_stem(const std::string& label, std::uint64_t seed) {
  return label + "_seed" + std::to_string(seed);
}

inline std::string entries_jsonl(const RunRecord& rec) {
  std::string out;
  for (const auto& q : rec.entries) out += to_json(q).dump() + "\n";
  return out;
}

inline void write_run(const fs::path& out_dir, const std::string& label, const RunRecord& rec, const json& echo) {
  const auto stem = out_dir / "runs" / run_stem(label, rec.seed);
  write_text(stem.string() + ".jsonl", entries_jsonl(rec));
  write_text(stem.string() + ".summary.json", summary_json(rec, label, echo).dump(2) + "\n");
}

/// Loads one run from its summary path (the JSONL sits next to it).
inline StoredRun load_run(const fs::path& summary_path) {
  StoredRun r;
  r.summary_path = summary_path;
  const std::string s = summary_path.string();
  const std::string suffix = ".summary.json";
  if (s.size() <= suffix.size() || s.substr(s.size() - suffix.size()) != suffix)
    throw ConfigError(s + ": run summaries end in .summary.json");
  r.entries_path = s.substr(0, s.size() - suffix.size()) + ".jsonl";
  r.summary = read_json_file(summary_path);
  require_schema(r.summary, "run_summary", s);
  std::ifstream in(r.entries_path);
  if (!in) throw ConfigError("missing " + r.entries_path.string());
  std::vector<json> entries;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::exception& ex) {
      throw ConfigError(r.entries_path.string() + ":" + std::to_string(n) + ": " + ex.what());
    }
    require_schema(e, "run_entry", r.entries_path.string() + ":" + std::to_string(n));
    entries.push_back(std::move(e));
  }
  r.label = r.summary["label"].get<std::string>();
  r.record = record_from_json(r.summary, entries);
  return r;
}

/// Every *.summary.json under `dir`, sorted by file name.
inline std::vector<fs::path> find_summaries(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() > 13 && name.substr(name.size() - 13) == ".summary.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Costs

inline CostTable measure_environment_costs(const Environment& env, const CostSource& src) {
  Rng rng(derive_seed(src.seed, {seed_tag::kProbe}));
  std::vector<EnvParams> probes;
  for (auto& p : latin_hypercube(static_cast<std::size_t>(src.n_probes), env.space().lower(), env.space().upper(), rng))
    probes.push_back(EnvParams{std::move(p)});
  MeasureOptions mo;
  mo.n_trials = src.n_trials;
  mo.seed = src.seed;
  return measure_costs(env.per_fidelity(), probes, mo);
}

/// Table costs come from the config; measured costs are read from
/// <out>/costs.json when present, otherwise measured and written there.
inline CostTable resolve_costs(const ExperimentConfig& cfg, const Environment& env, const fs::path& out_dir) {
  if (cfg.costs.source == "table") return CostTable::configured(cfg.costs.lambdas);
  const auto path = out_dir / "costs.json";
  if (fs::exists(path)) {
    const auto j = read_json_file(path);
    require_schema(j, "costs", path.string());
    CostTable t = j.get<CostTable>();
    if (t.q() != env.q()) throw ConfigError(path.string() + " covers a different number of fidelities");
    return t;
  }
  CostTable t = measure_environment_costs(env, cfg.costs);
  write_text(path, json(t).dump(2) + "\n");
  return t;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_measure_costs(const fs::path& config_path, const fs::path& out_dir) {
  try {
    const auto cfg = load_experiment(config_path);
    const auto env = build_environment(cfg);
    CostTable t = cfg.costs.source == "table" ? CostTable::configured(cfg.costs.lambdas)
                                              : measure_environment_costs(env, cfg.costs);
    if (t.ordering_warning) log(LogLevel::warn, "measured costs are not non-decreasing in fidelity");
    if (t.similarity_floored) log(LogLevel::warn, "a trajectory similarity was floored");
    const json j = t;
    write_text(out_dir / "costs.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const InvalidInput& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    log(LogLevel::error, ex.what());
    return kExitRuntime;
  }
}

struct Cell {
  const MethodSpec* method;
  std::uint64_t seed;
};

inline int cmd_falsify(const fs::path& config_path, const fs::path& out_dir, int jobs = 1, std::uint64_t seed_offset = 0) {
  ExperimentConfig cfg;
  Environment env;
  CostTable costs;
  try {
    cfg = load_experiment(config_path);
    env = build_environment(cfg);
    costs = resolve_costs(cfg, env, out_dir);
  } catch (const ConfigError& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const InvalidInput& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    log(LogLevel::error, ex.what());
    return kExitRuntime;
  }

  std::vector<Cell> cells;
  for (const auto& m : cfg.methods)
    for (auto s : cfg.seeds) cells.push_back({&m, s + seed_offset});

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& cell = cells[i];
      const auto& label = cell.method->label;
      const auto fc = falsifier_config(cfg, *cell.method, cell.seed);
      json echo = cfg.raw;
      echo["methods"] = json::array({cfg.raw["methods"][static_cast<std::size_t>(cell.method - cfg.methods.data())]});
      echo["seeds"] = json::array({cell.seed});
      RunRecord rec;
      try {
        log(LogLevel::info, "running " + run_stem(label, cell.seed));
        rec = run_falsifier(fc, env, costs);
      } catch (const std::exception& ex) {
        rec.method = to_string(fc.method);
        rec.env_id = env.id();
        rec.fidelities = fc.fidelities.empty() ? std::vector<int>{env.q()} : fc.fidelities;
        rec.q_env = env.q();
        rec.lambdas = costs.select(rec.fidelities);
        rec.seed = cell.seed;
        rec.budget_iterations = fc.budget_iterations;
        rec.status = "aborted";
        rec.error = ex.what();
      }
      if (rec.status != "ok") {
        failed = true;
        log(LogLevel::error, run_stem(label, cell.seed) + ": " + rec.error);
      }
      try {
        write_run(out_dir, label, rec, echo);
      } catch (const std::exception& ex) {
        failed = true;
        log(LogLevel::error, ex.what());
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  return failed ? kExitRuntime : kExitOk;
}

/// Validates every run under <out>/runs, rewrites the summaries and writes <out>/validation.json.
inline int cmd_validate(const fs::path& config_path, const fs::path& out_dir) {
  try {
    const auto cfg = load_experiment(config_path);
    const auto env = build_environment(cfg);
    const auto paths = find_summaries(out_dir / "runs");
    if (paths.empty()) throw ConfigError("no run summaries under " + (out_dir / "runs").string());
    json runs = json::array();
    for (const auto& p : paths) {
      auto run = load_run(p);
      if (run.record.env_id != env.id()) throw ConfigError(p.string() + " was produced on another environment");
      const auto v = validate_counterexamples(run.record, env);
      const json echo = run.summary.value("config", json());
      write_text(p, summary_json(run.record, run.label, echo).dump(2) + "\n");
      runs.push_back({{"label", run.label},
                      {"seed", run.record.seed},
                      {"total", v.total},
                      {"validated", v.validated},
                      {"reliability_percent", nullable(v.reliability_percent)}});
    }
    const json out{{"runs", runs}};
    write_text(out_dir / "validation.json", out.dump(2) + "\n");
    return kExitOk;
  } catch (const ConfigError& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const InvalidInput& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    log(LogLevel::error, ex.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// Report

inline std::string fmt_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_number(*v) : "NA"; }

struct MeanStd {
  std::optional<double> mean, std;
};

/// Sample mean and standard deviation (n - 1); std is 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  const double m = s / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  r.mean = m;
  r.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return r;
}

struct MethodAggregate {
  std::string label, method;
  std::size_t runs = 0, aborted = 0, counterexamples = 0, validated = 0;
  MeanStd ce_per_run;
  std::optional<double> reliability_percent;  // mean over runs with at least one counterexample
  MeanStd cost_per_ce, cost_per_validated_ce;
  std::optional<double> cost_to_first_validated_mean;
  std::vector<double> fidelity_execution_percent;
};

/// Per-label aggregates in first-seen order of the (sorted) runs.
inline std::vector<MethodAggregate> aggregate_runs(const std::vector<StoredRun>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const StoredRun*>> by_label;
  for (const auto& r : runs) {
    if (!by_label.count(r.label)) order.push_back(r.label);
    by_label[r.label].push_back(&r);
  }
  std::vector<MethodAggregate> out;
  for (const auto& label : order) {
    MethodAggregate a;
    a.label = label;
    std::vector<double> counts, rel, cpc, cpv, first;
    std::vector<double> fid_counts;
    std::size_t n_entries = 0;
    for (const auto* r : by_label[label]) {
      const auto& rec = r->record;
      a.method = rec.method;
      ++a.runs;
      if (rec.status != "ok") ++a.aborted;
      a.counterexamples += rec.counterexamples.size();
      counts.push_back(static_cast<double>(rec.counterexamples.size()));
      std::size_t v = 0;
      bool all_checked = true;
      for (const auto& c : rec.counterexamples) {
        if (!c.validated) all_checked = false;
        else if (*c.validated) ++v;
      }
      a.validated += v;
      if (all_checked && !rec.counterexamples.empty())
        rel.push_back(100.0 * static_cast<double>(v) / static_cast<double>(rec.counterexamples.size()));
      if (auto c = cost_per_counterexample(rec, false)) cpc.push_back(*c);
      if (all_checked) {
        if (auto c = cost_per_counterexample(rec, true)) cpv.push_back(*c);
        first.push_back(cost_to_first_validated(rec).cost);
      }
      if (fid_counts.size() < static_cast<std::size_t>(rec.q_env)) fid_counts.resize(static_cast<std::size_t>(rec.q_env), 0.0);
      for (const auto& q : rec.entries) fid_counts[static_cast<std::size_t>(q.fidelity - 1)] += 1.0;
      n_entries += rec.entries.size();
    }
    a.ce_per_run = mean_std(counts);
    a.reliability_percent = mean_std(rel).mean;
    a.cost_per_ce = mean_std(cpc);
    a.cost_per_validated_ce = mean_std(cpv);
    a.cost_to_first_validated_mean = mean_std(first).mean;
    for (double c : fid_counts) a.fidelity_execution_percent.push_back(n_entries ? 100.0 * c / static_cast<double>(n_entries) : 0.0);
    out.push_back(std::move(a));
  }
  return out;
}

inline json report_json(const std::vector<MethodAggregate>& aggs, std::size_t n_runs) {
  json methods = json::array();
  for (const auto& a : aggs) {
    json m{{"label", a.label},
           {"method", a.method},
           {"runs", a.runs},
           {"aborted", a.aborted},
           {"counterexamples", a.counterexamples},
           {"validated", a.validated},
           {"reliability_percent", nullable(a.reliability_percent)},
           {"cost_per_counterexample_mean", nullable(a.cost_per_ce.mean)},
           {"cost_per_counterexample_std", nullable(a.cost_per_ce.std)},
           {"cost_per_validated_counterexample_mean", nullable(a.cost_per_validated_ce.mean)},
           {"cost_per_validated_counterexample_std", nullable(a.cost_per_validated_ce.std)},
           {"fidelity_execution_percent", a.fidelity_execution_percent}};
    if (a.ce_per_run.mean) {
      m["counterexamples_per_run_mean"] = *a.ce_per_run.mean;
      m["counterexamples_per_run_std"] = *a.ce_per_run.std;
    }
    if (a.cost_to_first_validated_mean) m["cost_to_first_validated_mean"] = *a.cost_to_first_validated_mean;
    methods.push_back(std::move(m));
  }
  return {{"runs", n_runs}, {"methods", methods}};
}

struct ReportTables {
  std::string reliability, cost_per_counterexample, counterexample_counts, fidelity_execution;
};

inline ReportTables report_tables(const std::vector<MethodAggregate>& aggs, const std::vector<StoredRun>& runs) {
  ReportTables t;
  t.reliability = "label,method,runs,counterexamples,validated,reliability_percent\n";
  t.cost_per_counterexample =
      "label,method,mean,std,validated_mean,validated_std,first_validated_mean\n";
  std::size_t q = 0;
  for (const auto& a : aggs) {
    t.reliability += a.label + "," + a.method + "," + std::to_string(a.runs) + "," + std::to_string(a.counterexamples) +
                     "," + std::to_string(a.validated) + "," + fmt_optional(a.reliability_percent) + "\n";
    t.cost_per_counterexample += a.label + "," + a.method + "," + fmt_optional(a.cost_per_ce.mean) + "," +
                                 fmt_optional(a.cost_per_ce.std) + "," + fmt_optional(a.cost_per_validated_ce.mean) +
                                 "," + fmt_optional(a.cost_per_validated_ce.std) + "," +
                                 fmt_optional(a.cost_to_first_validated_mean) + "\n";
    q = std::max(q, a.fidelity_execution_percent.size());
  }
  t.counterexample_counts = "label,method,seed,counterexamples,validated,reliability_percent\n";
  for (const auto& r : runs) {
    std::size_t v = 0;
    bool checked = true;
    for (const auto& c : r.record.counterexamples) {
      if (!c.validated) checked = false;
      else if (*c.validated) ++v;
    }
    std::optional<double> rel;
    if (checked && !r.record.counterexamples.empty())
      rel = 100.0 * static_cast<double>(v) / static_cast<double>(r.record.counterexamples.size());
    t.counterexample_counts += r.label + "," + r.record.method + "," + std::to_string(r.record.seed) + "," +
                               std::to_string(r.record.counterexamples.size()) + "," +
                               (checked ? std::to_string(v) : std::string("NA")) + "," + fmt_optional(rel) + "\n";
  }
  t.fidelity_execution = "label,method";
  for (std::size_t f = 1; f <= q; ++f) t.fidelity_execution += ",f" + std::to_string(f) + "_percent";
  t.fidelity_execution += "\n";
  for (const auto& a : aggs) {
    t.fidelity_execution += a.label + "," + a.method;
    for (std::size_t f = 0; f < q; ++f)
      t.fidelity_execution += "," + fmt_number(f < a.fidelity_execution_percent.size() ? a.fidelity_execution_percent[f] : 0.0);
    t.fidelity_execution += "\n";
  }
  return t;
}

/// `inputs` may name summary files or directories holding them (directories
/// are scanned, with a runs/ subdirectory preferred).
inline int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir) {
  try {
    std::vector<fs::path> paths;
    for (const auto& in : inputs) {
      if (fs::is_directory(in)) {
        auto found = find_summaries(fs::is_directory(in / "runs") ? in / "runs" : in);
        paths.insert(paths.end(), found.begin(), found.end());
      } else {
        paths.push_back(in);
      }
    }
    if (paths.empty()) throw ConfigError("no run summaries to report on");
    std::vector<StoredRun> runs;
    for (const auto& p : paths) runs.push_back(load_run(p));
    const auto aggs = aggregate_runs(runs);
    const auto rj = report_json(aggs, runs.size());
    require_schema(rj, "report", "report");
    const auto tables = report_tables(aggs, runs);
    write_text(out_dir / "report.json", rj.dump(2) + "\n");
    write_text(out_dir / "reliability.csv", tables.reliability);
    write_text(out_dir / "cost_per_counterexample.csv", tables.cost_per_counterexample);
    write_text(out_dir / "counterexample_counts.csv", tables.counterexample_counts);
    write_text(out_dir / "fidelity_execution.csv", tables.fidelity_execution);
    return kExitOk;
  } catch (const ConfigError& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const InvalidInput& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const json::exception& ex) {
    log(LogLevel::error, ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    log(LogLevel::error, ex.what());
    return kExitRuntime;
  }
}

}  // namespace mffals
