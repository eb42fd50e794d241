#pragma once

// Falsification loops: multi-fidelity BO with cost-scaled entropy search, and
// the single-fidelity baselines (plain BO, TuRBO-1, πBO). Also counterexample
// validation at the top fidelity and the cost/reliability metrics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mffals/acquisition.hpp"
#include "mffals/cost_model.hpp"
#include "mffals/environment.hpp"
#include "mffals/error.hpp"
#include "mffals/gp.hpp"
#include "mffals/multifidelity.hpp"
#include "mffals/rng.hpp"
#include "mffals/space.hpp"

namespace mffals {

enum class Method { mfbo, bo_single, turbo1, pibo };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::mfbo: return "mfbo";
    case Method::bo_single: return "bo_single";
    case Method::turbo1: return "turbo1";
    case Method::pibo: return "pibo";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "mfbo") return Method::mfbo;
  if (s == "bo_single") return Method::bo_single;
  if (s == "turbo1") return Method::turbo1;
  if (s == "pibo") return Method::pibo;
  throw InvalidInput("unknown method '" + s + "'");
}

// ---------------------------------------------------------------------------
// TuRBO-1 trust region

struct TurboConfig {
  double L_init = 0.75;
  double L_max = 1.5;
  double L_min = 0.0078125;  // 0.5^7
  int tau_succ = 3;
  int tau_fail = 5;
};

struct TurboState {
  double L = 0.75;
  int success_count = 0;
  int fail_count = 0;
  Point center;  // unit-box coordinates
  double best = std::numeric_limits<double>::infinity();
  int restarts = 0;
  bool restarted = false;  // set by the last update

  static TurboState initial(const TurboConfig& c) {
    TurboState s;
    s.L = c.L_init;
    return s;
  }
};

inline TurboState turbo_update(TurboState s, bool success, const TurboConfig& c = {}) {
  s.restarted = false;
  if (success) {
    ++s.success_count;
    s.fail_count = 0;
  } else {
    ++s.fail_count;
    s.success_count = 0;
  }
  if (s.success_count == c.tau_succ) {
    s.L = std::min(c.L_max, 2.0 * s.L);
    s.success_count = 0;
  }
  if (s.fail_count == c.tau_fail) {
    s.L /= 2.0;
    s.fail_count = 0;
  }
  if (s.L < c.L_min) {
    s.L = c.L_init;
    s.success_count = 0;
    s.fail_count = 0;
    s.best = std::numeric_limits<double>::infinity();
    ++s.restarts;
    s.restarted = true;
  }
  return s;
}

/// [center ± L/2] clipped to the unit box.
inline std::pair<Point, Point> turbo_region(const TurboState& s) {
  Point lo(s.center.size()), hi(s.center.size());
  for (std::size_t j = 0; j < s.center.size(); ++j) {
    lo[j] = std::max(0.0, s.center[j] - 0.5 * s.L);
    hi[j] = std::min(1.0, s.center[j] + 0.5 * s.L);
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// πBO edge prior

/// Product over dimensions of an equal mixture of two Gaussians centred on the
/// interval ends, each renormalized to integrate to one over its interval.
class PiBoPrior {
 public:
  PiBoPrior() = default;
  PiBoPrior(const UncertaintySpace& space, double beta_star = 0.7, double std_fraction = 0.1, int grid = 1024)
      : space_(space), beta_(beta_star), frac_(std_fraction) {
    if (!(std_fraction > 0)) throw InvalidInput("prior std fraction must be positive");
    if (grid < 2) throw InvalidInput("prior grid needs at least 2 points");
    for (std::size_t j = 0; j < space_.dim(); ++j) {
      const double lo = space_.lower()[j], h = space_.width(j) / (grid - 1);
      double z = 0.0;
      for (int k = 0; k < grid; ++k) {
        const double w = (k == 0 || k == grid - 1) ? 0.5 : 1.0;
        z += w * raw(j, lo + k * h);
      }
      log_norm_.push_back(std::log(z * h));
    }
  }

  double beta_star() const { return beta_; }
  const UncertaintySpace& space() const { return space_; }

  double log_density(std::span<const double> e) const {
    space_.require_contains(e);
    double s = 0.0;
    for (std::size_t j = 0; j < space_.dim(); ++j) s += std::log(raw(j, e[j])) - log_norm_[j];
    return s;
  }
  double density(std::span<const double> e) const { return std::exp(log_density(e)); }

 private:
  double raw(std::size_t j, double x) const {
    const double sd = frac_ * space_.width(j);
    auto g = [sd](double d) { return std::exp(-0.5 * d * d / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
    return 0.5 * g(x - space_.lower()[j]) + 0.5 * g(x - space_.upper()[j]);
  }

  UncertaintySpace space_;
  double beta_ = 0.7;
  double frac_ = 0.1;
  std::vector<double> log_norm_;
};

/// π(e)^(β*/n), evaluated in log space.
inline double pibo_weight(const PiBoPrior& prior, std::span<const double> e, int n) {
  if (n < 1) throw InvalidInput("pibo_weight: iteration must be >= 1");
  return std::exp(prior.beta_star() / n * prior.log_density(e));
}

// ---------------------------------------------------------------------------
// Configuration and records

/// Overrides acquisition: returns a unit-box point and a model level.
struct StubQuery {
  Point e;
  int level = 1;
};
using QuerySelector = std::function<StubQuery(int iteration)>;

struct FalsifierConfig {
  Method method = Method::mfbo;
  /// Environment fidelities in play (1-based, increasing). Empty: every
  /// fidelity for mfbo, the top one otherwise.
  std::vector<int> fidelities;
  int budget_iterations = 100;
  /// Initial design per level; empty uses default_design_sizes.
  std::vector<std::size_t> init_sizes;
  EsConfig es{};
  std::uint64_t seed = 0;
  int refit_every = 10;
  int fit_restarts = 2;
  int fit_max_evaluations = 1000;
  bool fit_noise = true;
  TurboConfig turbo{};
  double pibo_beta = 0.7;
  double pibo_std_fraction = 0.1;
  QuerySelector selector;  // tests only
};

struct QueryEntry {
  int iteration = 0;  // 0 for the initial design
  Point e;            // physical coordinates
  int fidelity = 1;   // environment fidelity index
  int level = 1;      // model level
  std::uint64_t seed = 0;
  double rho = 0.0;
  double cost = 0.0;
  double cumulative_cost = 0.0;
  std::optional<double> alpha;
  std::optional<double> score;
  std::vector<double> best_score_per_level;
  std::optional<double> trust_length;
};

struct Counterexample {
  std::size_t entry = 0;  // index into RunRecord::entries
  Point e;
  int found_at_fidelity = 1;
  double rho = 0.0;
  std::optional<bool> validated;
  std::optional<double> rho_at_q;
  std::optional<std::uint64_t> validation_seed;
};

struct ModelSnapshot {
  int iteration = 0;
  std::vector<double> eta;
  double noise_variance = 0.0;
  double signal_variance = 0.0;
  std::vector<double> lengthscales;
  double log_likelihood = 0.0;
  double output_mean = 0.0;
  double output_scale = 1.0;
};

struct RunRecord {
  std::string method;
  std::string env_id;
  std::vector<int> fidelities;  // environment indices used, model level l ↔ fidelities[l-1]
  int q_env = 1;
  std::vector<double> lambdas;  // per level
  std::uint64_t seed = 0;
  int budget_iterations = 0;
  std::vector<QueryEntry> entries;  // initial design first, then iterations 1..n
  std::vector<Counterexample> counterexamples;
  std::vector<ModelSnapshot> snapshots;
  std::string status = "ok";
  std::string error;

  double total_cost() const { return entries.empty() ? 0.0 : entries.back().cumulative_cost; }
  double init_cost() const {
    double c = 0.0;
    for (const auto& q : entries)
      if (q.iteration == 0) c = q.cumulative_cost;
    return c;
  }
  std::size_t iterations_done() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const QueryEntry& q) {
      return q.iteration > 0;
    }));
  }
};

// ---------------------------------------------------------------------------
// Surrogate bookkeeping

namespace detail {

struct Surrogate {
  ArParams params;
  bool fitted = false;
  double mean = 0.0, scale = 1.0;
};

inline std::pair<double, double> pooled_moments(const MfDataset& ds) {
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& l : ds.levels)
    for (double y : l.outputs) {
      s += y;
      s2 += y * y;
      ++n;
    }
  const double mean = s / static_cast<double>(n);
  const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

inline MfDataset standardized(const MfDataset& ds, double mean, double scale) {
  MfDataset out = ds;
  for (auto& l : out.levels)
    for (double& y : l.outputs) y = (y - mean) / scale;
  return out;
}

inline void refit(Surrogate& s, const MfDataset& ds, int q, const FalsifierConfig& cfg, std::uint64_t seed) {
  MinimizeOptions mo;
  mo.max_evaluations = cfg.fit_max_evaluations;
  HyperBounds hb;
  hb.fit_noise = cfg.fit_noise;
  if (q == 1) {
    const auto& lvl = ds.levels.at(0);
    Dataset d1;
    d1.inputs.resize(static_cast<Eigen::Index>(lvl.inputs.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t i = 0; i < lvl.inputs.size(); ++i)
      for (std::size_t j = 0; j < ds.dim(); ++j) d1.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = lvl.inputs[i][j];
    d1.outputs = Eigen::Map<const Eigen::VectorXd>(lvl.outputs.data(), static_cast<Eigen::Index>(lvl.outputs.size()));
    FitOptions fo;
    fo.restarts = cfg.fit_restarts;
    fo.seed = seed;
    fo.minimizer = mo;
    if (s.fitted) fo.warm_start = FittedGp{s.params.base_kernel, s.params.noise_variance, 0.0};
    const auto f = fit_hyperparams(d1, hb, fo);
    s.params = ArParams::single(f.kernel, f.noise_variance);
  } else {
    ArFitOptions fo;
    fo.restarts = cfg.fit_restarts;
    fo.seed = seed;
    fo.minimizer = mo;
    fo.bounds.kernel = hb;
    if (s.fitted) fo.warm_start = s.params;
    s.params = fit_ar_params(ds, fo).params;
  }
  s.fitted = true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Main loop

/// Runs `cfg.method` on `env` with per-fidelity costs `costs` (covering every
/// environment fidelity). Numeric failures abort the run with a partial record
/// and status "aborted"; simulator failures propagate.
inline RunRecord run_falsifier(const FalsifierConfig& cfg, const Environment& env, const CostTable& costs) {
  if (cfg.budget_iterations < 1) throw InvalidInput("budget must be >= 1");
  if (costs.q() != env.q()) throw InvalidInput("cost table does not cover every environment fidelity");
  if (cfg.refit_every < 1) throw InvalidInput("refit_every must be >= 1");

  std::vector<int> fids = cfg.fidelities;
  if (fids.empty()) {
    if (cfg.method == Method::mfbo)
      for (int f = 1; f <= env.q(); ++f) fids.push_back(f);
    else
      fids.push_back(env.q());
  }
  if (cfg.method != Method::mfbo && fids.size() != 1)
    throw InvalidInput(to_string(cfg.method) + " runs on exactly one fidelity");
  const Environment sub = env.restrict(fids);
  const int q = sub.q();
  const std::size_t d = env.space().dim();
  const auto lambdas = costs.select(fids);

  RunRecord rec;
  rec.method = to_string(cfg.method);
  rec.env_id = env.id();
  rec.fidelities = fids;
  rec.q_env = env.q();
  rec.lambdas = lambdas;
  rec.seed = cfg.seed;
  rec.budget_iterations = cfg.budget_iterations;

  MfDataset data;  // unit-box inputs, raw robustness
  data.levels.resize(static_cast<std::size_t>(q));
  double cumulative = 0.0;

  auto execute = [&](int iteration, const Point& u, int level, std::uint64_t sim_seed) -> QueryEntry& {
    QueryEntry qe;
    qe.iteration = iteration;
    qe.e = env.space().from_unit(u);
    qe.level = level;
    qe.fidelity = fids[static_cast<std::size_t>(level - 1)];
    qe.seed = sim_seed;
    qe.rho = sub.robustness(level, EnvParams{qe.e}, sim_seed);
    qe.cost = lambdas[static_cast<std::size_t>(level - 1)];
    cumulative += qe.cost;
    qe.cumulative_cost = cumulative;
    data.add(level, env.space().to_unit(qe.e), qe.rho);
    rec.entries.push_back(std::move(qe));
    return rec.entries.back();
  };

  // Initial nested design, lowest level first.
  auto sizes = cfg.init_sizes.empty() ? default_design_sizes(d, q) : cfg.init_sizes;
  if (static_cast<int>(sizes.size()) != q) throw InvalidInput("need one initial design size per fidelity");
  const auto design = make_nested_design(UncertaintySpace::unit(d), sizes, derive_seed(cfg.seed, {seed_tag::kInitDesign}));
  std::uint64_t k = 0;
  for (int l = 1; l <= q; ++l)
    for (const auto& u : design[static_cast<std::size_t>(l - 1)])
      execute(0, u, l, derive_seed(cfg.seed, {seed_tag::kInitSim, k++}));

  TurboState turbo = TurboState::initial(cfg.turbo);
  auto recenter_on_best = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rec.entries.size(); ++i)
      if (rec.entries[i].rho < rec.entries[best].rho) best = i;
    turbo.center = env.space().to_unit(rec.entries[best].e);
    turbo.best = rec.entries[best].rho;
  };
  if (cfg.method == Method::turbo1) recenter_on_best();

  std::optional<PiBoPrior> prior;
  if (cfg.method == Method::pibo) prior.emplace(env.space(), cfg.pibo_beta, cfg.pibo_std_fraction);

  detail::Surrogate sur;
  bool force_refit = false;

  for (int t = 1; t <= cfg.budget_iterations; ++t) {
    int level = q;
    Point u;
    std::optional<double> alpha, score, trust;
    std::vector<double> best_per_level;

    if (cfg.selector) {
      const auto s = cfg.selector(t);
      u = s.e;
      level = s.level;
      if (level < 1 || level > q) throw InvalidInput("selector returned an out-of-range level");
    } else {
      Point lo(d, 0.0), hi(d, 1.0);
      if (cfg.method == Method::turbo1) {
        std::tie(lo, hi) = turbo_region(turbo);
        trust = turbo.L;
      }
      const auto cands = CandidateSet::latin(static_cast<std::size_t>(cfg.es.n_candidates), lo, hi,
                                             derive_seed(cfg.seed, {seed_tag::kCandidates, static_cast<std::uint64_t>(t)}));

      std::optional<Selection> sel;
      for (int attempt = 0; attempt < 2 && !sel; ++attempt) {
        try {
          const auto [mean, scale] = detail::pooled_moments(data);
          const MfDataset ds = detail::standardized(data, mean, scale);
          const bool refit_now = !sur.fitted || force_refit || attempt > 0 || (t - 1) % cfg.refit_every == 0;
          if (refit_now) {
            detail::refit(sur, ds, q, cfg,
                          derive_seed(cfg.seed, {seed_tag::kModelFit, static_cast<std::uint64_t>(t),
                                                 static_cast<std::uint64_t>(attempt)}));
            ModelSnapshot snap;
            snap.iteration = t;
            snap.eta = sur.params.eta;
            snap.noise_variance = sur.params.noise_variance;
            snap.signal_variance = sur.params.base_kernel.signal_variance;
            snap.lengthscales = sur.params.base_kernel.lengthscales;
            snap.output_mean = mean;
            snap.output_scale = scale;
            rec.snapshots.push_back(std::move(snap));
          }
          JitterSchedule jit;
          if (attempt > 0) jit = {1e-6, 1e-2, 10.0};
          const auto post = build_mf_posterior(ds, sur.params, jit);
          if (refit_now) rec.snapshots.back().log_likelihood = post.log_marginal_likelihood();

          const auto acq_seed = derive_seed(cfg.seed, {seed_tag::kAcquisition, static_cast<std::uint64_t>(t)});
          EntropySearch es(post, cands, cfg.es.n_posterior_samples, derive_seed(acq_seed, {0}), jit);
          const auto a = score_queries(es, cands, q, cfg.es, derive_seed(acq_seed, {1}));
          std::vector<double> w;
          if (prior)
            for (const auto& p : cands.points) w.push_back(pibo_weight(*prior, env.space().from_unit(p), t));
          sel = select_from_scores(a, cands, lambdas, w);
          if (es.base_entropy() == 0.0) {
            // Every posterior sample agrees on the minimizer, so no query carries
            // information; evaluate that candidate at the top level instead.
            Eigen::Index mode = 0;
            es.pmin().maxCoeff(&mode);
            sel->candidate = static_cast<std::size_t>(mode);
            sel->e = cands.points[sel->candidate];
            sel->level = q;
            sel->alpha = a(mode, q - 1);
            sel->score = sel->alpha / lambdas.back();
          }
          force_refit = false;
        } catch (const NumericFailure& ex) {
          if (attempt > 0) {
            rec.status = "aborted";
            rec.error = "iteration " + std::to_string(t) + ": " + ex.what();
            return rec;
          }
        }
      }
      u = sel->e;
      level = sel->level;
      alpha = sel->alpha;
      score = sel->score;
      best_per_level = sel->best_score_per_level;
    }

    auto& qe = execute(t, u, level, derive_seed(cfg.seed, {seed_tag::kIterationSim, static_cast<std::uint64_t>(t)}));
    qe.alpha = alpha;
    qe.score = score;
    qe.best_score_per_level = std::move(best_per_level);
    qe.trust_length = trust;
    if (qe.rho < 0.0)
      rec.counterexamples.push_back({rec.entries.size() - 1, qe.e, qe.fidelity, qe.rho, {}, {}, {}});

    if (cfg.method == Method::turbo1 && !cfg.selector) {
      const bool success = qe.rho < turbo.best - 1e-3 * std::abs(turbo.best);
      const Point here = env.space().to_unit(qe.e);
      turbo = turbo_update(turbo, success, cfg.turbo);
      if (turbo.restarted) {
        Rng rng(derive_seed(cfg.seed, {seed_tag::kTurboRestart, static_cast<std::uint64_t>(turbo.restarts)}));
        std::uniform_real_distribution<double> u01;
        for (double& c : turbo.center) c = u01(rng);
        force_refit = true;
      } else if (success) {
        turbo.center = here;
        turbo.best = qe.rho;
      }
    }
  }
  return rec;
}

inline RunRecord run_mfbo(FalsifierConfig cfg, const Environment& env, const CostTable& costs) {
  cfg.method = Method::mfbo;
  return run_falsifier(cfg, env, costs);
}

inline RunRecord run_bo_single(FalsifierConfig cfg, const Environment& env, int fidelity, const CostTable& costs) {
  cfg.method = Method::bo_single;
  cfg.fidelities = {fidelity};
  return run_falsifier(cfg, env, costs);
}

inline RunRecord run_turbo1(FalsifierConfig cfg, const Environment& env, const CostTable& costs) {
  cfg.method = Method::turbo1;
  if (cfg.fidelities.empty()) cfg.fidelities = {env.q()};
  return run_falsifier(cfg, env, costs);
}

inline RunRecord run_pibo(FalsifierConfig cfg, const Environment& env, const CostTable& costs) {
  cfg.method = Method::pibo;
  if (cfg.fidelities.empty()) cfg.fidelities = {env.q()};
  return run_falsifier(cfg, env, costs);
}

// ---------------------------------------------------------------------------
// Validation and metrics

struct ValidationSummary {
  std::size_t total = 0;
  std::size_t validated = 0;
  std::optional<double> reliability_percent;  // absent without counterexamples
};

/// Re-simulates lower-fidelity counterexamples at the top fidelity of `env`
/// (the unrestricted environment) with fresh seeds. Top-fidelity finds are
/// validated as found.
inline ValidationSummary validate_counterexamples(RunRecord& rec, const Environment& env) {
  if (rec.q_env != env.q()) throw InvalidInput("record and environment disagree on the number of fidelities");
  ValidationSummary out;
  const int top = env.q();
  for (std::size_t k = 0; k < rec.counterexamples.size(); ++k) {
    auto& c = rec.counterexamples[k];
    if (c.found_at_fidelity == top) {
      c.validated = true;
      c.rho_at_q = c.rho;
      c.validation_seed.reset();
    } else {
      const auto seed = derive_seed(rec.seed, {seed_tag::kValidation, static_cast<std::uint64_t>(k)});
      const double r = env.robustness(top, EnvParams{c.e}, seed);
      c.validated = r < 0.0;
      c.rho_at_q = r;
      c.validation_seed = seed;
    }
    ++out.total;
    if (*c.validated) ++out.validated;
  }
  if (out.total > 0) out.reliability_percent = 100.0 * static_cast<double>(out.validated) / static_cast<double>(out.total);
  return out;
}

/// Total cost over the (validated) counterexample count; absent when zero.
inline std::optional<double> cost_per_counterexample(const RunRecord& rec, bool validated_only) {
  std::size_t n = 0;
  for (const auto& c : rec.counterexamples)
    if (!validated_only || c.validated.value_or(false)) ++n;
  if (n == 0) return std::nullopt;
  return rec.total_cost() / static_cast<double>(n);
}

struct FirstHit {
  double cost = 0.0;
  bool censored = false;  // no validated counterexample: cost is the run total
};

/// Cumulative cost (initial design included) at the query that produced the
/// first validated counterexample.
inline FirstHit cost_to_first_validated(const RunRecord& rec) {
  for (const auto& c : rec.counterexamples)
    if (c.validated.value_or(false)) return {rec.entries.at(c.entry).cumulative_cost, false};
  return {rec.total_cost(), true};
}

/// Share of executed queries (initial design included) per environment fidelity, in percent.
inline std::vector<double> fidelity_execution_percent(const RunRecord& rec) {
  std::vector<double> pct(static_cast<std::size_t>(rec.q_env), 0.0);
  if (rec.entries.empty()) return pct;
  for (const auto& q : rec.entries) pct[static_cast<std::size_t>(q.fidelity - 1)] += 1.0;
  for (double& p : pct) p *= 100.0 / static_cast<double>(rec.entries.size());
  return pct;
}

}  // namespace mffals
