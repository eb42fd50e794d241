#pragma once

// Relative query costs from wall-clock time and trajectory similarity:
//   λ_q / λ_i = (t_q / t_i) · s_i,   s_i = cos(ξ_q, ξ_i),   λ_1 = 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mffals/error.hpp"
#include "mffals/rng.hpp"
#include "mffals/spec_logic.hpp"

namespace mffals {

struct CostTable {
  std::vector<double> lambdas;  // index 0 = fidelity 1, normalized to 1
  std::string provenance = "configured";
  std::vector<double> timing_seconds;  // measured tables only
  std::vector<double> similarity;      // mean cosine similarity to the top fidelity
  bool ordering_warning = false;       // λ not non-decreasing in fidelity
  bool similarity_floored = false;     // some similarity ≤ 0 was floored

  int q() const { return static_cast<int>(lambdas.size()); }

  double lambda(int fidelity) const {
    if (fidelity < 1 || fidelity > q()) throw InvalidInput("no cost for fidelity " + std::to_string(fidelity));
    return lambdas[static_cast<std::size_t>(fidelity - 1)];
  }

  /// Costs for a subset of fidelities, in the order given.
  std::vector<double> select(const std::vector<int>& fidelities) const {
    std::vector<double> out;
    for (int f : fidelities) out.push_back(lambda(f));
    return out;
  }

  static CostTable configured(std::vector<double> raw) {
    if (raw.empty()) throw InvalidInput("cost table is empty");
    for (double v : raw)
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("costs must be positive and finite");
    const double first = raw.front();
    for (double& v : raw) v /= first;
    CostTable t;
    t.lambdas = std::move(raw);
    t.ordering_warning = !std::is_sorted(t.lambdas.begin(), t.lambdas.end());
    return t;
  }
};

inline void to_json(nlohmann::json& j, const CostTable& t) {
  j = {{"lambdas", t.lambdas}, {"provenance", t.provenance}, {"ordering_warning", t.ordering_warning}};
  if (!t.timing_seconds.empty()) j["timing_seconds"] = t.timing_seconds;
  if (!t.similarity.empty()) j["similarity"] = t.similarity;
  if (t.similarity_floored) j["similarity_floored"] = true;
}

inline void from_json(const nlohmann::json& j, CostTable& t) {
  t = CostTable::configured(j.at("lambdas").get<std::vector<double>>());
  t.provenance = j.value("provenance", std::string("configured"));
  t.timing_seconds = j.value("timing_seconds", std::vector<double>{});
  t.similarity = j.value("similarity", std::vector<double>{});
  t.similarity_floored = j.value("similarity_floored", false);
}

/// Cosine of the two trajectories flattened (time-major) after truncating both
/// to the shorter length. Zero when either flattened vector is zero.
inline double cosine_similarity(const Trajectory& a, const Trajectory& b) {
  if (a.states.empty() || b.states.empty()) throw InvalidInput("cosine_similarity: empty trajectory");
  if (a.state_dim() != b.state_dim()) throw InvalidInput("cosine_similarity: state dimensionality mismatch");
  const std::size_t t = std::min(a.size(), b.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t j = 0; j < a.state_dim(); ++j) {
      const double x = a.states[k][j], y = b.states[k][j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

using FidelitySimulator = std::function<Trajectory(const EnvParams&, std::uint64_t seed)>;

struct MeasureOptions {
  int n_trials = 10;
  std::uint64_t seed = 0;
  double similarity_floor = 1e-6;
};

/// `sims[i]` runs fidelity i+1. Timing runs are sequential on the calling thread.
inline CostTable measure_costs(const std::vector<FidelitySimulator>& sims, const std::vector<EnvParams>& probes,
                               const MeasureOptions& opt = {}) {
  if (sims.empty()) throw InvalidInput("measure_costs: no simulators");
  if (probes.empty()) throw InvalidInput("measure_costs: probes must be nonempty");
  if (opt.n_trials < 1) throw InvalidInput("measure_costs: n_trials must be >= 1");
  const std::size_t q = sims.size();

  std::vector<std::uint64_t> probe_seeds;
  for (std::size_t p = 0; p < probes.size(); ++p) probe_seeds.push_back(derive_seed(opt.seed, {seed_tag::kProbe, p}));

  auto run = [&](std::size_t i, std::size_t p) {
    try {
      return sims[i](probes[p], probe_seeds[p]);
    } catch (const SimulatorFailure&) {
      throw;
    } catch (const std::exception& ex) {
      throw SimulatorFailure(static_cast<int>(i) + 1, ex.what());
    }
  };

  CostTable table;
  table.provenance = "measured";
  table.timing_seconds.assign(q, 0.0);
  std::vector<std::vector<Trajectory>> reference(q);
  using Clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < q; ++i) {
    double total = 0.0;
    for (int trial = 0; trial < opt.n_trials; ++trial) {
      for (std::size_t p = 0; p < probes.size(); ++p) {
        const auto t0 = Clock::now();
        Trajectory traj = run(i, p);
        total += std::chrono::duration<double>(Clock::now() - t0).count();
        if (trial == 0) reference[i].push_back(std::move(traj));
      }
    }
    table.timing_seconds[i] = total / static_cast<double>(opt.n_trials * probes.size());
  }

  table.similarity.assign(q, 1.0);
  for (std::size_t i = 0; i + 1 < q; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < probes.size(); ++p) s += cosine_similarity(reference[i][p], reference[q - 1][p]);
    table.similarity[i] = s / static_cast<double>(probes.size());
  }

  // ratio_i = λ_q / λ_i; λ_i = ratio_1 / ratio_i so that λ_1 = 1.
  std::vector<double> ratio(q);
  for (std::size_t i = 0; i < q; ++i) {
    double s = table.similarity[i];
    if (s < opt.similarity_floor) {
      s = opt.similarity_floor;
      table.similarity_floored = true;
    }
    const double t = std::max(table.timing_seconds[i], 1e-12);
    ratio[i] = (table.timing_seconds[q - 1] / t) * s;
  }
  table.lambdas.resize(q);
  for (std::size_t i = 0; i < q; ++i) table.lambdas[i] = ratio[0] / ratio[i];
  table.lambdas[0] = 1.0;
  table.ordering_warning = !std::is_sorted(table.lambdas.begin(), table.lambdas.end());
  return table;
}

}  // namespace mffals
