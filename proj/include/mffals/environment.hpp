#pragma once

// A benchmark bundled for the falsifier: parameter space, spec and one
// simulator per fidelity (ordered lowest to highest).

#include <functional>
#include <string>
#include <vector>

#include "mffals/cartpole.hpp"
#include "mffals/cost_model.hpp"
#include "mffals/error.hpp"
#include "mffals/idm.hpp"
#include "mffals/space.hpp"
#include "mffals/spec_logic.hpp"
#include "mffals/synthetic.hpp"

namespace mffals {

class Environment {
 public:
  Environment() = default;
  Environment(std::string id, UncertaintySpace space, SpecFormula spec, std::vector<std::string> fidelity_names,
              std::vector<FidelitySimulator> sims)
      : id_(std::move(id)), space_(std::move(space)), spec_(std::move(spec)), names_(std::move(fidelity_names)),
        sims_(std::move(sims)) {
    if (sims_.empty() || sims_.size() != names_.size()) throw InvalidInput("environment needs one name per simulator");
    for (std::size_t i = 0; i < sims_.size(); ++i) source_.push_back(static_cast<int>(i) + 1);
  }

  const std::string& id() const { return id_; }
  const UncertaintySpace& space() const { return space_; }
  const SpecFormula& spec() const { return spec_; }
  int q() const { return static_cast<int>(sims_.size()); }
  const std::string& fidelity_name(int f) const { return names_.at(index(f)); }
  /// Fidelity index in the unrestricted environment this one was cut from.
  int source_fidelity(int f) const { return source_.at(index(f)); }

  /// Runs fidelity `f` (1-based). Bad parameters raise InvalidInput; anything
  /// else thrown by the simulator surfaces as SimulatorFailure.
  Trajectory simulate(int f, const EnvParams& e, std::uint64_t seed) const {
    const auto i = index(f);
    space_.require_contains(e.values);
    Trajectory t;
    try {
      t = sims_[i](e, seed);
    } catch (const InvalidInput&) {
      throw;
    } catch (const std::exception& ex) {
      throw SimulatorFailure(source_[i], ex.what());
    }
    t.fidelity_index = f;
    t.env_params = e;
    t.seed = seed;
    return t;
  }

  double robustness(int f, const EnvParams& e, std::uint64_t seed) const {
    return eval_robustness(spec_, simulate(f, e, seed)).value;
  }

  /// Keeps the listed fidelities (1-based, strictly increasing) and renumbers them 1..k.
  Environment restrict(const std::vector<int>& fidelities) const {
    if (fidelities.empty()) throw InvalidInput("restrict: no fidelities");
    Environment out;
    out.id_ = id_;
    out.space_ = space_;
    out.spec_ = spec_;
    int prev = 0;
    for (int f : fidelities) {
      if (f <= prev) throw InvalidInput("restrict: fidelities must be strictly increasing");
      prev = f;
      const auto i = index(f);
      out.names_.push_back(names_[i]);
      out.sims_.push_back(sims_[i]);
      out.source_.push_back(source_[i]);
    }
    return out;
  }

  std::vector<FidelitySimulator> per_fidelity() const { return sims_; }

  Environment with_spec(SpecFormula spec) const {
    Environment out = *this;
    out.spec_ = std::move(spec);
    return out;
  }

 private:
  std::size_t index(int f) const {
    if (f < 1 || f > q()) throw InvalidInput("environment '" + id_ + "' has no fidelity " + std::to_string(f));
    return static_cast<std::size_t>(f - 1);
  }

  std::string id_;
  UncertaintySpace space_;
  SpecFormula spec_;
  std::vector<std::string> names_;
  std::vector<FidelitySimulator> sims_;
  std::vector<int> source_;
};

inline Environment make_cartpole_environment(std::vector<CartPoleFidelityConfig> configs = {CartPoleFidelityConfig::low(),
                                                                                           CartPoleFidelityConfig::middle(),
                                                                                           CartPoleFidelityConfig::high()},
                                             Controller ctl = pd_balance_controller(kDefaultBalanceGains),
                                             CartPolePhysics phys = {}, CartPoleSpecOptions spec = {}) {
  std::vector<std::string> names;
  std::vector<FidelitySimulator> sims;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    configs[i].validate();
    names.push_back("cartpole_f" + std::to_string(i + 1));
    sims.push_back([cfg = configs[i], ctl, phys](const EnvParams& e, std::uint64_t seed) {
      return cartpole_simulate(cfg, e, ctl, seed, phys);
    });
  }
  spec.cart_mass = phys.cart_mass;
  return {"cartpole", cartpole_space(), cartpole_spec(spec), std::move(names), std::move(sims)};
}

inline Environment make_idm_environment(std::vector<IdmParams> leaders = {IdmParams::low(), IdmParams::middle(),
                                                                          IdmParams::high()},
                                        Controller ctl = headway_controller(), IdmScenario sc = {},
                                        double min_gap = 5.0) {
  std::vector<std::string> names;
  std::vector<FidelitySimulator> sims;
  for (std::size_t i = 0; i < leaders.size(); ++i) {
    leaders[i].validate();
    names.push_back("idm_f" + std::to_string(i + 1));
    sims.push_back([p = leaders[i], ctl, sc](const EnvParams& e, std::uint64_t seed) {
      return idm_chain_simulate(p, e, ctl, seed, sc);
    });
  }
  return {"idm_chain", idm_space(), idm_chain_spec(min_gap), std::move(names), std::move(sims)};
}

/// Spec shift that puts roughly 9% of the unit interval in violation at the top fidelity.
inline constexpr double kSyntheticShift = 5.0;

/// One-sample trajectories holding f_i(e); robustness is f_i(e) + shift.
inline Environment make_synthetic_environment(double shift = kSyntheticShift,
                                              SyntheticMfBenchmark bench = forrester_benchmark()) {
  std::vector<std::string> names;
  std::vector<FidelitySimulator> sims;
  for (int i = 1; i <= bench.q(); ++i) {
    names.push_back("synthetic_f" + std::to_string(i));
    sims.push_back([bench, i](const EnvParams& e, std::uint64_t seed) {
      Trajectory t;
      t.seed = seed;
      t.push(0.0, {synthetic_eval(bench, e.values, i)});
      return t;
    });
  }
  return {"synthetic", UncertaintySpace::unit(bench.d), synthetic_spec(shift), std::move(names), std::move(sims)};
}

}  // namespace mffals
