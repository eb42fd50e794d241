#pragma once

// Safety specifications as predicate/connective trees with quantitative
// (robustness) semantics over sampled trajectories.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mffals/error.hpp"

namespace mffals {

using State = std::vector<double>;

struct EnvParams {
  std::vector<double> values;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  int fidelity_index = 1;
  EnvParams env_params;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }

  void push(double t, State s) {
    times.push_back(t);
    states.push_back(std::move(s));
  }

  /// Throws InvalidInput when the structural invariants do not hold.
  void check() const {
    if (states.empty()) throw InvalidInput("trajectory is empty");
    if (times.size() != states.size()) throw InvalidInput("trajectory times/states length mismatch");
    const auto d = states.front().size();
    for (std::size_t k = 0; k < states.size(); ++k) {
      if (states[k].size() != d) throw InvalidInput("trajectory states have inconsistent dimensionality");
      if (k > 0 && !(times[k] > times[k - 1])) throw InvalidInput("trajectory times must be increasing");
    }
  }
};

/// A named margin function over a whole trajectory. `state_dim` is the
/// dimensionality the margin function expects (0 accepts any).
struct Predicate {
  std::string name;
  std::size_t state_dim = 0;
  std::function<double(const Trajectory&)> margin;
};

struct RobustnessValue {
  double value = 0.0;
  int fidelity_index = 1;
};

/// Negative robustness is a violation; zero counts as satisfied.
inline bool is_falsified(const RobustnessValue& rho) { return rho.value < 0.0; }
inline bool is_falsified(double rho) { return rho < 0.0; }

class SpecFormula {
 public:
  struct Not;
  struct And;
  struct Or;
  using Node = std::variant<Predicate, Not, And, Or>;

  SpecFormula() = default;

  static SpecFormula pred(Predicate p);
  static SpecFormula negate(SpecFormula f);
  static SpecFormula conj(SpecFormula a, SpecFormula b);
  static SpecFormula disj(SpecFormula a, SpecFormula b);

  bool empty() const { return node_ == nullptr; }
  const Node& node() const;

  std::size_t depth() const;

 private:
  struct Holder;
  explicit SpecFormula(std::shared_ptr<const Holder> n) : node_(std::move(n)) {}
  std::shared_ptr<const Holder> node_;
};

struct SpecFormula::Not {
  SpecFormula child;
};
struct SpecFormula::And {
  SpecFormula left, right;
};
struct SpecFormula::Or {
  SpecFormula left, right;
};
struct SpecFormula::Holder {
  Node node;
};

inline const SpecFormula::Node& SpecFormula::node() const {
  if (!node_) throw InvalidInput("empty formula");
  return node_->node;
}

inline SpecFormula SpecFormula::pred(Predicate p) { return SpecFormula(std::make_shared<const Holder>(Holder{std::move(p)})); }
inline SpecFormula SpecFormula::negate(SpecFormula f) {
  return SpecFormula(std::make_shared<const Holder>(Holder{Not{std::move(f)}}));
}
inline SpecFormula SpecFormula::conj(SpecFormula a, SpecFormula b) {
  return SpecFormula(std::make_shared<const Holder>(Holder{And{std::move(a), std::move(b)}}));
}
inline SpecFormula SpecFormula::disj(SpecFormula a, SpecFormula b) {
  return SpecFormula(std::make_shared<const Holder>(Holder{Or{std::move(a), std::move(b)}}));
}

inline std::size_t SpecFormula::depth() const {
  return std::visit(
      [](const auto& n) -> std::size_t {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Predicate>) return 1;
        else if constexpr (std::is_same_v<T, Not>) return 1 + n.child.depth();
        else return 1 + std::max(n.left.depth(), n.right.depth());
      },
      node());
}

inline double eval_robustness_value(const SpecFormula& formula, const Trajectory& traj) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Predicate>) {
          if (n.state_dim != 0 && n.state_dim != traj.state_dim())
            throw InvalidInput("predicate '" + n.name + "' expects state dimension " + std::to_string(n.state_dim) +
                               ", trajectory has " + std::to_string(traj.state_dim()));
          return n.margin(traj);
        } else if constexpr (std::is_same_v<T, SpecFormula::Not>) {
          return -eval_robustness_value(n.child, traj);
        } else if constexpr (std::is_same_v<T, SpecFormula::And>) {
          return std::min(eval_robustness_value(n.left, traj), eval_robustness_value(n.right, traj));
        } else {
          return std::max(eval_robustness_value(n.left, traj), eval_robustness_value(n.right, traj));
        }
      },
      formula.node());
}

inline RobustnessValue eval_robustness(const SpecFormula& formula, const Trajectory& traj) {
  traj.check();
  return {eval_robustness_value(formula, traj), traj.fidelity_index};
}

/// min over samples of `fn(state)`; the always-scope used by all built-in predicates.
template <class F>
double min_over_time(const Trajectory& traj, F&& fn) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : traj.states) m = std::min(m, static_cast<double>(fn(s)));
  return m;
}

// ---------------------------------------------------------------------------
// Built-in predicates

namespace predicates {

inline constexpr double kVehicleLength = 5.0;

inline Predicate cart_position(double limit = 1.0) {
  return {"cart_position", 4, [limit](const Trajectory& t) {
            return min_over_time(t, [&](const State& s) { return limit - std::abs(s[0]); });
          }};
}

inline Predicate cart_momentum(double cart_mass = 1.0, double limit = 1.0) {
  return {"cart_momentum", 4, [cart_mass, limit](const Trajectory& t) {
            return min_over_time(t, [&](const State& s) { return limit - std::abs(cart_mass * s[1]); });
          }};
}

inline Predicate pole_angle(double limit_deg = 9.0) {
  const double limit = limit_deg * std::numbers::pi / 180.0;
  return {"pole_angle", 4, [limit](const Trajectory& t) {
            return min_over_time(t, [&](const State& s) { return limit - std::abs(s[2]); });
          }};
}

/// Ego-to-leader bumper gap minus the required distance. State layout is
/// (x_ego, v_ego, x_leader, v_leader) with x the front-bumper position.
inline Predicate idm_gap(double min_gap = 5.0) {
  return {"idm_gap", 4, [min_gap](const Trajectory& t) {
            return min_over_time(t, [&](const State& s) { return (s[2] - s[0] - kVehicleLength) - min_gap; });
          }};
}

/// One-channel trajectories from the analytic benchmark: value + shift.
inline Predicate synthetic_value(double shift = 0.0) {
  return {"synthetic_value", 1, [shift](const Trajectory& t) {
            return min_over_time(t, [&](const State& s) { return s[0] + shift; });
          }};
}

}  // namespace predicates

struct CartPoleSpecOptions {
  double cart_mass = 1.0;
  double position_limit = 1.0;
  double momentum_limit = 1.0;
  double angle_limit_deg = 9.0;
};

/// (position ∧ momentum) ∧ angle.
inline SpecFormula cartpole_spec(const CartPoleSpecOptions& o = {}) {
  return SpecFormula::conj(SpecFormula::conj(SpecFormula::pred(predicates::cart_position(o.position_limit)),
                                             SpecFormula::pred(predicates::cart_momentum(o.cart_mass, o.momentum_limit))),
                           SpecFormula::pred(predicates::pole_angle(o.angle_limit_deg)));
}

inline SpecFormula idm_chain_spec(double min_gap = 5.0) { return SpecFormula::pred(predicates::idm_gap(min_gap)); }

inline SpecFormula synthetic_spec(double shift) { return SpecFormula::pred(predicates::synthetic_value(shift)); }

// ---------------------------------------------------------------------------
// Serialization

/// Resolves predicate names found in serialized formulas.
class PredicateLibrary {
 public:
  PredicateLibrary() = default;
  explicit PredicateLibrary(std::vector<Predicate> preds) {
    for (auto& p : preds) add(std::move(p));
  }

  void add(Predicate p) { by_name_[p.name] = std::move(p); }

  const Predicate& at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidInput("unknown predicate '" + name + "'");
    return it->second;
  }

  static PredicateLibrary builtins(const CartPoleSpecOptions& cp = {}, double idm_min_gap = 5.0,
                                   double synthetic_shift = 0.0) {
    return PredicateLibrary({predicates::cart_position(cp.position_limit),
                             predicates::cart_momentum(cp.cart_mass, cp.momentum_limit),
                             predicates::pole_angle(cp.angle_limit_deg), predicates::idm_gap(idm_min_gap),
                             predicates::synthetic_value(synthetic_shift)});
  }

 private:
  std::map<std::string, Predicate> by_name_;
};

inline nlohmann::json formula_to_json(const SpecFormula& f) {
  return std::visit(
      [](const auto& n) -> nlohmann::json {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Predicate>) return nlohmann::json{{"pred", n.name}};
        else if constexpr (std::is_same_v<T, SpecFormula::Not>) return {{"op", "not"}, {"args", nlohmann::json::array({formula_to_json(n.child)})}};
        else if constexpr (std::is_same_v<T, SpecFormula::And>)
          return {{"op", "and"}, {"args", nlohmann::json::array({formula_to_json(n.left), formula_to_json(n.right)})}};
        else return {{"op", "or"}, {"args", nlohmann::json::array({formula_to_json(n.left), formula_to_json(n.right)})}};
      },
      f.node());
}

/// n-ary "and"/"or" nodes fold left into binary trees.
inline SpecFormula formula_from_json(const nlohmann::json& j, const PredicateLibrary& lib) {
  if (!j.is_object()) throw InvalidInput("formula node must be an object");
  if (j.contains("pred")) return SpecFormula::pred(lib.at(j.at("pred").get<std::string>()));
  if (!j.contains("op") || !j.contains("args") || !j.at("args").is_array())
    throw InvalidInput("formula node needs either 'pred' or 'op'+'args'");
  const auto op = j.at("op").get<std::string>();
  const auto& args = j.at("args");
  if (op == "not") {
    if (args.size() != 1) throw InvalidInput("'not' takes exactly one argument");
    return SpecFormula::negate(formula_from_json(args[0], lib));
  }
  if (op != "and" && op != "or") throw InvalidInput("unknown formula op '" + op + "'");
  if (args.size() < 2) throw InvalidInput("'" + op + "' takes at least two arguments");
  SpecFormula acc = formula_from_json(args[0], lib);
  for (std::size_t k = 1; k < args.size(); ++k) {
    auto rhs = formula_from_json(args[k], lib);
    acc = op == "and" ? SpecFormula::conj(std::move(acc), std::move(rhs)) : SpecFormula::disj(std::move(acc), std::move(rhs));
  }
  return acc;
}

/// One `{"t":..., "state":[...]}` record per line.
inline void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj) {
  for (std::size_t k = 0; k < traj.size(); ++k) os << nlohmann::json{{"t", traj.times[k]}, {"state", traj.states[k]}}.dump() << '\n';
}

inline Trajectory read_trajectory_jsonl(std::istream& is) {
  Trajectory traj;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    traj.push(j.at("t").get<double>(), j.at("state").get<State>());
  }
  traj.check();
  return traj;
}

}  // namespace mffals
