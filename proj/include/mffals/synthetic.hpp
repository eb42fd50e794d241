#pragma once

// Analytic two-fidelity test pair on [0, 1] (Forrester et al.).

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mffals/error.hpp"

namespace mffals {

struct SyntheticMfBenchmark {
  std::size_t d = 1;
  std::vector<std::function<double(std::span<const double>)>> levels;  // f_1 .. f_q
  std::vector<double> minimizer;  // of f_q
  double minimum = 0.0;

  int q() const { return static_cast<int>(levels.size()); }
};

inline double forrester_hf(double x) { return std::pow(6.0 * x - 2.0, 2) * std::sin(12.0 * x - 4.0); }
inline double forrester_lf(double x) { return 0.5 * forrester_hf(x) + 10.0 * (x - 0.5) - 5.0; }

inline SyntheticMfBenchmark forrester_benchmark() {
  SyntheticMfBenchmark b;
  b.levels = {[](std::span<const double> e) { return forrester_lf(e[0]); },
              [](std::span<const double> e) { return forrester_hf(e[0]); }};
  b.minimizer = {0.7572487572107901};
  b.minimum = -6.0207400557670825;
  return b;
}

inline double synthetic_eval(const SyntheticMfBenchmark& bench, std::span<const double> e, int fidelity) {
  if (fidelity < 1 || fidelity > bench.q()) throw InvalidInput("synthetic_eval: no fidelity " + std::to_string(fidelity));
  if (e.size() != bench.d) throw InvalidInput("synthetic_eval: dimension mismatch");
  for (double v : e)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("synthetic_eval: input outside the unit box");
  return bench.levels[static_cast<std::size_t>(fidelity - 1)](e);
}

}  // namespace mffals
