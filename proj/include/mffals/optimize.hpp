#pragma once

// Bounded derivative-free minimization: GSL's Nelder-Mead simplex run in an
// unconstrained logistic reparameterization of a box, with seeded restarts.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "mffals/error.hpp"
#include "mffals/rng.hpp"

namespace mffals {

struct Box {
  std::vector<double> lower, upper;

  std::size_t dim() const { return lower.size(); }
  double clamp(std::size_t j, double v) const { return std::min(upper[j], std::max(lower[j], v)); }
};

struct MinimizeOptions {
  int max_evaluations = 2000;
  double simplex_tolerance = 1e-6;
  double initial_step = 0.8;  // in the unconstrained coordinates
};

struct MinimizeResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

namespace detail {

inline double to_box(double z, double lo, double hi) {
  return lo + (hi - lo) / (1.0 + std::exp(-z));
}

inline double from_box(double x, double lo, double hi) {
  const double eps = 1e-9;
  double u = (x - lo) / (hi - lo);
  u = std::min(1.0 - eps, std::max(eps, u));
  return std::log(u / (1.0 - u));
}

struct GslContext {
  const Objective* f;
  const Box* box;
  std::vector<double> scratch;
  int evaluations = 0;
  MinimizeResult best;
};

inline double gsl_trampoline(const gsl_vector* z, void* params) {
  auto* ctx = static_cast<GslContext*>(params);
  for (std::size_t j = 0; j < ctx->box->dim(); ++j)
    ctx->scratch[j] = to_box(gsl_vector_get(z, j), ctx->box->lower[j], ctx->box->upper[j]);
  ++ctx->evaluations;
  double v = (*ctx->f)(ctx->scratch);
  if (!std::isfinite(v)) return std::numeric_limits<double>::max() / 4;
  if (v < ctx->best.value) {
    ctx->best.value = v;
    ctx->best.x = ctx->scratch;
  }
  return v;
}

}  // namespace detail

/// Minimizes `f` over `box` starting at `start` (clamped into the box).
/// Non-finite objective values are treated as a large penalty.
inline MinimizeResult nelder_mead(const Objective& f, std::vector<double> start, const Box& box,
                                  const MinimizeOptions& opt = {}) {
  const std::size_t n = box.dim();
  if (start.size() != n) throw InvalidInput("nelder_mead: start dimension does not match box");
  detail::GslContext ctx{&f, &box, std::vector<double>(n), 0, {}};

  if (n == 0) {
    ctx.best.value = f(ctx.scratch);
    ctx.best.evaluations = 1;
    return ctx.best;
  }

  gsl_set_error_handler_off();
  gsl_vector* z = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t j = 0; j < n; ++j) {
    gsl_vector_set(z, j, detail::from_box(box.clamp(j, start[j]), box.lower[j], box.upper[j]));
    gsl_vector_set(step, j, opt.initial_step);
  }
  gsl_multimin_function fn{&detail::gsl_trampoline, n, &ctx};
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, z, step);

  while (ctx.evaluations < opt.max_evaluations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.simplex_tolerance) == GSL_SUCCESS) break;
  }

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(z);
  ctx.best.evaluations = ctx.evaluations;
  return ctx.best;
}

/// Best of several local searches from explicit starting points. Throws
/// NumericFailure when no start reaches a finite objective value.
inline MinimizeResult multistart_minimize(const Objective& f, const Box& box,
                                          const std::vector<std::vector<double>>& starts,
                                          const MinimizeOptions& opt = {}) {
  if (starts.empty()) throw InvalidInput("restarts must be >= 1");
  MinimizeResult best;
  for (const auto& x0 : starts) {
    auto res = nelder_mead(f, x0, box, opt);
    if (std::isfinite(res.value) && res.value < best.value) best = std::move(res);
  }
  if (!std::isfinite(best.value)) throw NumericFailure("all optimization restarts failed");
  return best;
}

/// `first_start`, then `restarts - 1` uniform draws in the box. Deterministic given `seed`.
inline std::vector<std::vector<double>> restart_points(const Box& box, std::vector<double> first_start, int restarts,
                                                       std::uint64_t seed) {
  if (restarts < 1) throw InvalidInput("restarts must be >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> starts{std::move(first_start)};
  for (int r = 1; r < restarts; ++r) {
    std::vector<double> x(box.dim());
    for (std::size_t j = 0; j < box.dim(); ++j) x[j] = std::uniform_real_distribution<double>(box.lower[j], box.upper[j])(rng);
    starts.push_back(std::move(x));
  }
  return starts;
}

inline MinimizeResult multistart_minimize(const Objective& f, const Box& box, std::vector<double> first_start,
                                          int restarts, std::uint64_t seed, const MinimizeOptions& opt = {}) {
  return multistart_minimize(f, box, restart_points(box, std::move(first_start), restarts, seed), opt);
}

}  // namespace mffals
