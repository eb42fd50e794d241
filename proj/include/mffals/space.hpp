#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mffals/error.hpp"
#include "mffals/rng.hpp"

namespace mffals {

using Point = std::vector<double>;

/// Axis-aligned box of environment parameters.
class UncertaintySpace {
 public:
  UncertaintySpace() = default;
  UncertaintySpace(std::vector<double> lower, std::vector<double> upper) : lo_(std::move(lower)), hi_(std::move(upper)) {
    if (lo_.size() != hi_.size() || lo_.empty()) throw InvalidInput("uncertainty space bounds malformed");
    for (std::size_t j = 0; j < lo_.size(); ++j)
      if (!(lo_[j] < hi_[j])) throw InvalidInput("uncertainty space interval " + std::to_string(j) + " is empty");
  }

  std::size_t dim() const { return lo_.size(); }
  const std::vector<double>& lower() const { return lo_; }
  const std::vector<double>& upper() const { return hi_; }
  double width(std::size_t j) const { return hi_[j] - lo_[j]; }

  bool contains(std::span<const double> e, double tol = 1e-12) const {
    if (e.size() != dim()) return false;
    for (std::size_t j = 0; j < dim(); ++j)
      if (e[j] < lo_[j] - tol * width(j) || e[j] > hi_[j] + tol * width(j)) return false;
    return true;
  }

  void require_contains(std::span<const double> e) const {
    if (e.size() != dim())
      throw InvalidInput("environment parameter has dimension " + std::to_string(e.size()) + ", expected " +
                         std::to_string(dim()));
    if (!contains(e)) throw InvalidInput("environment parameter outside the uncertainty space");
  }

  Point to_unit(std::span<const double> e) const {
    Point u(dim());
    for (std::size_t j = 0; j < dim(); ++j) u[j] = (e[j] - lo_[j]) / width(j);
    return u;
  }

  Point from_unit(std::span<const double> u) const {
    Point e(dim());
    for (std::size_t j = 0; j < dim(); ++j) e[j] = std::clamp(lo_[j] + u[j] * width(j), lo_[j], hi_[j]);
    return e;
  }

  static UncertaintySpace unit(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

 private:
  std::vector<double> lo_, hi_;
};

/// Latin hypercube sample of `n` points in [lower, upper] (per-dimension boxes).
inline std::vector<Point> latin_hypercube(std::size_t n, std::span<const double> lower, std::span<const double> upper,
                                          Rng& rng) {
  const std::size_t d = lower.size();
  std::vector<Point> pts(n, Point(d));
  std::vector<std::size_t> perm(n);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = (static_cast<double>(perm[i]) + u01(rng)) / static_cast<double>(n);
      pts[i][j] = lower[j] + s * (upper[j] - lower[j]);
    }
  }
  return pts;
}

inline std::vector<Point> latin_hypercube_unit(std::size_t n, std::size_t d, Rng& rng) {
  const std::vector<double> lo(d, 0.0), hi(d, 1.0);
  return latin_hypercube(n, lo, hi, rng);
}

}  // namespace mffals
