#pragma once

// Reference implementations the library is checked against. Written straight
// from the formulas, with dense inverses and plain loops instead of the
// factorizations and visitors used by the library.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mffals/mffals.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Formula trees

struct Node {
  int kind = 0;  // 0 predicate, 1 not, 2 and, 3 or
  int channel = 0;
  double threshold = 0.0;
  bool upper = true;  // margin c - s[ch] when true, s[ch] - c otherwise
  int left = -1, right = -1;
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root
};

inline int grow(Tree& t, int depth, int max_depth, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int idx = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  const bool leaf = depth + 1 >= max_depth || std::uniform_int_distribution<int>(0, 3)(rng) == 0;
  if (leaf) {
    t.nodes[idx].kind = 0;
    t.nodes[idx].channel = std::uniform_int_distribution<int>(0, static_cast<int>(dim) - 1)(rng);
    t.nodes[idx].threshold = u(rng);
    t.nodes[idx].upper = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    return idx;
  }
  const int kind = std::uniform_int_distribution<int>(1, 3)(rng);
  t.nodes[idx].kind = kind;
  const int l = grow(t, depth + 1, max_depth, dim, rng);
  t.nodes[idx].left = l;
  if (kind != 1) {
    const int r = grow(t, depth + 1, max_depth, dim, rng);
    t.nodes[idx].right = r;
  }
  return idx;
}

/// Random tree with at most `max_depth` levels (a lone predicate has depth 1).
inline Tree random_tree(int max_depth, std::size_t dim, std::mt19937_64& rng) {
  Tree t;
  grow(t, 0, max_depth, dim, rng);
  return t;
}

inline double eval(const Tree& t, int i, const std::vector<std::vector<double>>& states) {
  const Node& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.kind == 0) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : states) {
      const double v = n.upper ? n.threshold - s[static_cast<std::size_t>(n.channel)]
                               : s[static_cast<std::size_t>(n.channel)] - n.threshold;
      if (v < m) m = v;
    }
    return m;
  }
  const double a = eval(t, n.left, states);
  if (n.kind == 1) return -a;
  const double b = eval(t, n.right, states);
  if (n.kind == 2) return a < b ? a : b;
  return a > b ? a : b;
}

inline mffals::SpecFormula to_formula(const Tree& t, int i, std::size_t dim) {
  using mffals::SpecFormula;
  const Node& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.kind == 0) {
    const auto ch = static_cast<std::size_t>(n.channel);
    const double c = n.threshold;
    const bool up = n.upper;
    return SpecFormula::pred({"p", dim, [ch, c, up](const mffals::Trajectory& tr) {
                                return mffals::min_over_time(tr, [&](const mffals::State& s) { return up ? c - s[ch] : s[ch] - c; });
                              }});
  }
  if (n.kind == 1) return SpecFormula::negate(to_formula(t, n.left, dim));
  if (n.kind == 2) return SpecFormula::conj(to_formula(t, n.left, dim), to_formula(t, n.right, dim));
  return SpecFormula::disj(to_formula(t, n.left, dim), to_formula(t, n.right, dim));
}

inline mffals::Trajectory random_trajectory(std::size_t len, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  mffals::Trajectory tr;
  for (std::size_t k = 0; k < len; ++k) {
    mffals::State s(dim);
    for (auto& v : s) v = n01(rng);
    tr.push(0.1 * static_cast<double>(k), s);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Dense GP

inline double rbf(double sv, const std::vector<double>& ls, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < ls.size(); ++j) {
    const double z = (a[static_cast<Eigen::Index>(j)] - b[static_cast<Eigen::Index>(j)]) / ls[j];
    r2 += z * z;
  }
  return sv * std::exp(-0.5 * r2);
}

struct DenseGp {
  double mean, variance;
};

/// mean = kᵀ (K + s I)⁻¹ y, variance = k(x,x) − kᵀ (K + s I)⁻¹ k with an explicit inverse.
inline DenseGp dense_predict(const std::function<double(int, int)>& kxx, const std::function<double(int)>& kx,
                             double kss, const Eigen::VectorXd& y, double diag) {
  const auto n = y.size();
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = kxx(static_cast<int>(i), static_cast<int>(j)) + (i == j ? diag : 0.0);
  const Eigen::MatrixXd inv = a.fullPivLu().inverse();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k[i] = kx(static_cast<int>(i));
  return {k.dot(inv * y), kss - k.dot(inv * k)};
}

inline DenseGp dense_rbf_predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double sv,
                                 const std::vector<double>& ls, double diag, const Eigen::VectorXd& q) {
  return dense_predict([&](int i, int j) { return rbf(sv, ls, x.row(i).transpose(), x.row(j).transpose()); },
                       [&](int i) { return rbf(sv, ls, x.row(i).transpose(), q); }, sv, y, diag);
}

// ---------------------------------------------------------------------------
// Two-candidate arg-min quadrature

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// P(f1 < f2) for jointly Gaussian (f1, f2), by Simpson integration over f1:
/// ∫ φ(f1) P(f2 > f1 | f1) df1.
inline double p_first_is_min(double m1, double m2, double v1, double v2, double c12) {
  const double s1 = std::sqrt(v1);
  const double slope = c12 / v1;
  const double cond_sd = std::sqrt(std::max(v2 - c12 * c12 / v1, 0.0));
  const int n = 4000;  // even
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / n;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double z = lo + k * h;
    const double f1 = m1 + s1 * z;
    const double m2c = m2 + slope * (f1 - m1);
    const double tail = cond_sd > 0 ? 1.0 - norm_cdf((f1 - m2c) / cond_sd) : (m2c > f1 ? 1.0 : 0.0);
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * norm_pdf(z) * tail;
  }
  return acc * h / 3.0;
}

inline double h2(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log(1 - p);
  return h;
}

/// Expected drop in arg-min entropy over two candidates after observing y,
/// where (f1, f2) ~ N(m, S) and y has variance vy and covariance c with f.
inline double es_two_candidates(const Eigen::Vector2d& m, const Eigen::Matrix2d& s, const Eigen::Vector2d& c, double vy) {
  const double dvar0 = s(0, 0) + s(1, 1) - 2 * s(0, 1);
  const double h0 = h2(norm_cdf((m[1] - m[0]) / std::sqrt(dvar0)));
  const double dvar = std::max(dvar0 - (c[0] - c[1]) * (c[0] - c[1]) / vy, 1e-300);
  const int n = 4000;
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / n;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double z = lo + k * h;  // standardized y - E[y]
    const double dm = (m[1] - m[0]) + (c[1] - c[0]) * z / std::sqrt(vy);
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * norm_pdf(z) * h2(norm_cdf(dm / std::sqrt(dvar)));
  }
  return h0 - acc * h / 3.0;
}

}  // namespace oracle
