#pragma once

// Auto-regressive multi-fidelity GP: level l output = η_l · (level l-1 output)
// + independent gap process. Treated as one GP over (e, level) inputs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "mffals/error.hpp"
#include "mffals/gp.hpp"
#include "mffals/optimize.hpp"
#include "mffals/space.hpp"

namespace mffals {

/// Environment parameter tagged with a fidelity level in 1..q.
struct FidelityInput {
  Eigen::VectorXd e;
  int level = 1;
};

struct ArParams {
  std::vector<double> eta;             // η_2..η_q
  RbfKernel base_kernel;               // level 1
  std::vector<RbfKernel> gap_kernels;  // levels 2..q
  double noise_variance = 1e-6;

  int levels() const { return 1 + static_cast<int>(eta.size()); }
  std::size_t dim() const { return base_kernel.dim(); }

  void check() const {
    if (gap_kernels.size() != eta.size()) throw InvalidInput("ArParams: need one gap kernel per level above 1");
    for (const auto& g : gap_kernels)
      if (g.dim() != base_kernel.dim()) throw InvalidInput("ArParams: gap kernel dimension mismatch");
    for (double h : eta)
      if (!std::isfinite(h)) throw InvalidInput("ArParams: eta must be finite");
  }

  /// q = 1 wrapper around a single RBF kernel.
  static ArParams single(const RbfKernel& k, double noise_variance) { return {{}, k, {}, noise_variance}; }
};

namespace detail {

/// k_l(e, e2) with k_1 = base, k_l = η_l² k_{l-1} + gap_l.
inline double level_kernel(const ArParams& p, const Eigen::VectorXd& a, const Eigen::VectorXd& b, int level) {
  double k = p.base_kernel(a, b);
  for (int l = 2; l <= level; ++l) {
    const double h = p.eta[static_cast<std::size_t>(l - 2)];
    k = h * h * k + p.gap_kernels[static_cast<std::size_t>(l - 2)](a, b);
  }
  return k;
}

inline double mf_cov_unchecked(const ArParams& p, const FidelityInput& a, const FidelityInput& b) {
  const int lo = std::min(a.level, b.level);
  const int hi = std::max(a.level, b.level);
  double scale = 1.0;
  for (int l = lo + 1; l <= hi; ++l) scale *= p.eta[static_cast<std::size_t>(l - 2)];
  return scale * level_kernel(p, a.e, b.e, lo);
}

}  // namespace detail

inline double mf_cov(const FidelityInput& a, const FidelityInput& b, const ArParams& p) {
  const int q = p.levels();
  if (a.level < 1 || a.level > q || b.level < 1 || b.level > q)
    throw InvalidInput("fidelity index out of range 1.." + std::to_string(q));
  if (static_cast<std::size_t>(a.e.size()) != p.dim() || static_cast<std::size_t>(b.e.size()) != p.dim())
    throw InvalidInput("mf_cov: input dimension mismatch");
  return detail::mf_cov_unchecked(p, a, b);
}

struct ArKernel {
  ArParams params;

  double operator()(const FidelityInput& a, const FidelityInput& b) const {
    return detail::mf_cov_unchecked(params, a, b);
  }
};

using MfPosterior = GpPosterior<FidelityInput, ArKernel>;

struct LevelData {
  std::vector<Point> inputs;
  std::vector<double> outputs;
};

struct MfDataset {
  std::vector<LevelData> levels;  // index 0 = fidelity 1

  int q() const { return static_cast<int>(levels.size()); }

  std::size_t dim() const {
    for (const auto& l : levels)
      if (!l.inputs.empty()) return l.inputs.front().size();
    return 0;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.inputs.size();
    return n;
  }

  void add(int level, Point e, double y) {
    if (level < 1) throw InvalidInput("fidelity index must be >= 1");
    if (static_cast<int>(levels.size()) < level) levels.resize(static_cast<std::size_t>(level));
    levels[static_cast<std::size_t>(level - 1)].inputs.push_back(std::move(e));
    levels[static_cast<std::size_t>(level - 1)].outputs.push_back(y);
  }

  std::pair<std::vector<FidelityInput>, Eigen::VectorXd> flatten() const {
    std::vector<FidelityInput> xs;
    std::vector<double> ys;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      if (levels[l].inputs.size() != levels[l].outputs.size()) throw InvalidInput("MfDataset level length mismatch");
      for (std::size_t i = 0; i < levels[l].inputs.size(); ++i) {
        const auto& p = levels[l].inputs[i];
        xs.push_back({Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())),
                      static_cast<int>(l) + 1});
        ys.push_back(levels[l].outputs[i]);
      }
    }
    return {std::move(xs), Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()))};
  }

  /// inputs(D_q) ⊆ … ⊆ inputs(D_1), compared exactly.
  bool is_nested() const {
    for (std::size_t l = 1; l < levels.size(); ++l) {
      std::set<Point> lower(levels[l - 1].inputs.begin(), levels[l - 1].inputs.end());
      for (const auto& p : levels[l].inputs)
        if (!lower.count(p)) return false;
    }
    return true;
  }
};

inline MfPosterior build_mf_posterior(const MfDataset& ds, const ArParams& p, const JitterSchedule& jitter = {}) {
  p.check();
  if (ds.q() > p.levels()) throw InvalidInput("dataset has more fidelities than the model");
  if (ds.total() == 0) throw InvalidInput("multi-fidelity dataset is empty");
  if (ds.dim() != p.dim()) throw InvalidInput("multi-fidelity dataset dimension does not match kernels");
  auto [xs, ys] = ds.flatten();
  return MfPosterior(ArKernel{p}, std::move(xs), std::move(ys), p.noise_variance, jitter, "multi-fidelity dataset");
}

inline Prediction mf_predict(const MfPosterior& post, std::span<const double> e, int level) {
  const auto& p = post.kernel().params;
  if (level < 1 || level > p.levels()) throw InvalidInput("fidelity index out of range");
  if (e.size() != p.dim()) throw InvalidInput("mf_predict: input dimension mismatch");
  return post.predict({Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())), level});
}

struct ArFitBounds {
  HyperBounds kernel{};
  std::pair<double, double> log_gap_variance{std::log(1e-6), std::log(1e2)};
  std::pair<double, double> eta{-10.0, 10.0};
};

struct ArFitOptions {
  int restarts = 3;
  std::uint64_t seed = 0;
  MinimizeOptions minimizer{};
  ArFitBounds bounds{};
  double fixed_noise_variance = 1e-6;  // used when bounds.kernel.fit_noise is false
  std::optional<ArParams> warm_start;
};

namespace detail {

struct ArLayout {
  std::size_t d = 0;
  int q = 2;
  bool fit_noise = true;

  std::size_t size() const { return (1 + d) + static_cast<std::size_t>(q - 1) * (2 + d) + (fit_noise ? 1 : 0); }

  ArParams unpack(std::span<const double> x, double fixed_noise) const {
    ArParams p;
    std::size_t k = 0;
    auto kernel = [&](double log_var) {
      RbfKernel r;
      r.signal_variance = std::exp(log_var);
      r.lengthscales.resize(d);
      for (std::size_t j = 0; j < d; ++j) r.lengthscales[j] = std::exp(x[k++]);
      return r;
    };
    const double base_var = x[k++];
    p.base_kernel = kernel(base_var);
    for (int l = 2; l <= q; ++l) {
      p.eta.push_back(x[k++]);
      const double gap_var = x[k++];
      p.gap_kernels.push_back(kernel(gap_var));
    }
    p.noise_variance = fit_noise ? std::exp(x[k]) : fixed_noise;
    return p;
  }

  std::vector<double> pack(const ArParams& p) const {
    std::vector<double> x;
    auto kernel = [&](const RbfKernel& r) {
      x.push_back(std::log(r.signal_variance));
      for (std::size_t j = 0; j < d; ++j) x.push_back(std::log(r.lengthscales[j]));
    };
    kernel(p.base_kernel);
    for (int l = 2; l <= q; ++l) {
      x.push_back(p.eta[static_cast<std::size_t>(l - 2)]);
      const auto& g = p.gap_kernels[static_cast<std::size_t>(l - 2)];
      x.push_back(std::log(g.signal_variance));
      for (std::size_t j = 0; j < d; ++j) x.push_back(std::log(g.lengthscales[j]));
    }
    if (fit_noise) x.push_back(std::log(p.noise_variance));
    return x;
  }

  Box box(const ArFitBounds& b) const {
    Box out;
    auto add = [&](std::pair<double, double> r) {
      out.lower.push_back(r.first);
      out.upper.push_back(r.second);
    };
    add(b.kernel.log_signal_variance);
    for (std::size_t j = 0; j < d; ++j) add(b.kernel.log_lengthscale);
    for (int l = 2; l <= q; ++l) {
      add(b.eta);
      add(b.log_gap_variance);
      for (std::size_t j = 0; j < d; ++j) add(b.kernel.log_lengthscale);
    }
    if (fit_noise) add(b.kernel.log_noise_variance);
    return out;
  }

  std::vector<std::size_t> eta_slots() const {
    std::vector<std::size_t> s;
    for (int l = 2; l <= q; ++l) s.push_back((1 + d) + static_cast<std::size_t>(l - 2) * (2 + d));
    return s;
  }
};

}  // namespace detail

struct FittedAr {
  ArParams params;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

/// Maximizes the joint log marginal likelihood over η, both kernel families
/// and the noise variance. Every start has η = 1; other parameters of
/// restarts after the first are drawn uniformly in their bounds.
inline FittedAr fit_ar_params(const MfDataset& ds, const ArFitOptions& opt) {
  if (ds.q() < 2) throw InvalidInput("at least 2 fidelities required for an auto-regressive model");
  if (opt.restarts < 1) throw InvalidInput("restarts must be >= 1");
  if (ds.total() == 0) throw InvalidInput("multi-fidelity dataset is empty");

  const detail::ArLayout layout{ds.dim(), ds.q(), opt.bounds.kernel.fit_noise};
  const Box box = layout.box(opt.bounds);
  auto [xs, ys] = ds.flatten();

  const Objective objective = [&](std::span<const double> x) {
    const ArParams p = layout.unpack(x, opt.fixed_noise_variance);
    try {
      return -MfPosterior(ArKernel{p}, xs, ys, p.noise_variance).log_marginal_likelihood();
    } catch (const NumericFailure&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> first(box.dim());
  for (std::size_t j = 0; j < box.dim(); ++j) first[j] = 0.5 * (box.lower[j] + box.upper[j]);
  if (opt.warm_start && opt.warm_start->levels() == ds.q() && opt.warm_start->dim() == ds.dim()) {
    first = layout.pack(*opt.warm_start);
  }
  auto starts = restart_points(box, first, opt.restarts, opt.seed);
  for (std::size_t r = 0; r < starts.size(); ++r)
    for (std::size_t s : layout.eta_slots())
      if (r > 0 || !opt.warm_start) starts[r][s] = 1.0;

  const auto res = multistart_minimize(objective, box, starts, opt.minimizer);
  return {layout.unpack(res.x, opt.fixed_noise_variance), -res.value};
}

/// Default initial-design sizes: 5·d at fidelity 1, halved per level, at least 2.
inline std::vector<std::size_t> default_design_sizes(std::size_t d, int q) {
  std::vector<std::size_t> sizes{5 * d};
  for (int l = 2; l <= q; ++l) sizes.push_back(std::max<std::size_t>(2, sizes.back() / 2));
  return sizes;
}

/// Latin-hypercube E_1 and random nested subsets E_q ⊆ … ⊆ E_1 (in physical
/// coordinates). Subsets keep the order of their parent set.
inline std::vector<std::vector<Point>> make_nested_design(const UncertaintySpace& space,
                                                          const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.empty() || sizes.back() < 1) throw InvalidInput("nested design sizes must be nonempty and >= 1");
  for (std::size_t l = 1; l < sizes.size(); ++l)
    if (sizes[l] > sizes[l - 1]) throw InvalidInput("nested design sizes must be non-increasing");

  Rng rng(seed);
  std::vector<std::vector<Point>> design;
  design.push_back(latin_hypercube(sizes[0], space.lower(), space.upper(), rng));
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const auto& parent = design.back();
    std::vector<std::size_t> idx(parent.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(sizes[l]);
    std::sort(idx.begin(), idx.end());
    std::vector<Point> child;
    for (auto i : idx) child.push_back(parent[i]);
    design.push_back(std::move(child));
  }
  return design;
}

}  // namespace mffals
