#pragma once

// Discretized Monte-Carlo entropy search over a candidate set.
//
// P_min is the distribution of the arg-min of the top-fidelity posterior over
// the candidates, estimated from joint posterior samples. A query (e, level) is
// valued by the expected drop in H(P_min) after conditioning on a fantasized
// observation at (e, level). Conditioning reuses the base samples through
// Matheron's rule: f | y = f + Σ_fy / var_y · (y_fantasy − y_sample), where
// y_sample is drawn jointly with f, so every fantasy is a rank-one update.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mffals/error.hpp"
#include "mffals/gp.hpp"
#include "mffals/multifidelity.hpp"
#include "mffals/rng.hpp"
#include "mffals/space.hpp"

namespace mffals {

/// Candidate environment parameters in unit-box coordinates.
struct CandidateSet {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }

  static CandidateSet latin(std::size_t m, std::span<const double> lower, std::span<const double> upper,
                            std::uint64_t seed) {
    Rng rng(seed);
    return {latin_hypercube(m, lower, upper, rng)};
  }
};

struct EsConfig {
  int n_candidates = 500;
  int n_posterior_samples = 256;
  int n_fantasies = 16;
  int threads = 1;
};

/// -Σ p log p in nats, 0·log 0 = 0.
inline double entropy(std::span<const double> p) {
  double sum = 0.0, h = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || v > 1.0 + 1e-12) throw InvalidInput("entropy: probabilities must lie in [0, 1]");
    sum += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("entropy: probabilities must sum to 1");
  return h;
}

namespace detail {

/// Per-sample arg-min of columns of `f` (+ beta·shift[s] when beta given);
/// ties share the unit mass. Accumulates counts into `counts`.
inline void accumulate_argmin(const Eigen::MatrixXd& f, const Eigen::VectorXd* beta, const Eigen::VectorXd* shift,
                              Eigen::VectorXd& counts) {
  const Eigen::Index m = f.rows();
  for (Eigen::Index s = 0; s < f.cols(); ++s) {
    const double* col = f.col(s).data();
    const double d = shift ? (*shift)[s] : 0.0;
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index idx = 0, ties = 0;
    if (beta) {
      const double* b = beta->data();
      for (Eigen::Index c = 0; c < m; ++c) {
        const double v = col[c] + b[c] * d;
        if (v < best) {
          best = v;
          idx = c;
          ties = 1;
        } else if (v == best) {
          ++ties;
        }
      }
    } else {
      for (Eigen::Index c = 0; c < m; ++c) {
        const double v = col[c];
        if (v < best) {
          best = v;
          idx = c;
          ties = 1;
        } else if (v == best) {
          ++ties;
        }
      }
    }
    if (ties == 1) {
      counts[idx] += 1.0;
    } else {
      const double share = 1.0 / static_cast<double>(ties);
      for (Eigen::Index c = 0; c < m; ++c) {
        const double v = beta ? col[c] + (*beta)[c] * d : col[c];
        if (v == best) counts[c] += share;
      }
    }
  }
}

inline double entropy_of_counts(const Eigen::VectorXd& counts, double total) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < counts.size(); ++c) {
    const double p = counts[c] / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace detail

/// Holds the joint posterior samples over the candidates at the target
/// (highest) fidelity for one posterior; evaluates entropy-search values.
class EntropySearch {
 public:
  EntropySearch(const MfPosterior& post, const CandidateSet& candidates, int n_samples, std::uint64_t seed,
                const JitterSchedule& jitter = {})
      : post_(&post), target_level_(post.kernel().params.levels()) {
    if (n_samples < 2) throw InvalidInput("n_posterior_samples must be >= 2");
    if (candidates.size() < 1) throw InvalidInput("candidate set is empty");
    const auto m = static_cast<Eigen::Index>(candidates.size());
    xs_.reserve(candidates.size());
    for (const auto& p : candidates.points)
      xs_.push_back({Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())), target_level_});

    mean_ = post.mean(xs_);
    whitened_ = post.whitened_cross(xs_);
    Eigen::MatrixXd cov = post.covariance(xs_);
    double scale = 0.0;
    for (const auto& x : xs_) scale = std::max(scale, post.kernel()(x, x));
    scale = std::max(scale, std::numeric_limits<double>::min());

    bool ok = false;
    for (double rel = jitter.initial_relative; rel <= jitter.max_relative * (1 + 1e-12); rel *= jitter.factor) {
      Eigen::MatrixXd a = cov;
      a.diagonal().array() += rel * scale;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) continue;
      lower_ = llt.matrixL();
      if (lower_.allFinite()) {
        ok = true;
        break;
      }
    }
    if (!ok) throw NumericFailure("joint posterior covariance over the candidate set is degenerate");

    Rng rng(seed);
    std::normal_distribution<double> n01;
    z_.resize(m, n_samples);
    for (Eigen::Index s = 0; s < n_samples; ++s)
      for (Eigen::Index c = 0; c < m; ++c) z_(c, s) = n01(rng);
    samples_ = lower_.triangularView<Eigen::Lower>() * z_;
    samples_.colwise() += mean_;

    Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
    detail::accumulate_argmin(samples_, nullptr, nullptr, counts);
    pmin_ = counts / static_cast<double>(n_samples);
    base_entropy_ = detail::entropy_of_counts(counts, static_cast<double>(n_samples));
  }

  const Eigen::VectorXd& pmin() const { return pmin_; }
  double base_entropy() const { return base_entropy_; }
  int target_level() const { return target_level_; }
  std::size_t n_candidates() const { return xs_.size(); }

  /// Expected entropy reduction (nats) from observing at (e, level).
  double value(std::span<const double> e, int level, int n_fantasies, std::uint64_t seed) const {
    if (n_fantasies < 1) throw InvalidInput("n_fantasies must be >= 1");
    const int q = post_->kernel().params.levels();
    if (level < 1 || level > q) throw InvalidInput("query fidelity out of range");
    const FidelityInput x{Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())), level};

    const Prediction pred = post_->predict(x);
    const double var_y = pred.variance + post_->noise_variance();
    if (!(var_y > 0.0)) return 0.0;

    const Eigen::VectorXd cross = post_->cross_covariance(xs_, whitened_, x);
    const Eigen::VectorXd u = lower_.triangularView<Eigen::Lower>().solve(cross);
    const double resid = std::max(0.0, var_y - u.squaredNorm());
    const Eigen::VectorXd beta = cross / var_y;

    Rng rng(seed);
    std::normal_distribution<double> n01;
    const Eigen::Index n_samples = samples_.cols();
    Eigen::VectorXd y_joint = z_.transpose() * u;
    const double sd_resid = std::sqrt(resid);
    for (Eigen::Index s = 0; s < n_samples; ++s) y_joint[s] += pred.mean + sd_resid * n01(rng);

    const double sd_y = std::sqrt(var_y);
    Eigen::VectorXd shift(n_samples);
    Eigen::VectorXd counts(samples_.rows());
    double expected_h = 0.0;
    for (int f = 0; f < n_fantasies; ++f) {
      const double y_f = pred.mean + sd_y * n01(rng);
      shift = (y_f - y_joint.array()).matrix();
      counts.setZero();
      detail::accumulate_argmin(samples_, &beta, &shift, counts);
      expected_h += detail::entropy_of_counts(counts, static_cast<double>(n_samples));
    }
    return base_entropy_ - expected_h / n_fantasies;
  }

 private:
  const MfPosterior* post_;
  int target_level_;
  std::vector<FidelityInput> xs_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd whitened_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXd samples_;
  Eigen::VectorXd pmin_;
  double base_entropy_ = 0.0;
};

inline Eigen::VectorXd pmin_distribution(const MfPosterior& post, const CandidateSet& candidates, int n_samples,
                                         std::uint64_t seed) {
  return EntropySearch(post, candidates, n_samples, seed).pmin();
}

inline std::uint64_t query_seed(std::uint64_t seed, std::size_t candidate, int level) {
  return derive_seed(seed, {static_cast<std::uint64_t>(candidate), static_cast<std::uint64_t>(level)});
}

inline double es_value(const MfPosterior& post, const CandidateSet& candidates, std::span<const double> e, int level,
                       const EsConfig& cfg, std::uint64_t seed) {
  EntropySearch es(post, candidates, cfg.n_posterior_samples, derive_seed(seed, {seed_tag::kAcquisition}));
  return es.value(e, level, cfg.n_fantasies, derive_seed(seed, {seed_tag::kAcquisition, 1}));
}

/// α values for every (candidate, level): alpha(c, level-1).
inline Eigen::MatrixXd score_queries(const EntropySearch& es, const CandidateSet& candidates, int levels,
                                     const EsConfig& cfg, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(candidates.size());
  Eigen::MatrixXd alpha(m, levels);
  auto work = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index c = begin; c < end; ++c)
      for (int l = 1; l <= levels; ++l)
        alpha(c, l - 1) = es.value(candidates.points[static_cast<std::size_t>(c)], l, cfg.n_fantasies,
                                   query_seed(seed, static_cast<std::size_t>(c), l));
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(m)));
  if (threads == 1) {
    work(0, m);
  } else {
    std::vector<std::jthread> pool;
    const Eigen::Index chunk = (m + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const Eigen::Index b = t * chunk, e = std::min(m, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  return alpha;
}

struct Selection {
  Point e;  // unit-box coordinates
  int level = 1;
  std::size_t candidate = 0;
  double alpha = 0.0;
  double score = 0.0;
  std::vector<double> best_score_per_level;
};

/// argmax over (candidate, level) of weight(c)·α(c, level) / λ_level. Ties go to
/// the higher fidelity, then the lower candidate index.
inline Selection select_from_scores(const Eigen::MatrixXd& alpha, const CandidateSet& candidates,
                                    std::span<const double> lambdas, std::span<const double> weights = {}) {
  const auto levels = static_cast<int>(alpha.cols());
  if (static_cast<int>(lambdas.size()) != levels) throw InvalidInput("need one cost per fidelity level");
  for (double l : lambdas)
    if (!(l > 0.0)) throw InvalidInput("costs must be positive");
  Selection sel;
  sel.best_score_per_level.assign(static_cast<std::size_t>(levels), -std::numeric_limits<double>::infinity());
  sel.score = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (int l = levels; l >= 1; --l) {
    for (Eigen::Index c = 0; c < alpha.rows(); ++c) {
      double a = alpha(c, l - 1);
      if (!weights.empty()) a *= weights[static_cast<std::size_t>(c)];
      const double s = a / lambdas[static_cast<std::size_t>(l - 1)];
      auto& best_l = sel.best_score_per_level[static_cast<std::size_t>(l - 1)];
      best_l = std::max(best_l, s);
      if (!found || s > sel.score) {
        found = true;
        sel.score = s;
        sel.alpha = alpha(c, l - 1);
        sel.level = l;
        sel.candidate = static_cast<std::size_t>(c);
      }
    }
  }
  sel.e = candidates.points[sel.candidate];
  return sel;
}

inline Selection select_next(const MfPosterior& post, const CandidateSet& candidates, std::span<const double> lambdas,
                             const EsConfig& cfg, std::uint64_t seed) {
  const int q = post.kernel().params.levels();
  EntropySearch es(post, candidates, cfg.n_posterior_samples, derive_seed(seed, {seed_tag::kAcquisition}));
  const auto alpha = score_queries(es, candidates, q, cfg, derive_seed(seed, {seed_tag::kAcquisition, 1}));
  return select_from_scores(alpha, candidates, lambdas);
}

}  // namespace mffals
