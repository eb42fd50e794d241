#pragma once

// Zero-mean Gaussian process regression with noisy observations.
//
// GpPosterior is generic over the input type and the covariance function so
// the same factorization/prediction code serves plain RBF regression and the
// auto-regressive multi-fidelity model (extended inputs).

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mffals/error.hpp"
#include "mffals/optimize.hpp"

namespace mffals {

struct RbfKernel {
  double signal_variance = 1.0;
  std::vector<double> lengthscales;

  std::size_t dim() const { return lengthscales.size(); }

  /// Unchecked evaluation; callers guarantee matching dimensions.
  double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double r2 = 0.0;
    for (std::size_t j = 0; j < lengthscales.size(); ++j) {
      const double z = (a[j] - b[j]) / lengthscales[j];
      r2 += z * z;
    }
    return signal_variance * std::exp(-0.5 * r2);
  }

  double prior_variance(const Eigen::VectorXd&) const { return signal_variance; }
};

inline double rbf_eval(const RbfKernel& k, std::span<const double> e, std::span<const double> e2) {
  if (e.size() != e2.size() || e.size() != k.dim())
    throw InvalidInput("rbf_eval: dimension mismatch (" + std::to_string(e.size()) + ", " + std::to_string(e2.size()) +
                       ", lengthscales " + std::to_string(k.dim()) + ")");
  double r2 = 0.0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    const double z = (e[j] - e2[j]) / k.lengthscales[j];
    r2 += z * z;
  }
  return k.signal_variance * std::exp(-0.5 * r2);
}

struct Dataset {
  Eigen::MatrixXd inputs;   // n x d
  Eigen::VectorXd outputs;  // n
  double noise_variance = 1e-6;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }

  std::vector<Eigen::VectorXd> rows() const {
    std::vector<Eigen::VectorXd> r;
    r.reserve(static_cast<std::size_t>(inputs.rows()));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) r.emplace_back(inputs.row(i).transpose());
    return r;
  }
};

/// Diagonal jitter, relative to the largest prior variance on the data.
/// Escalates by `factor` on factorization failure until `max_relative`.
struct JitterSchedule {
  double initial_relative = 1e-8;
  double max_relative = 1e-4;
  double factor = 10.0;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

template <class Input, class Kernel>
class GpPosterior {
 public:
  GpPosterior(Kernel kernel, std::vector<Input> inputs, Eigen::VectorXd outputs, double noise_variance,
              const JitterSchedule& jitter = {}, const std::string& label = "dataset")
      : kernel_(std::move(kernel)), inputs_(std::move(inputs)), y_(std::move(outputs)), noise_(noise_variance) {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    if (n < 1) throw InvalidInput("GP needs at least one observation");
    if (y_.size() != n) throw InvalidInput("GP inputs/outputs length mismatch");
    if (noise_ < 0) throw InvalidInput("noise variance must be >= 0");

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        const double v = kernel_(inputs_[i], inputs_[j]);
        k(i, j) = v;
        k(j, i) = v;
      }
    }
    const double scale = std::max(k.diagonal().maxCoeff(), std::numeric_limits<double>::min());

    for (double rel = jitter.initial_relative; rel <= jitter.max_relative * (1 + 1e-12); rel *= jitter.factor) {
      gram_ = k;
      gram_.diagonal().array() += noise_ + rel * scale;
      Eigen::LLT<Eigen::MatrixXd> llt(gram_);
      if (llt.info() != Eigen::Success) continue;
      lower_ = llt.matrixL();
      if (lower_.allFinite()) {
        jitter_ = rel * scale;
        alpha_ = llt.solve(y_);
        return;
      }
    }
    throw NumericFailure("Gram matrix of " + label + " (n=" + std::to_string(n) +
                         ") is not positive definite after jitter escalation");
  }

  const Kernel& kernel() const { return kernel_; }
  const std::vector<Input>& inputs() const { return inputs_; }
  const Eigen::VectorXd& outputs() const { return y_; }
  double noise_variance() const { return noise_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(inputs_.size()); }

  /// K + (noise + jitter) I
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& lower() const { return lower_; }
  /// (K + σ²I)⁻¹ y
  const Eigen::VectorXd& weights() const { return alpha_; }

  Eigen::VectorXd prior_cross(const Input& x) const {
    Eigen::VectorXd k(size());
    for (Eigen::Index i = 0; i < size(); ++i) k[i] = kernel_(x, inputs_[i]);
    return k;
  }

  Prediction predict(const Input& x) const {
    const Eigen::VectorXd k = prior_cross(x);
    const Eigen::VectorXd v = solve_lower(k);
    return {k.dot(alpha_), std::max(0.0, kernel_(x, x) - v.squaredNorm())};
  }

  /// Posterior means at several points.
  Eigen::VectorXd mean(const std::vector<Input>& xs) const {
    Eigen::VectorXd m(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t c = 0; c < xs.size(); ++c) m[c] = prior_cross(xs[c]).dot(alpha_);
    return m;
  }

  /// L⁻¹ K(X, xs): the n x m whitened cross-covariance block.
  Eigen::MatrixXd whitened_cross(const std::vector<Input>& xs) const {
    Eigen::MatrixXd kx(size(), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t c = 0; c < xs.size(); ++c) kx.col(static_cast<Eigen::Index>(c)) = prior_cross(xs[c]);
    return lower_.template triangularView<Eigen::Lower>().solve(kx);
  }

  /// Joint posterior covariance over `xs`.
  Eigen::MatrixXd covariance(const std::vector<Input>& xs) const {
    const auto m = static_cast<Eigen::Index>(xs.size());
    const Eigen::MatrixXd v = whitened_cross(xs);
    Eigen::MatrixXd s(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = a; b < m; ++b) {
        const double val = kernel_(xs[a], xs[b]) - v.col(a).dot(v.col(b));
        s(a, b) = val;
        s(b, a) = val;
      }
    return s;
  }

  /// Posterior covariance between each of `xs` and `x`, given the whitened
  /// block for `xs` from whitened_cross().
  Eigen::VectorXd cross_covariance(const std::vector<Input>& xs, const Eigen::MatrixXd& whitened_xs,
                                   const Input& x) const {
    const Eigen::VectorXd vx = solve_lower(prior_cross(x));
    Eigen::VectorXd out = -(whitened_xs.transpose() * vx);
    for (std::size_t c = 0; c < xs.size(); ++c) out[static_cast<Eigen::Index>(c)] += kernel_(xs[c], x);
    return out;
  }

  double log_marginal_likelihood() const {
    const double n = static_cast<double>(size());
    return -0.5 * y_.dot(alpha_) - lower_.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
  }

 private:
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const {
    return lower_.template triangularView<Eigen::Lower>().solve(b);
  }

  Kernel kernel_;
  std::vector<Input> inputs_;
  Eigen::VectorXd y_;
  double noise_;
  double jitter_ = 0.0;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd lower_;
  Eigen::VectorXd alpha_;
};

using RbfPosterior = GpPosterior<Eigen::VectorXd, RbfKernel>;

inline void check_kernel_matches(const Dataset& ds, const RbfKernel& kernel) {
  if (ds.size() < 1) throw InvalidInput("dataset is empty");
  if (ds.outputs.size() != ds.size()) throw InvalidInput("dataset inputs/outputs length mismatch");
  if (static_cast<std::size_t>(ds.dim()) != kernel.dim())
    throw InvalidInput("kernel has " + std::to_string(kernel.dim()) + " lengthscales, dataset has dimension " +
                       std::to_string(ds.dim()));
}

inline RbfPosterior build_posterior(const Dataset& ds, const RbfKernel& kernel, const JitterSchedule& jitter = {}) {
  check_kernel_matches(ds, kernel);
  return RbfPosterior(kernel, ds.rows(), ds.outputs, ds.noise_variance, jitter);
}

inline Prediction predict(const RbfPosterior& post, std::span<const double> e) {
  if (static_cast<Eigen::Index>(e.size()) != static_cast<Eigen::Index>(post.kernel().dim()))
    throw InvalidInput("predict: input dimension mismatch");
  return post.predict(Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())));
}

inline double log_marginal_likelihood(const Dataset& ds, const RbfKernel& kernel) {
  return build_posterior(ds, kernel).log_marginal_likelihood();
}

/// Natural-log intervals for the fitted quantities.
struct HyperBounds {
  std::pair<double, double> log_signal_variance{std::log(1e-2), std::log(1e2)};
  std::pair<double, double> log_lengthscale{std::log(1e-2), std::log(1e1)};
  std::pair<double, double> log_noise_variance{std::log(1e-8), std::log(1e-1)};
  bool fit_noise = true;
};

struct FittedGp {
  RbfKernel kernel;
  double noise_variance = 1e-6;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

struct FitOptions {
  int restarts = 3;
  std::uint64_t seed = 0;
  MinimizeOptions minimizer{};
  /// Optional warm start, used as the first restart.
  std::optional<FittedGp> warm_start;
};

/// Multi-start maximization of the log marginal likelihood in log-parameter
/// space over (signal variance, lengthscales, noise variance).
inline FittedGp fit_hyperparams(const Dataset& ds, const HyperBounds& bounds, const FitOptions& opt) {
  if (opt.restarts < 1) throw InvalidInput("restarts must be >= 1");
  if (ds.size() < 1) throw InvalidInput("dataset is empty");
  const auto d = static_cast<std::size_t>(ds.dim());
  const auto rows = ds.rows();

  Box box;
  auto add = [&](std::pair<double, double> b) {
    box.lower.push_back(b.first);
    box.upper.push_back(b.second);
  };
  add(bounds.log_signal_variance);
  for (std::size_t j = 0; j < d; ++j) add(bounds.log_lengthscale);
  if (bounds.fit_noise) add(bounds.log_noise_variance);

  auto unpack = [&](std::span<const double> x) {
    FittedGp f;
    f.kernel.signal_variance = std::exp(x[0]);
    f.kernel.lengthscales.resize(d);
    for (std::size_t j = 0; j < d; ++j) f.kernel.lengthscales[j] = std::exp(x[1 + j]);
    f.noise_variance = bounds.fit_noise ? std::exp(x[1 + d]) : ds.noise_variance;
    return f;
  };

  const Objective objective = [&](std::span<const double> x) {
    const FittedGp f = unpack(x);
    try {
      return -RbfPosterior(f.kernel, rows, ds.outputs, f.noise_variance).log_marginal_likelihood();
    } catch (const NumericFailure&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> start(box.dim());
  for (std::size_t j = 0; j < box.dim(); ++j) start[j] = 0.5 * (box.lower[j] + box.upper[j]);
  if (opt.warm_start) {
    start[0] = std::log(opt.warm_start->kernel.signal_variance);
    for (std::size_t j = 0; j < d && j < opt.warm_start->kernel.dim(); ++j)
      start[1 + j] = std::log(opt.warm_start->kernel.lengthscales[j]);
    if (bounds.fit_noise) start[1 + d] = std::log(opt.warm_start->noise_variance);
  }

  const auto res = multistart_minimize(objective, box, start, opt.restarts, opt.seed, opt.minimizer);
  FittedGp best = unpack(res.x);
  best.log_likelihood = -res.value;
  return best;
}

}  // namespace mffals
