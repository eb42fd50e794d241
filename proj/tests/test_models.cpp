#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mffals;

namespace {

Dataset random_dataset(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u;
  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.outputs.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) ds.inputs(i, j) = u(rng);
    ds.outputs[i] = std::sin(6.0 * ds.inputs(i, 0)) + 0.1 * u(rng);
  }
  ds.noise_variance = 1e-4;
  return ds;
}

ArParams two_level(double eta) {
  ArParams p;
  p.base_kernel = {1.3, {0.3, 0.5}};
  p.gap_kernels = {{0.2, {0.4, 0.2}}};
  p.eta = {eta};
  p.noise_variance = 1e-6;
  return p;
}

}  // namespace

TEST(Rbf, UnitDistanceValue) {
  const RbfKernel k{1.0, {1.0}};
  const std::vector<double> a{0.0}, b{1.0};
  EXPECT_DOUBLE_EQ(rbf_eval(k, a, b), 0.6065306597126334);
  EXPECT_DOUBLE_EQ(rbf_eval(k, a, a), 1.0);
}

TEST(Rbf, RejectsDimensionMismatch) {
  const RbfKernel k{1.0, {1.0, 1.0}};
  const std::vector<double> a{0.0}, b{1.0, 2.0};
  EXPECT_THROW(rbf_eval(k, a, b), InvalidInput);
}

TEST(Gp, MatchesDenseInverse) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const auto ds = random_dataset(12, 2, rng);
    const RbfKernel k{0.8, {0.25, 0.6}};
    const auto post = build_posterior(ds, k);
    for (int t = 0; t < 5; ++t) {
      Eigen::VectorXd x(2);
      x << std::uniform_real_distribution<double>()(rng), std::uniform_real_distribution<double>()(rng);
      const auto p = predict(post, std::span<const double>(x.data(), 2));
      const auto o = oracle::dense_rbf_predict(ds.inputs, ds.outputs, k.signal_variance, k.lengthscales,
                                               ds.noise_variance + post.jitter(), x);
      EXPECT_NEAR(p.mean, o.mean, 1e-9);
      EXPECT_NEAR(p.variance, o.variance, 1e-9);
      EXPECT_GE(p.variance, 0.0);
      EXPECT_LE(p.variance, k.signal_variance + 1e-12);
    }
  }
}

TEST(Gp, SinglePointLogLikelihood) {
  Dataset ds;
  ds.inputs = Eigen::MatrixXd::Zero(1, 1);
  ds.outputs = Eigen::VectorXd::Zero(1);
  ds.noise_variance = 1e-12;
  EXPECT_NEAR(log_marginal_likelihood(ds, RbfKernel{1.0, {1.0}}), -0.9189385332046727, 1e-7);
}

TEST(Gp, VarianceShrinksWithData) {
  std::mt19937_64 rng(22);
  const auto ds = random_dataset(20, 1, rng);
  const RbfKernel k{1.0, {0.2}};
  const double x = 0.37;
  double prev = k.signal_variance;
  for (Eigen::Index n = 1; n <= ds.size(); ++n) {
    Dataset sub{ds.inputs.topRows(n), ds.outputs.head(n), ds.noise_variance};
    const double v = predict(build_posterior(sub, k), std::span<const double>(&x, 1)).variance;
    EXPECT_LE(v, prev + 1e-12);
    prev = v;
  }
}

TEST(Gp, DuplicateInputsFactorWithJitter) {
  Dataset ds;
  ds.inputs = Eigen::MatrixXd::Constant(4, 1, 0.5);
  ds.outputs = Eigen::VectorXd::Constant(4, 1.0);
  ds.noise_variance = 0.0;
  const auto post = build_posterior(ds, RbfKernel{1.0, {0.3}});
  EXPECT_GT(post.jitter(), 0.0);
  const double x = 0.5;
  EXPECT_NEAR(predict(post, std::span<const double>(&x, 1)).mean, 1.0, 1e-3);
}

TEST(Gp, RejectsKernelDimensionMismatch) {
  std::mt19937_64 rng(23);
  EXPECT_THROW(build_posterior(random_dataset(5, 2, rng), RbfKernel{1.0, {0.3}}), InvalidInput);
}

TEST(Gp, FitImprovesLikelihood) {
  std::mt19937_64 rng(24);
  const auto ds = random_dataset(25, 1, rng);
  FitOptions opt;
  opt.restarts = 3;
  const auto fit = fit_hyperparams(ds, HyperBounds{}, opt);
  Dataset with_noise = ds;
  with_noise.noise_variance = fit.noise_variance;
  EXPECT_NEAR(log_marginal_likelihood(with_noise, fit.kernel), fit.log_likelihood, 1e-6);
  EXPECT_GE(fit.log_likelihood, log_marginal_likelihood(ds, RbfKernel{1.0, {1.0}}));
}

TEST(MultiFidelity, CovarianceBlocks) {
  const auto p = two_level(0.7);
  Eigen::VectorXd a(2), b(2);
  a << 0.1, 0.9;
  b << 0.4, 0.3;
  const double k1 = p.base_kernel(a, b), g = p.gap_kernels[0](a, b);
  EXPECT_EQ(mf_cov({a, 1}, {b, 1}, p), k1);
  EXPECT_EQ(mf_cov({a, 1}, {b, 2}, p), 0.7 * k1);
  EXPECT_EQ(mf_cov({a, 2}, {b, 1}, p), 0.7 * k1);
  EXPECT_EQ(mf_cov({a, 2}, {b, 2}, p), 0.7 * 0.7 * k1 + g);
  EXPECT_EQ(mf_cov({a, 2}, {b, 2}, p), mf_cov({b, 2}, {a, 2}, p));
}

TEST(MultiFidelity, RejectsBadLevelsAndDims) {
  const auto p = two_level(1.0);
  Eigen::VectorXd a(2), bad(3);
  a << 0.1, 0.2;
  bad << 0.1, 0.2, 0.3;
  EXPECT_THROW(mf_cov({a, 0}, {a, 1}, p), InvalidInput);
  EXPECT_THROW(mf_cov({a, 3}, {a, 1}, p), InvalidInput);
  EXPECT_THROW(mf_cov({a, 1}, {bad, 1}, p), InvalidInput);
}

TEST(MultiFidelity, SingleLevelEqualsPlainGp) {
  std::mt19937_64 rng(25);
  const auto ds = random_dataset(10, 2, rng);
  const RbfKernel k{1.1, {0.3, 0.4}};
  MfDataset mds;
  for (Eigen::Index i = 0; i < ds.size(); ++i) mds.add(1, {ds.inputs(i, 0), ds.inputs(i, 1)}, ds.outputs[i]);
  const auto mf = build_mf_posterior(mds, ArParams::single(k, ds.noise_variance));
  const auto gp = build_posterior(ds, k);
  const std::vector<double> x{0.3, 0.8};
  const auto a = mf_predict(mf, x, 1);
  const auto b = predict(gp, x);
  EXPECT_NEAR(a.mean, b.mean, 1e-12);
  EXPECT_NEAR(a.variance, b.variance, 1e-12);
}

TEST(MultiFidelity, FitRecoversUnitScaleForIdenticalLevels) {
  const auto space = UncertaintySpace::unit(1);
  const auto design = make_nested_design(space, {16, 8}, 7);
  MfDataset ds;
  for (int l = 1; l <= 2; ++l)
    for (const auto& p : design[static_cast<std::size_t>(l - 1)]) ds.add(l, p, std::sin(5.0 * p[0]) + p[0]);
  ArFitOptions opt;
  opt.restarts = 3;
  const auto fit = fit_ar_params(ds, opt);
  ASSERT_EQ(fit.params.eta.size(), 1u);
  EXPECT_GE(fit.params.eta[0], 0.9);
  EXPECT_LE(fit.params.eta[0], 1.1);
}

TEST(MultiFidelity, FitNeedsTwoLevels) {
  MfDataset ds;
  ds.add(1, {0.5}, 1.0);
  EXPECT_THROW(fit_ar_params(ds, {}), InvalidInput);
}

TEST(NestedDesign, DefaultSizes) {
  EXPECT_EQ(default_design_sizes(6, 3), (std::vector<std::size_t>{30, 15, 7}));
  EXPECT_EQ(default_design_sizes(1, 3), (std::vector<std::size_t>{5, 2, 2}));
  EXPECT_EQ(default_design_sizes(2, 1), (std::vector<std::size_t>{10}));
}

TEST(NestedDesign, SubsetsAreNestedAndInBounds) {
  const auto space = cartpole_space();
  const auto design = make_nested_design(space, {30, 15, 7}, 99);
  ASSERT_EQ(design.size(), 3u);
  EXPECT_EQ(design[0].size(), 30u);
  EXPECT_EQ(design[1].size(), 15u);
  EXPECT_EQ(design[2].size(), 7u);
  MfDataset ds;
  for (int l = 1; l <= 3; ++l)
    for (const auto& p : design[static_cast<std::size_t>(l - 1)]) {
      EXPECT_TRUE(space.contains(p));
      ds.add(l, p, 0.0);
    }
  EXPECT_TRUE(ds.is_nested());
}

TEST(NestedDesign, LatinStrata) {
  const auto design = make_nested_design(UncertaintySpace::unit(2), {10}, 5);
  for (std::size_t j = 0; j < 2; ++j) {
    std::vector<int> hit(10, 0);
    for (const auto& p : design[0]) ++hit[static_cast<std::size_t>(p[j] * 10.0)];
    for (int h : hit) EXPECT_EQ(h, 1);
  }
}

TEST(NestedDesign, SameSeedSameDesign) {
  const auto space = idm_space();
  EXPECT_EQ(make_nested_design(space, {12, 6}, 4), make_nested_design(space, {12, 6}, 4));
  EXPECT_NE(make_nested_design(space, {12, 6}, 4), make_nested_design(space, {12, 6}, 5));
}

TEST(NestedDesign, RejectsIncreasingSizes) {
  EXPECT_THROW(make_nested_design(UncertaintySpace::unit(1), {4, 6}, 0), InvalidInput);
  EXPECT_THROW(make_nested_design(UncertaintySpace::unit(1), {}, 0), InvalidInput);
}
