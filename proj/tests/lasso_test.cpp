#include "sparselts/lasso.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace sparselts {
namespace {

// OLS with intercept via centered normal equations, for the lambda = 0 check.
Coefficients ols(const Dataset& data) {
  const VectorXd x_means = data.X.colwise().mean();
  const double y_mean = data.y.mean();
  MatrixXd Xc = data.X.rowwise() - x_means.transpose();
  VectorXd yc = data.y.array() - y_mean;
  VectorXd slopes = (Xc.transpose() * Xc).ldlt().solve(Xc.transpose() * yc);
  Coefficients coef(y_mean - x_means.dot(slopes), slopes);
  return coef;
}

TEST(LassoFit, ZeroPenaltyMatchesOls) {
  Rng rng(31);
  Dataset data = testing::make_regression(
      rng, 50, 5, testing::sparse_beta(5, {{0, 2.0}, {2, -1.0}, {4, 0.5}}), 0.3);
  LassoConfig config;
  config.lambda = 0.0;
  config.tolerance = 1e-12;
  const LassoFit fit = lasso_fit(data, IndexSet::full(50), config);
  const Coefficients expected = ols(data);
  EXPECT_TRUE(fit.converged);
  EXPECT_LT((fit.coefficients.slopes - expected.slopes).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(fit.coefficients.intercept, expected.intercept, 1e-6);
}

TEST(LassoFit, SoftThresholdAnalyticSlope) {
  // Single predictor with mean 0 and x'x = n, and y = x, so x'y / n = 1.
  // Under the n*lambda penalty the solution is sign(z)(|z| - lambda/2)+.
  MatrixXd X(4, 1);
  X << 1, 1, -1, -1;
  VectorXd y = X.col(0);
  Dataset data(X, y);
  LassoConfig config;
  config.lambda = 0.4;
  config.tolerance = 1e-12;
  const LassoFit fit = lasso_fit(data, IndexSet::full(4), config);
  EXPECT_NEAR(fit.coefficients.slopes[0], 0.8, 1e-10);
  EXPECT_NEAR(fit.coefficients.intercept, 0.0, 1e-12);
}

TEST(LassoFit, BoundaryPenaltyZeroesAllSlopes) {
  Rng rng(32);
  Dataset raw = testing::make_regression(
      rng, 24, 5, testing::sparse_beta(5, {{0, 1.0}, {3, -0.7}}), 0.5);
  const Dataset data = testing::unit_norm_standardize(raw);
  const double lambda0 = lambda_max_pearson(data);

  for (double lambda : {lambda0 * (1.0 + 1e-10), 2.0 * lambda0}) {
    LassoConfig config;
    config.lambda = lambda;
    config.tolerance = 1e-12;
    const LassoFit fit = lasso_fit(data, IndexSet::full(24), config);
    EXPECT_EQ(fit.coefficients.n_nonzero(), 0) << "lambda = " << lambda;
  }

  // Just below the boundary at least one slope must survive.
  LassoConfig config;
  config.lambda = lambda0 * 0.99;
  config.tolerance = 1e-12;
  EXPECT_GT(lasso_fit(data, IndexSet::full(24), config).coefficients.n_nonzero(), 0);
}

TEST(LassoFit, ObjectiveNonIncreasingAcrossSweeps) {
  Rng rng(33);
  Dataset data = testing::make_regression(
      rng, 40, 12, testing::sparse_beta(12, {{0, 1.5}, {5, -2.0}}), 0.8);
  std::vector<double> trace;
  LassoConfig config;
  config.lambda = 0.05;
  config.objective_trace = &trace;
  lasso_fit(data, IndexSet::full(40), config);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_LE(trace[i], trace[i - 1] + 1e-10);
}

TEST(LassoFit, KktConditionsAtConvergence) {
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 30, p = 8;
    Dataset data = testing::make_regression(
        rng, n, p, testing::sparse_beta(p, {{1, 1.0}, {4, -1.5}}), 0.5);
    LassoConfig config;
    config.lambda = 0.02 * (1 + static_cast<double>(trial % 5));
    config.tolerance = 1e-9;
    const LassoFit fit = lasso_fit(data, IndexSet::full(n), config);
    const KktReport kkt = lasso_kkt(data, IndexSet::full(n), config, fit.coefficients);
    EXPECT_LE(kkt.max_active_gap, 10 * config.tolerance);
    EXPECT_LE(kkt.max_inactive_excess, 10 * config.tolerance);
  }
}

TEST(LassoFit, BinaryWeightsEqualSubsampleFit) {
  Rng rng(35);
  Dataset data = testing::make_regression(
      rng, 30, 6, testing::sparse_beta(6, {{0, 1.0}, {2, 2.0}}), 0.4);
  VectorXd weights = VectorXd::Ones(30);
  std::vector<int> kept;
  for (int i = 0; i < 30; ++i) {
    if (rng.uniform() < 0.3) {
      weights[i] = 0.0;
    } else {
      kept.push_back(i);
    }
  }
  ASSERT_GE(kept.size(), 5u);

  LassoConfig weighted;
  weighted.lambda = 0.03;
  weighted.observation_weights = weights;
  const LassoFit w_fit = lasso_fit(data, IndexSet::full(30), weighted);

  LassoConfig plain;
  plain.lambda = 0.03;
  const LassoFit s_fit = lasso_fit(data, IndexSet(kept, 30), plain);

  // Exact index-set equivalence: the binary-weight path reduces to the same
  // subsample computation.
  EXPECT_EQ(w_fit.coefficients.intercept, s_fit.coefficients.intercept);
  for (int j = 0; j < 6; ++j)
    EXPECT_EQ(w_fit.coefficients.slopes[j], s_fit.coefficients.slopes[j]);
}

TEST(LassoFit, FractionalWeightsRun) {
  Rng rng(36);
  Dataset data = testing::make_regression(rng, 20, 4, testing::sparse_beta(4, {{0, 1.0}}), 0.3);
  VectorXd weights(20);
  for (int i = 0; i < 20; ++i) weights[i] = 0.25 + 0.75 * rng.uniform();
  LassoConfig config;
  config.lambda = 0.01;
  config.observation_weights = weights;
  const LassoFit fit = lasso_fit(data, IndexSet::full(20), config);
  EXPECT_TRUE(fit.converged);
  EXPECT_TRUE(fit.coefficients.slopes.allFinite());
}

TEST(LassoFit, NonConvergenceFlagged) {
  Rng rng(37);
  Dataset data = testing::make_regression(
      rng, 60, 30, testing::sparse_beta(30, {{0, 1.0}, {7, -1.0}}), 0.5);
  LassoConfig config;
  config.lambda = 1e-6;
  config.max_iterations = 1;
  const LassoFit fit = lasso_fit(data, IndexSet::full(60), config);
  EXPECT_FALSE(fit.converged);
  EXPECT_TRUE(fit.coefficients.slopes.allFinite());
}

TEST(LassoFit, InvalidInputThrows) {
  Dataset data(MatrixXd::Ones(6, 2) + MatrixXd::Random(6, 2), VectorXd::Ones(6));
  LassoConfig config;
  EXPECT_THROW(lasso_fit(data, IndexSet({0, 1}, 6), config), std::invalid_argument);
  config.lambda = -1.0;
  EXPECT_THROW(lasso_fit(data, IndexSet::full(6), config), std::invalid_argument);
}

TEST(LambdaMax, PerfectCorrelationGivesTwoOverN) {
  const int n = 10;
  Rng rng(38);
  MatrixXd X(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
  Dataset data(X, X.col(0));
  EXPECT_NEAR(lambda_max_pearson(data), 2.0 / n, 1e-12);
}

TEST(LambdaMax, IndependentNoiseIsSmall) {
  Rng rng(39);
  const int n = 2000;
  MatrixXd X(n, 5);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.normal();
    for (int j = 0; j < 5; ++j) X(i, j) = rng.normal();
  }
  Dataset data(X, y);
  EXPECT_LT(lambda_max_pearson(data), (2.0 / n) * (5.0 / std::sqrt(n)));
}

TEST(LambdaMax, SkipsConstantColumns) {
  MatrixXd X(8, 2);
  X.col(0).setConstant(3.0);
  Rng rng(40);
  for (int i = 0; i < 8; ++i) X(i, 1) = rng.normal();
  Dataset data(X, X.col(1));
  EXPECT_NEAR(lambda_max_pearson(data), 2.0 / 8, 1e-12);

  MatrixXd all_const = MatrixXd::Ones(8, 2);
  VectorXd y(8);
  for (int i = 0; i < 8; ++i) y[i] = rng.normal();
  EXPECT_THROW(lambda_max_pearson(Dataset(all_const, y)), std::invalid_argument);
}

TEST(WinsorizedCorrelation, PerfectLine) {
  VectorXd x(20);
  for (int i = 0; i < 20; ++i) x[i] = 0.3 * i - 2.0;
  EXPECT_NEAR(winsorized_correlation(x, x, 2.0), 1.0, 1e-6);
  VectorXd neg = -x;
  EXPECT_NEAR(winsorized_correlation(x, neg, 2.0), -1.0, 1e-6);
}

TEST(WinsorizedCorrelation, RecoversModerateCorrelation) {
  Rng rng(41);
  const int n = 1000;
  const double rho = 0.5;
  VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    x[i] = z1;
    y[i] = rho * z1 + std::sqrt(1 - rho * rho) * z2;
  }
  EXPECT_NEAR(winsorized_correlation(x, y, 2.0), rho, 0.1);
}

TEST(WinsorizedCorrelation, ResistsLeverageOutliers) {
  Rng rng(42);
  const int n = 200;
  const double rho = 0.5;
  VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    x[i] = z1;
    y[i] = rho * z1 + std::sqrt(1 - rho * rho) * z2;
  }
  const double clean = winsorized_correlation(x, y, 2.0);
  for (int i = 0; i < n / 10; ++i) {
    x[i] = 50.0;
    y[i] = -50.0;
  }
  const double robust = winsorized_correlation(x, y, 2.0);
  const double pearson = detail::pearson(x, y);
  EXPECT_LT(std::abs(robust - clean), 0.15);
  EXPECT_LT(pearson, 0.0);  // flipped sign under contamination
  EXPECT_GT(clean, 0.3);
}

TEST(WinsorizedCorrelation, ZeroMadFallback) {
  // More than half the values identical makes the MAD zero.
  VectorXd x(9), y(9);
  x << 0, 0, 0, 0, 0, 1, 2, 3, 4;
  y << 0, 0, 0, 0, 0, 2, 4, 6, 8;
  bool fallback = false;
  const double r = winsorized_correlation(x, y, 2.0, &fallback);
  EXPECT_TRUE(fallback);
  EXPECT_GT(r, 0.9);
}

TEST(WinsorizedCorrelation, RejectsBadInput) {
  VectorXd x(2), y(3);
  x << 1, 2;
  y << 1, 2, 3;
  EXPECT_THROW(winsorized_correlation(x, y, 2.0), std::invalid_argument);
  VectorXd c = VectorXd::Ones(5);
  EXPECT_THROW(winsorized_correlation(c, c, 2.0), std::invalid_argument);
}

TEST(LambdaMaxRobust, CleanDataNearPearson) {
  Rng rng(43);
  Dataset data = testing::make_regression(
      rng, 150, 6, testing::sparse_beta(6, {{0, 1.0}, {2, 0.5}}), 0.7);
  const double robust = lambda_max_robust(data);
  const double pearson = lambda_max_pearson(data);
  EXPECT_LT(std::abs(robust - pearson), 0.25 * pearson);
}

TEST(LambdaMaxRobust, BoundedUnderContamination) {
  Rng rng(44);
  const int n = 100;
  MatrixXd X(n, 4);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.normal();
    for (int j = 0; j < 4; ++j) X(i, j) = rng.normal();
  }
  // Correlation-creating outliers: large x paired with large y.
  for (int i = 0; i < n / 10; ++i) {
    X.row(i).setConstant(50.0);
    y[i] = 50.0;
  }
  Dataset data(X, y);
  EXPECT_LT(lambda_max_robust(data), (2.0 / n) * 0.5);
  EXPECT_GT(lambda_max_pearson(data), (2.0 / n) * 0.8);
}

TEST(LambdaMaxRobust, SinglePredictorIdentity) {
  Rng rng(45);
  const int n = 100;
  MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = rng.normal();
  Dataset data(X, X.col(0));
  EXPECT_NEAR(lambda_max_robust(data), 2.0 / n, 1e-3 * (2.0 / n));
}

}  // namespace
}  // namespace sparselts
