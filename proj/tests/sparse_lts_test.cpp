#include "sparselts/sparse_lts.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace sparselts {
namespace {

SparseLtsConfig tight_config(double lambda, int n_starts = 100) {
  SparseLtsConfig config;
  config.lambda = lambda;
  config.n_starts = n_starts;
  config.n_keep = std::min(10, n_starts);
  config.tolerance = 1e-10;
  return config;
}

// All h-subsets of {0, ..., n-1} enumerated with the subset lasso objective.
double enumerate_global_optimum(const Dataset& data, int h, const SparseLtsConfig& config) {
  const int n = data.n();
  std::vector<int> subset(h);
  std::iota(subset.begin(), subset.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    LassoConfig lasso_cfg = config.lasso_config();
    const LassoFit fit = lasso_fit(data, IndexSet(subset, n), lasso_cfg);
    best = std::min(best,
                    objective(data, IndexSet(subset, n), fit.coefficients, config.lambda));
    // Next combination in lexicographic order.
    int i = h - 1;
    while (i >= 0 && subset[i] == n - h + i) --i;
    if (i < 0) break;
    ++subset[i];
    for (int j = i + 1; j < h; ++j) subset[j] = subset[j - 1] + 1;
  }
  return best;
}

TEST(Objective, ZeroLambdaIsSubsetRss) {
  Rng rng(51);
  Dataset data = testing::make_regression(rng, 12, 2, testing::sparse_beta(2, {{0, 1.0}}), 0.5);
  Coefficients coef(0.3, testing::sparse_beta(2, {{0, 0.9}, {1, -0.2}}));
  IndexSet subset({0, 2, 4, 6, 8}, 12);
  const VectorXd r = residuals(data, coef);
  double rss = 0.0;
  for (int idx : subset.indices) rss += r[idx] * r[idx];
  EXPECT_NEAR(objective(data, subset, coef, 0.0), rss, 1e-12);
}

TEST(Objective, AllZeroCoefficients) {
  Rng rng(52);
  Dataset data = testing::make_regression(rng, 10, 3, testing::sparse_beta(3, {}), 1.0);
  IndexSet subset({1, 3, 5}, 10);
  double expected = 0.0;
  for (int idx : subset.indices) expected += data.y[idx] * data.y[idx];
  EXPECT_NEAR(objective(data, subset, Coefficients::zero(3), 0.7), expected, 1e-12);
}

TEST(Objective, FittedCoefficientsBeatPerturbations) {
  Rng rng(53);
  Dataset data = testing::make_regression(
      rng, 30, 4, testing::sparse_beta(4, {{0, 2.0}, {2, -1.0}}), 0.4);
  IndexSet subset = IndexSet::full(30);
  LassoConfig lasso_cfg;
  lasso_cfg.lambda = 0.05;
  lasso_cfg.tolerance = 1e-12;
  const LassoFit fit = lasso_fit(data, subset, lasso_cfg);
  const double fitted = objective(data, subset, fit.coefficients, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    Coefficients perturbed = fit.coefficients;
    perturbed.intercept += 0.05 * rng.normal();
    for (int j = 0; j < 4; ++j) perturbed.slopes[j] += 0.05 * rng.normal();
    EXPECT_GE(objective(data, subset, perturbed, 0.05), fitted - 1e-10);
  }
}

TEST(CStep, FixedPointReturnsSameSubset) {
  Rng rng(54);
  Dataset data = testing::make_regression(
      rng, 40, 3, testing::sparse_beta(3, {{0, 1.0}, {1, -2.0}}), 0.3);
  SparseLtsConfig config = tight_config(0.02, 50);
  const RawFitResult raw = fit_raw(data, config);
  const SubsetFit next = c_step(data, raw.best, config);
  EXPECT_EQ(next.subset, raw.best.subset);
}

TEST(CStep, ChainObjectivesNonIncreasing) {
  Rng rng(55);
  Dataset data = testing::make_regression(
      rng, 35, 5, testing::sparse_beta(5, {{0, 1.0}, {3, 1.5}}), 0.6);
  SparseLtsConfig config = tight_config(0.05);
  for (int start = 0; start < 10; ++start) {
    Rng stream = Rng(100 + start);
    SubsetFit chain = elemental_start(data, stream, config);
    double previous = chain.objective;
    for (int step = 0; step < 10; ++step) {
      chain = c_step(data, chain, config);
      EXPECT_LE(chain.objective, previous + 1e-10);
      previous = chain.objective;
    }
  }
}

TEST(CStep, TinyInstanceNeverBeatsEnumeration) {
  Rng rng(56);
  const int n = 12;
  Dataset data = testing::make_regression(rng, n, 2, testing::sparse_beta(2, {{0, 1.0}}), 0.5);
  data.y[3] += 8.0;  // one gross outlier
  SparseLtsConfig config = tight_config(0.03);
  config.alpha = 0.7;  // h = floor(13 * 0.7) = 9
  ASSERT_EQ(config.subset_size(n), 9);
  const double global = enumerate_global_optimum(data, 9, config);

  // Converge a chain from every possible elemental triple.
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      for (int c = b + 1; c < n; ++c) {
        SubsetFit chain = elemental_start_from_triple(data, {a, b, c}, config);
        bool reached = false;
        bool trouble = false;
        chain = detail::concentrate(data, std::move(chain), config, reached, trouble);
        EXPECT_TRUE(reached);
        EXPECT_GE(chain.objective, global - 1e-8 * std::max(1.0, std::abs(global)));
      }
    }
  }
}

TEST(ElementalStart, FullSubsetWhenAlphaOne) {
  Rng rng(57);
  Dataset data = testing::make_regression(rng, 15, 3, testing::sparse_beta(3, {{0, 1.0}}), 0.2);
  SparseLtsConfig config = tight_config(0.01, 10);
  config.alpha = 1.0;
  Rng stream(5);
  const SubsetFit start = elemental_start(data, stream, config);
  EXPECT_EQ(start.subset, IndexSet::full(15));
}

TEST(ElementalStart, DeterministicForFixedSeed) {
  Rng rng(58);
  Dataset data = testing::make_regression(rng, 20, 4, testing::sparse_beta(4, {{1, 1.0}}), 0.5);
  SparseLtsConfig config = tight_config(0.02, 10);
  Rng s1(99), s2(99);
  const SubsetFit a = elemental_start(data, s1, config);
  const SubsetFit b = elemental_start(data, s2, config);
  EXPECT_EQ(a.subset, b.subset);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(ElementalStart, TripleFrequenciesNearUniform) {
  // 10^4 per-start streams on n = 10: each of the C(10,3) = 120 unordered
  // triples should appear close to uniformly.
  const int n = 10;
  const int draws = 10000;
  const Rng root(1);
  std::map<std::vector<int>, int> counts;
  for (int s = 0; s < draws; ++s) {
    Rng stream = root.stream(detail::kElementalStreamTag, s);
    std::vector<int> triple = stream.sample_distinct(n, 3);
    std::sort(triple.begin(), triple.end());
    counts[triple]++;
  }
  EXPECT_EQ(counts.size(), 120u);
  const double expected = draws / 120.0;
  const double sd = std::sqrt(draws * (1.0 / 120.0) * (119.0 / 120.0));
  double chi2 = 0.0;
  for (const auto& [triple, count] : counts) {
    EXPECT_NEAR(count, expected, 4.0 * sd);
    chi2 += (count - expected) * (count - expected) / expected;
  }
  // chi-square(119): 99.5th percentile is about 165
  EXPECT_LT(chi2, 165.0);
}

TEST(FitRaw, RecoversCleanCoefficients) {
  Rng rng(59);
  VectorXd beta = testing::sparse_beta(5, {{0, 1.0}, {1, -2.0}, {3, 0.5}});
  Dataset data = testing::make_regression(rng, 50, 5, beta, 0.0);
  SparseLtsConfig config = tight_config(1e-8, 100);
  const RawFitResult result = fit_raw(data, config);
  EXPECT_LT((result.best.coefficients.slopes - beta).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FitRaw, ExcludesPlantedVerticalOutliers) {
  Rng rng(60);
  VectorXd beta = testing::sparse_beta(4, {{0, 1.0}, {2, 1.0}});
  Dataset data = testing::make_regression(rng, 50, 4, beta, 0.5);
  std::vector<int> planted;
  for (int i = 40; i < 50; ++i) {
    data.y[i] += 20.0 * 0.5 * (1.0 + 0.2 * (i - 40));
    planted.push_back(i);
  }
  SparseLtsConfig config = tight_config(0.01, 200);
  const RawFitResult result = fit_raw(data, config);
  for (int idx : result.best.subset.indices)
    EXPECT_EQ(std::count(planted.begin(), planted.end(), idx), 0);
}

TEST(FitRaw, FullSubsetReducesToLasso) {
  Rng rng(61);
  Dataset data = testing::make_regression(
      rng, 30, 6, testing::sparse_beta(6, {{0, 1.5}, {4, -1.0}}), 0.4);
  SparseLtsConfig config = tight_config(0.02, 25);
  config.alpha = 1.0;
  config.tolerance = 1e-12;
  const RawFitResult result = fit_raw(data, config);

  LassoConfig lasso_cfg = config.lasso_config();
  const LassoFit direct = lasso_fit(data, IndexSet::full(30), lasso_cfg);
  EXPECT_EQ(result.best.subset, IndexSet::full(30));
  EXPECT_LT((result.best.coefficients.slopes - direct.coefficients.slopes).cwiseAbs().maxCoeff(),
            1e-8);
  EXPECT_NEAR(result.best.coefficients.intercept, direct.coefficients.intercept, 1e-8);
}

TEST(FitRaw, BitwiseDeterministicAcrossThreads) {
  Rng rng(62);
  Dataset data = testing::make_regression(
      rng, 40, 5, testing::sparse_beta(5, {{0, 1.0}, {2, -1.5}}), 0.5);
  SparseLtsConfig config = tight_config(0.03, 60);
  config.seed = 17;
  config.threads = 1;
  const RawFitResult a = fit_raw(data, config);
  config.threads = 4;
  const RawFitResult b = fit_raw(data, config);
  EXPECT_EQ(a.best.subset, b.best.subset);
  EXPECT_EQ(a.best.objective, b.best.objective);
  for (int j = 0; j < 5; ++j)
    EXPECT_EQ(a.best.coefficients.slopes[j], b.best.coefficients.slopes[j]);
  EXPECT_EQ(a.best.coefficients.intercept, b.best.coefficients.intercept);
}

TEST(FitRaw, PermutationStability) {
  Rng rng(63);
  const int n = 30;
  Dataset data = testing::make_regression(
      rng, n, 4, testing::sparse_beta(4, {{0, 1.0}, {1, 2.0}}), 0.4);
  data.y[5] += 10.0;
  data.y[12] -= 9.0;

  // Draws for the original data, replayed through the permutation.
  SparseLtsConfig config = tight_config(0.02, 40);
  std::vector<std::vector<int>> triples(config.n_starts);
  const Rng root(config.seed);
  for (int s = 0; s < config.n_starts; ++s) {
    Rng stream = root.stream(detail::kElementalStreamTag, s);
    triples[s] = stream.sample_distinct(n, 3);
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[static_cast<int>(rng.uniform_int(i + 1))]);

  MatrixXd Xp(n, 4);
  VectorXd yp(n);
  for (int i = 0; i < n; ++i) {
    Xp.row(perm[i]) = data.X.row(i);
    yp[perm[i]] = data.y[i];
  }
  Dataset permuted(Xp, yp);
  std::vector<std::vector<int>> permuted_triples = triples;
  for (auto& triple : permuted_triples)
    for (int& idx : triple) idx = perm[idx];

  const RawFitResult a = fit_raw_with_starts(data, triples, config);
  const RawFitResult b = fit_raw_with_starts(permuted, permuted_triples, config);

  std::vector<int> mapped;
  for (int idx : a.best.subset.indices) mapped.push_back(perm[idx]);
  std::sort(mapped.begin(), mapped.end());
  EXPECT_EQ(mapped, b.best.subset.indices);
  EXPECT_LT((a.best.coefficients.slopes - b.best.coefficients.slopes).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_NEAR(a.best.coefficients.intercept, b.best.coefficients.intercept, 1e-10);
}

TEST(ConsistencyFactor, KnownValues) {
  EXPECT_DOUBLE_EQ(consistency_factor(1.0), 1.0);
  EXPECT_NEAR(consistency_factor(0.75), 1.6472786958421823, 1e-12);
  EXPECT_NEAR(consistency_factor(0.5), 2.6476545355660037, 1e-12);
  EXPECT_THROW(consistency_factor(0.0), std::invalid_argument);
  EXPECT_THROW(consistency_factor(1.5), std::invalid_argument);
}

TEST(RawScale, SymmetricResidualsCenterZero) {
  MatrixXd X(6, 1);
  X << 1, 2, 3, 4, 5, 6;
  VectorXd y(6);
  y << -3, 3, -3, 3, -3, 3;
  Dataset data(X, y);
  SubsetFit best;
  best.subset = IndexSet::full(6);
  best.coefficients = Coefficients::zero(1);
  const ScaleEstimate est = raw_scale(data, best, 1.0);
  EXPECT_NEAR(est.center, 0.0, 1e-14);
}

TEST(RawScale, MatchesSdOnNormalResiduals) {
  Rng rng(64);
  const int n = 10000;
  MatrixXd X = MatrixXd::Ones(n, 1);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  X.col(0) = y.array() + 5.0;  // irrelevant predictor, keeps Dataset valid
  Dataset data(X, y);
  SubsetFit best;
  best.subset = IndexSet::full(n);
  best.coefficients = Coefficients::zero(1);
  const ScaleEstimate est = raw_scale(data, best, 1.0);
  const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1));
  EXPECT_NEAR(est.scale, sd, 0.03 * sd);
}

TEST(RawScale, ExactFitFlagged) {
  MatrixXd X(5, 1);
  X << 1, 2, 3, 4, 5;
  VectorXd y = VectorXd::Constant(5, 2.5);
  Dataset data(X, y);
  SubsetFit best;
  best.subset = IndexSet::full(5);
  best.coefficients = Coefficients::zero(1);
  const ScaleEstimate est = raw_scale(data, best, 0.75);
  EXPECT_DOUBLE_EQ(est.center, 2.5);
  EXPECT_TRUE(est.exact_fit);
  EXPECT_DOUBLE_EQ(est.scale, 0.0);
}

TEST(OutlierWeights, BoundaryInclusive) {
  const double cutoff = normal_quantile(1.0 - 0.0125);
  EXPECT_NEAR(cutoff, 2.2414, 1e-3);
  VectorXd res(3);
  res << cutoff, 3.0, -cutoff;
  const VectorXd w = outlier_weights(res, 0.0, 1.0, 0.0125);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 0.0);
  EXPECT_EQ(w[2], 1.0);
}

TEST(OutlierWeights, NormalCalibration) {
  Rng rng(65);
  const int n = 100000;
  VectorXd res(n);
  for (int i = 0; i < n; ++i) res[i] = rng.normal();
  const VectorXd w = outlier_weights(res, 0.0, 1.0, 0.0125);
  const double flagged = 1.0 - w.sum() / n;
  EXPECT_NEAR(flagged, 0.025, 0.003);
}

TEST(FitReweighted, AllWeightsOneEqualsFullLasso) {
  Rng rng(66);
  Dataset data = testing::make_regression(
      rng, 30, 4, testing::sparse_beta(4, {{0, 1.0}, {2, 0.8}}), 0.3);
  SparseLtsConfig config = tight_config(0.02, 30);
  config.tolerance = 1e-12;
  const RawFitResult raw = fit_raw(data, config);
  const ScaleEstimate est = raw_scale(data, raw.best, config.alpha);
  const SparseLtsFit fit =
      fit_reweighted(data, raw.best, est, VectorXd::Ones(30), config);

  const LassoFit direct = lasso_fit(data, IndexSet::full(30), config.lasso_config());
  EXPECT_LT(
      (fit.reweighted_coefficients.slopes - direct.coefficients.slopes).cwiseAbs().maxCoeff(),
      1e-7);
}

TEST(FitReweighted, ExcludedOutliersMatchCleanLasso) {
  Rng rng(67);
  VectorXd beta = testing::sparse_beta(4, {{0, 1.0}, {1, -1.0}});
  Dataset data = testing::make_regression(rng, 40, 4, beta, 0.3);
  VectorXd weights = VectorXd::Ones(40);
  std::vector<int> clean_rows;
  for (int i = 0; i < 40; ++i) {
    if (i >= 34) {
      data.y[i] += 25.0;
      weights[i] = 0.0;
    } else {
      clean_rows.push_back(i);
    }
  }
  SparseLtsConfig config = tight_config(0.02, 30);
  config.tolerance = 1e-12;
  const RawFitResult raw = fit_raw(data, config);
  const ScaleEstimate est = raw_scale(data, raw.best, config.alpha);
  const SparseLtsFit fit = fit_reweighted(data, raw.best, est, weights, config);

  const LassoFit clean = lasso_fit(data, IndexSet(clean_rows, 40), config.lasso_config());
  EXPECT_LT(
      (fit.reweighted_coefficients.slopes - clean.coefficients.slopes).cwiseAbs().maxCoeff(),
      1e-6);
}

TEST(FitReweighted, FallbackWhenTooFewRows) {
  Rng rng(68);
  Dataset data = testing::make_regression(rng, 12, 2, testing::sparse_beta(2, {{0, 1.0}}), 0.4);
  SparseLtsConfig config = tight_config(0.05, 20);
  const RawFitResult raw = fit_raw(data, config);
  const ScaleEstimate est = raw_scale(data, raw.best, config.alpha);
  VectorXd weights = VectorXd::Zero(12);
  weights[0] = weights[1] = 1.0;
  const SparseLtsFit fit = fit_reweighted(data, raw.best, est, weights, config);
  EXPECT_TRUE(fit.reweight_fallback);
  EXPECT_EQ(fit.reweighted_coefficients.intercept, fit.raw_coefficients.intercept);
}

TEST(FitSparseLts, WeightsReproducibleFromResiduals) {
  Rng rng(69);
  Dataset data = testing::make_regression(
      rng, 50, 4, testing::sparse_beta(4, {{0, 1.0}, {3, 2.0}}), 0.5);
  data.y.tail(5).array() += 15.0;
  SparseLtsConfig config = tight_config(0.02, 100);
  const SparseLtsResult result = fit_sparse_lts(data, config);
  const VectorXd recomputed =
      outlier_weights(residuals(data, result.fit.raw_coefficients), result.fit.raw_center,
                      result.fit.raw_scale, config.delta);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(result.fit.weights[i], recomputed[i]);
  EXPECT_GE(result.fit.n_w(), 1);
}

TEST(FitSparseLts, ReweightingImprovesHeldOutError) {
  // On clean data the reweighting step recovers most of the efficiency lost
  // to trimming: the reweighted fit predicts held-out data at least as well
  // as the raw fit in a clear majority of replications.
  Rng rng(73);
  const VectorXd beta = testing::sparse_beta(5, {{0, 1.5}, {2, -1.0}, {4, 0.5}});
  int reweighted_wins = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    Dataset train = testing::make_regression(rng, 60, 5, beta, 0.6);
    Dataset test = testing::make_regression(rng, 200, 5, beta, 0.6);
    SparseLtsConfig config = tight_config(0.01, 60);
    config.seed = 7000 + rep;
    const SparseLtsResult result = fit_sparse_lts(train, config);
    const double raw_err =
        (test.y - result.fit.raw_coefficients.predict(test.X)).norm();
    const double rew_err =
        (test.y - result.fit.reweighted_coefficients.predict(test.X)).norm();
    if (rew_err <= raw_err) ++reweighted_wins;
  }
  EXPECT_GE(reweighted_wins, 70);
}

TEST(FitSparseLts, RegressionEquivariantInResponseShift) {
  Rng rng(70);
  Dataset data = testing::make_regression(
      rng, 40, 3, testing::sparse_beta(3, {{0, 1.0}, {1, -0.5}}), 0.4);
  SparseLtsConfig config = tight_config(0.03, 50);
  const SparseLtsResult base = fit_sparse_lts(data, config);

  Dataset shifted(data.X, data.y.array() + 7.5);
  const SparseLtsResult moved = fit_sparse_lts(shifted, config);

  EXPECT_NEAR(moved.fit.raw_coefficients.intercept,
              base.fit.raw_coefficients.intercept + 7.5, 1e-10);
  EXPECT_LT((moved.fit.raw_coefficients.slopes - base.fit.raw_coefficients.slopes)
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
  EXPECT_NEAR(moved.fit.raw_scale, base.fit.raw_scale, 1e-10);
  for (int i = 0; i < 40; ++i) EXPECT_EQ(moved.fit.weights[i], base.fit.weights[i]);
}

TEST(FitRaw, StoredObjectiveMatchesRecomputation) {
  Rng rng(72);
  Dataset data = testing::make_regression(
      rng, 30, 4, testing::sparse_beta(4, {{0, 1.0}, {2, -2.0}}), 0.5);
  SparseLtsConfig config = tight_config(0.04, 40);
  const RawFitResult raw = fit_raw(data, config);
  const double recomputed =
      objective(data, raw.best.subset, raw.best.coefficients, config.lambda);
  EXPECT_NEAR(raw.best.objective, recomputed, 1e-8 * std::max(1.0, std::abs(recomputed)));
}

TEST(BreakdownProbe, UncontaminatedEqualsRawNorm) {
  Rng rng(71);
  Dataset data = testing::make_regression(
      rng, 25, 3, testing::sparse_beta(3, {{0, 2.0}, {1, -1.0}}), 0.3);
  SparseLtsConfig config = tight_config(0.02, 50);
  const double probe = breakdown_probe(data, 0, 1.0, 100.0, config);
  const RawFitResult raw = fit_raw(data, config);
  EXPECT_DOUBLE_EQ(probe, raw.best.coefficients.slopes.norm());
}

}  // namespace
}  // namespace sparselts
