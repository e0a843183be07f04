#pragma once

// Penalty selection: grid construction from the boundary estimate, BIC
// scoring, and k-fold cross-validation with a trimmed prediction loss.
//
// The selection pipeline standardizes the data once up front (median/MAD
// when trimming, mean/SD for the plain lasso at alpha = 1) and fits the
// grid on that scale. Grid values are fractions of lambda0_hat =
// (2/n) max_j |Cor(y, x_j)|; on unit-scale columns the solver's null-model
// boundary sits at (n - 1) times that value, so grid entries are multiplied
// by (n - 1) before being handed to the solver. Every reported fit is
// mapped back to the original units.

#include "sparselts/core.hpp"
#include "sparselts/lasso.hpp"
#include "sparselts/sparse_lts.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparselts {

enum class Criterion { kBic, kCv };

struct SelectConfig {
  SparseLtsConfig base;        // alpha, restarts, seed, solver settings
  int cv_folds = 5;
  int cv_repetitions = 5;
  bool bic_on_reweighted = true;
  int path_fresh_starts = 50;  // elemental restarts per grid point after the first
  bool path_refine = true;     // ascending refinement sweep
  std::optional<double> fixed_lambda;  // bypass the grid
};

struct SelectionResult {
  VectorXd grid;    // descending
  VectorXd scores;  // BIC or RTMSPE per grid point
  double best_lambda = 0.0;
  SparseLtsFit best_fit;
  Criterion criterion = Criterion::kBic;
  double lambda0 = 0.0;
  std::vector<std::uint8_t> failed;  // per grid point
};

// Grid {lambda0, 0.975 lambda0, ..., 0.025 lambda0} plus 0 when p <= n,
// in descending order.
inline VectorXd lambda_grid(double lambda0, int p, int n) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda_grid: lambda0 must be > 0");
  const int steps = 40;
  const bool include_zero = p <= n;
  VectorXd grid(steps + (include_zero ? 1 : 0));
  for (int k = 0; k < steps; ++k) grid[k] = lambda0 * (0.025 * (steps - k));
  if (include_zero) grid[steps] = 0.0;
  return grid;
}

// BIC(lambda) = log(sigma_hat) + df log(n) / n with df the number of
// nonzero slopes. An exact fit (zero scale) scores -infinity.
inline double bic_score(const SparseLtsFit& fit, int n, bool use_reweighted) {
  const double scale = use_reweighted ? fit.reweighted_scale : fit.raw_scale;
  const int df = use_reweighted ? fit.reweighted_coefficients.n_nonzero()
                                : fit.raw_coefficients.n_nonzero();
  if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
  return std::log(scale) + df * std::log(static_cast<double>(n)) / n;
}

namespace detail {

constexpr std::uint64_t kPathStreamTag = 0x70;
constexpr std::uint64_t kCvStreamTag = 0xcf;

struct GlobalStandardization {
  VectorXd x_centers;
  VectorXd x_scales;
  double y_center = 0.0;
  double y_scale = 1.0;

  Coefficients to_original(const Coefficients& coef) const {
    const int p = static_cast<int>(x_scales.size());
    Coefficients out = Coefficients::zero(p);
    double dot = 0.0;
    for (int j = 0; j < p; ++j) {
      if (coef.slopes[j] == 0.0) continue;
      out.slopes[j] = coef.slopes[j] * y_scale / x_scales[j];
      dot += out.slopes[j] * x_centers[j];
    }
    out.intercept = y_center + coef.intercept * y_scale - dot;
    return out;
  }
};

inline GlobalStandardization make_standardization(const Dataset& data, bool robust) {
  const int p = data.p();
  GlobalStandardization s;
  s.x_centers.resize(p);
  s.x_scales.resize(p);
  auto classical_scale = [](const VectorXd& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / (v.size() - 1));
  };
  for (int j = 0; j < p; ++j) {
    const VectorXd col = data.X.col(j);
    double center, scale;
    if (robust) {
      center = median(col);
      scale = mad(col, center);
      if (scale == 0.0) scale = classical_scale(col);
    } else {
      center = col.mean();
      scale = classical_scale(col);
    }
    if (scale == 0.0) scale = 1.0;  // constant column, flagged downstream
    s.x_centers[j] = center;
    s.x_scales[j] = scale;
  }
  if (robust) {
    s.y_center = median(data.y);
    s.y_scale = mad(data.y, s.y_center);
    if (s.y_scale == 0.0) s.y_scale = classical_scale(data.y);
  } else {
    s.y_center = data.y.mean();
    s.y_scale = classical_scale(data.y);
  }
  if (s.y_scale == 0.0) throw std::invalid_argument("select: constant response");
  return s;
}

inline Dataset apply_standardization(const Dataset& data, const GlobalStandardization& s) {
  MatrixXd X = data.X;
  for (int j = 0; j < data.p(); ++j)
    X.col(j) = (X.col(j).array() - s.x_centers[j]) / s.x_scales[j];
  VectorXd y = (data.y.array() - s.y_center) / s.y_scale;
  return Dataset(std::move(X), std::move(y));
}

inline SparseLtsFit fit_to_original(const SparseLtsFit& fit, const GlobalStandardization& s,
                                    double grid_lambda) {
  SparseLtsFit out = fit;
  out.raw_coefficients = s.to_original(fit.raw_coefficients);
  out.reweighted_coefficients = s.to_original(fit.reweighted_coefficients);
  out.raw_center = fit.raw_center * s.y_scale;
  out.raw_scale = fit.raw_scale * s.y_scale;
  out.reweighted_center = fit.reweighted_center * s.y_scale;
  out.reweighted_scale = fit.reweighted_scale * s.y_scale;
  out.lambda = grid_lambda;
  return out;
}

}  // namespace detail

struct PathResult {
  VectorXd grid;                    // descending, lambda0 fractions
  double lambda0 = 0.0;
  std::vector<SparseLtsFit> fits;   // original units, one per grid point
  std::vector<double> bic_raw;
  std::vector<double> bic_reweighted;
  std::vector<std::uint8_t> failed;
  std::vector<RawFitDiagnostics> diagnostics;
};

// Fit the sparse LTS along a descending penalty grid. The first grid point
// runs the full restart search; later points reuse the previous optimal
// subset as a warm chain plus a smaller batch of fresh elemental restarts.
inline PathResult sparse_lts_path(const Dataset& data, const SelectConfig& config,
                                  const std::optional<VectorXd>& grid_override = std::nullopt) {
  config.base.validate();
  const int n = data.n();
  const bool plain_lasso = config.base.alpha >= 1.0;

  PathResult path;
  path.lambda0 = plain_lasso ? lambda_max_pearson(data) : lambda_max_robust(data);
  if (grid_override) {
    path.grid = *grid_override;
  } else if (config.fixed_lambda) {
    path.grid = VectorXd::Constant(1, *config.fixed_lambda);
  } else {
    path.grid = lambda_grid(path.lambda0, data.p(), n);
  }
  const int n_grid = static_cast<int>(path.grid.size());
  path.fits.resize(n_grid);
  path.bic_raw.assign(n_grid, std::numeric_limits<double>::infinity());
  path.bic_reweighted.assign(n_grid, std::numeric_limits<double>::infinity());
  path.failed.assign(n_grid, 0);
  path.diagnostics.resize(n_grid);

  const detail::GlobalStandardization standardization =
      detail::make_standardization(data, !plain_lasso);
  const Dataset std_data = detail::apply_standardization(data, standardization);
  const double solver_multiplier = static_cast<double>(n - 1);

  auto point_config = [&](int k) {
    SparseLtsConfig cfg = config.base;
    cfg.lambda = path.grid[k] * solver_multiplier;
    if (plain_lasso) {
      // h = n: every restart lands on the full subset, one chain suffices.
      cfg.n_starts = 1;
      cfg.n_keep = 1;
    }
    return cfg;
  };

  // Concentrate a chain seeded from another grid point's optimal subset.
  auto warm_chain = [&](const SubsetFit& seed, const SparseLtsConfig& cfg, bool& reached) {
    LassoConfig warm_cfg = cfg.lasso_config();
    warm_cfg.warm_start = &seed.coefficients;
    LassoFit warm_fit = lasso_fit(std_data, seed.subset, warm_cfg);
    SubsetFit warm;
    warm.subset = seed.subset;
    warm.coefficients = std::move(warm_fit.coefficients);
    warm.objective = objective(std_data, warm.subset, warm.coefficients, cfg.lambda);
    warm.solver_converged = warm_fit.converged;
    bool trouble = false;
    return detail::concentrate(std_data, std::move(warm), cfg, reached, trouble);
  };

  // Residual scale, weights, reweighted fit and scores for one grid point.
  auto finish_point = [&](int k, const SubsetFit& best, const RawFitDiagnostics& diagnostics) {
    const SparseLtsConfig cfg = point_config(k);
    const ScaleEstimate est = raw_scale(std_data, best, cfg.alpha);
    VectorXd weights = est.exact_fit
                           ? VectorXd::Ones(n)
                           : outlier_weights(residuals(std_data, best.coefficients),
                                             est.center, est.scale, cfg.delta);
    SparseLtsFit std_fit = fit_reweighted(std_data, best, est, weights, cfg);
    std_fit.n_converged_restarts = diagnostics.n_converged_restarts;
    path.fits[k] = detail::fit_to_original(std_fit, standardization, path.grid[k]);
    path.bic_raw[k] = bic_score(path.fits[k], n, false);
    path.bic_reweighted[k] = bic_score(path.fits[k], n, true);
    path.diagnostics[k] = diagnostics;
  };

  const Rng root(config.base.seed);
  std::vector<SubsetFit> best_fits(n_grid);

  // Descending sweep: full restart search at the top of the grid, then fresh
  // restarts plus a warm chain from the previous penalty.
  const SubsetFit* previous_best = nullptr;
  for (int k = 0; k < n_grid; ++k) {
    const SparseLtsConfig cfg = point_config(k);
    try {
      RawFitResult raw;
      if (k == 0 || previous_best == nullptr) {
        raw = fit_raw(std_data, cfg);
      } else {
        const int n_fresh = plain_lasso ? 1 : std::max(1, config.path_fresh_starts);
        SparseLtsConfig fresh_cfg = cfg;
        fresh_cfg.n_starts = n_fresh;
        fresh_cfg.n_keep = std::min(cfg.n_keep, n_fresh);
        std::vector<std::vector<int>> triples(n_fresh);
        for (int s = 0; s < n_fresh; ++s) {
          Rng stream = root.stream(detail::kPathStreamTag, static_cast<std::uint64_t>(k),
                                   static_cast<std::uint64_t>(s));
          triples[s] = stream.sample_distinct(n, 3);
        }
        raw = fit_raw_with_starts(std_data, triples, fresh_cfg);

        bool reached = false;
        SubsetFit warm = warm_chain(*previous_best, cfg, reached);
        if (reached) ++raw.diagnostics.n_converged_restarts;
        if (warm.objective <= raw.best.objective) raw.best = std::move(warm);
      }
      finish_point(k, raw.best, raw.diagnostics);
      best_fits[k] = std::move(raw.best);
      previous_best = &best_fits[k];
    } catch (const std::exception&) {
      path.failed[k] = 1;
      // keep warm-starting from the last good point
    }
  }

  // Ascending refinement sweep: basins discovered at small penalties are
  // offered to the larger ones; a point is replaced only when the trimmed
  // objective improves, so this is purely a better search for the same
  // estimator.
  if (!plain_lasso && config.path_refine) {
    for (int k = n_grid - 2; k >= 0; --k) {
      if (path.failed[k] || path.failed[k + 1]) continue;
      const SparseLtsConfig cfg = point_config(k);
      try {
        bool reached = false;
        SubsetFit candidate = warm_chain(best_fits[k + 1], cfg, reached);
        if (candidate.objective < best_fits[k].objective) {
          best_fits[k] = std::move(candidate);
          finish_point(k, best_fits[k], path.diagnostics[k]);
        }
      } catch (const std::exception&) {
        // refinement is best-effort; the descending-sweep fit stands
      }
    }
  }

  bool any_ok = false;
  for (int k = 0; k < n_grid; ++k)
    if (!path.failed[k]) any_ok = true;
  if (!any_ok) throw std::runtime_error("sparse_lts_path: every grid point failed");
  return path;
}

// Root trimmed mean squared prediction error of sparse LTS fits over a
// penalty grid, estimated by repeated k-fold cross-validation. Squared
// prediction errors are pooled over all n observations per repetition,
// trimmed with the fitting proportion, and averaged over repetitions.
inline VectorXd cv_rtmspe_grid(const Dataset& data, const VectorXd& grid, int k_folds,
                               const SelectConfig& config, int n_repetitions) {
  if (k_folds < 2) throw std::invalid_argument("cv_rtmspe: need k >= 2 folds");
  if (k_folds > data.n()) throw std::invalid_argument("cv_rtmspe: more folds than rows");
  if (n_repetitions < 1) throw std::invalid_argument("cv_rtmspe: need n_repetitions >= 1");
  const int n = data.n();
  const int n_grid = static_cast<int>(grid.size());
  const int h_cv = config.base.subset_size(n);

  const Rng root(config.base.seed);
  VectorXd total = VectorXd::Zero(n_grid);
  for (int rep = 0; rep < n_repetitions; ++rep) {
    // Random fold assignment for this repetition.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng stream = root.stream(detail::kCvStreamTag, static_cast<std::uint64_t>(rep));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(stream.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(perm[i], perm[j]);
    }

    MatrixXd errors_sq(n, n_grid);
    int offset = 0;
    for (int fold = 0; fold < k_folds; ++fold) {
      const int fold_size = n / k_folds + (fold < n % k_folds ? 1 : 0);
      std::vector<int> test_rows(perm.begin() + offset, perm.begin() + offset + fold_size);
      offset += fold_size;

      const int n_train = n - fold_size;
      if (n_train < 6) throw std::invalid_argument("cv_rtmspe: training fold too small");
      std::vector<std::uint8_t> in_test(n, 0);
      for (int row : test_rows) in_test[row] = 1;
      MatrixXd X_train(n_train, data.p());
      VectorXd y_train(n_train);
      int r = 0;
      for (int i = 0; i < n; ++i) {
        if (in_test[i]) continue;
        X_train.row(r) = data.X.row(i);
        y_train[r] = data.y[i];
        ++r;
      }
      Dataset train(std::move(X_train), std::move(y_train));

      SelectConfig fold_config = config;
      fold_config.base.seed = root.stream(detail::kCvStreamTag, rep + 1000, fold).next_u64();
      PathResult fold_path = sparse_lts_path(train, fold_config, grid);
      for (int k = 0; k < n_grid; ++k) {
        if (fold_path.failed[k]) {
          for (int row : test_rows) errors_sq(row, k) = std::numeric_limits<double>::infinity();
          continue;
        }
        const Coefficients& coef = fold_path.fits[k].reweighted_coefficients;
        for (int row : test_rows) {
          const double pred = coef.intercept + data.X.row(row).dot(coef.slopes);
          const double err = data.y[row] - pred;
          errors_sq(row, k) = err * err;
        }
      }
    }
    for (int k = 0; k < n_grid; ++k)
      total[k] += std::sqrt(trimmed_sum(errors_sq.col(k), h_cv) / h_cv);
  }
  return total / n_repetitions;
}

inline double cv_rtmspe(const Dataset& data, double lambda, int k_folds,
                        const SelectConfig& config, int n_repetitions) {
  const VectorXd grid = VectorXd::Constant(1, lambda);
  return cv_rtmspe_grid(data, grid, k_folds, config, n_repetitions)[0];
}

// Evaluate the criterion over the grid and return the winning penalty and
// fit. Ties resolve to the larger (sparser) lambda.
inline SelectionResult select(const Dataset& data, Criterion criterion,
                              const SelectConfig& config) {
  PathResult path = sparse_lts_path(data, config);
  const int n_grid = static_cast<int>(path.grid.size());

  SelectionResult result;
  result.grid = path.grid;
  result.criterion = criterion;
  result.lambda0 = path.lambda0;
  result.failed = path.failed;
  result.scores.resize(n_grid);

  if (criterion == Criterion::kBic) {
    for (int k = 0; k < n_grid; ++k)
      result.scores[k] = path.failed[k]
                             ? std::numeric_limits<double>::infinity()
                             : (config.bic_on_reweighted ? path.bic_reweighted[k]
                                                         : path.bic_raw[k]);
  } else {
    const VectorXd cv = cv_rtmspe_grid(data, path.grid, config.cv_folds, config,
                                       config.cv_repetitions);
    for (int k = 0; k < n_grid; ++k)
      result.scores[k] =
          path.failed[k] ? std::numeric_limits<double>::infinity() : cv[k];
  }

  int best = -1;
  for (int k = 0; k < n_grid; ++k) {
    if (path.failed[k]) continue;
    if (best < 0 || result.scores[k] < result.scores[best]) best = k;
  }
  if (best < 0) throw std::runtime_error("select: no usable grid point");
  result.best_lambda = path.grid[best];
  result.best_fit = path.fits[best];
  return result;
}

}  // namespace sparselts
