#pragma once

// The sparse least trimmed squares estimator: trimmed L1-penalized least
// squares computed with concentration steps from elemental restarts,
// followed by a residual-based reweighting step.

#include "sparselts/core.hpp"
#include "sparselts/lasso.hpp"
#include "sparselts/parallel.hpp"
#include "sparselts/prob.hpp"
#include "sparselts/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sparselts {

struct SubsetFit {
  IndexSet subset;
  Coefficients coefficients;
  double objective = std::numeric_limits<double>::infinity();
  bool solver_converged = true;
};

struct SparseLtsConfig {
  double alpha = 0.75;      // trimming fraction, h = floor((n + 1) alpha)
  double lambda = 0.0;
  int n_starts = 500;       // elemental restarts
  int n_keep = 10;          // chains iterated to convergence
  int n_initial_csteps = 2;
  double delta = 0.0125;    // outlier cutoff level
  std::uint64_t seed = 1;
  int max_csteps = 100;
  double tolerance = 1e-7;
  // Concentration runs at this looser tolerance until the subset stops
  // changing; converged chains are then refined at `tolerance`. Descent per
  // coordinate update keeps the objective monotone either way.
  double cstep_tolerance = 1e-4;
  int max_iterations = 100000;
  int threads = 1;

  void validate() const {
    if (!(alpha > 0.5 && alpha <= 1.0))
      throw std::invalid_argument("SparseLtsConfig: alpha must be in (0.5, 1]");
    if (lambda < 0.0) throw std::invalid_argument("SparseLtsConfig: lambda must be >= 0");
    if (n_starts < 1) throw std::invalid_argument("SparseLtsConfig: n_starts must be >= 1");
    if (n_keep < 1 || n_keep > n_starts)
      throw std::invalid_argument("SparseLtsConfig: need 1 <= n_keep <= n_starts");
    if (n_initial_csteps < 0)
      throw std::invalid_argument("SparseLtsConfig: n_initial_csteps must be >= 0");
    if (!(delta > 0.0 && delta < 0.5))
      throw std::invalid_argument("SparseLtsConfig: delta must be in (0, 0.5)");
    if (max_csteps < 1) throw std::invalid_argument("SparseLtsConfig: max_csteps must be >= 1");
  }

  int subset_size(int n) const {
    const int h = static_cast<int>(std::floor((n + 1) * alpha));
    return std::clamp(h, 3, n);
  }

  LassoConfig lasso_config() const {
    LassoConfig cfg;
    cfg.lambda = lambda;
    cfg.tolerance = tolerance;
    cfg.max_iterations = max_iterations;
    return cfg;
  }
};

struct SparseLtsFit {
  Coefficients raw_coefficients;
  double raw_center = 0.0;
  double raw_scale = 0.0;
  VectorXd weights;  // binary, length n
  Coefficients reweighted_coefficients;
  double reweighted_center = 0.0;
  double reweighted_scale = 0.0;
  double lambda = 0.0;
  int h = 0;
  IndexSet best_subset;
  int n_converged_restarts = 0;

  bool exact_fit = false;          // raw scale was zero
  bool reweight_fallback = false;  // too few weight-1 rows, raw fit reused

  int n_w() const {
    int count = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (weights[i] == 1.0) ++count;
    return count;
  }
};

struct RawFitDiagnostics {
  int n_converged_restarts = 0;
  int n_cstep_cap_hits = 0;
  int n_distinct_final_subsets = 0;
  int n_solver_nonconverged = 0;
};

// Trimmed penalized objective Q(H, beta): subset residual sum of squares
// plus |H| lambda sum_j |beta_j|, intercept in the residuals only.
inline double objective(const Dataset& data, const IndexSet& subset, const Coefficients& coef,
                        double lambda) {
  const VectorXd r = residuals(data, coef);
  double rss = 0.0;
  for (int idx : subset.indices) rss += r[idx] * r[idx];
  return rss + subset.size() * lambda * coef.slopes.cwiseAbs().sum();
}

namespace detail {

// Sweep budget for loose-tolerance search fits; converged chains are always
// refined with the full budget.
constexpr int kSearchSweepCap = 100;

inline SubsetFit c_step_at_tolerance(const Dataset& data, const SubsetFit& current,
                                     const SparseLtsConfig& config, double tolerance) {
  const int h = current.subset.size();
  const VectorXd r = residuals(data, current.coefficients);
  const IndexSet next_subset = h_smallest_indices(r.cwiseAbs2(), h);

  LassoConfig lasso_cfg = config.lasso_config();
  lasso_cfg.tolerance = tolerance;
  if (tolerance > config.tolerance)
    lasso_cfg.max_iterations = std::min(lasso_cfg.max_iterations, kSearchSweepCap);
  lasso_cfg.warm_start = &current.coefficients;
  LassoFit fit = lasso_fit(data, next_subset, lasso_cfg);

  SubsetFit next;
  next.subset = next_subset;
  next.coefficients = std::move(fit.coefficients);
  next.objective = objective(data, next.subset, next.coefficients, config.lambda);
  next.solver_converged = fit.converged;
  return next;
}

}  // namespace detail

// One concentration step: select the h rows with smallest squared residuals
// under the current coefficients, then refit the lasso on them, warm-started
// from those coefficients. The objective never increases.
inline SubsetFit c_step(const Dataset& data, const SubsetFit& current,
                        const SparseLtsConfig& config) {
  return detail::c_step_at_tolerance(data, current, config, config.tolerance);
}

namespace detail {

inline SubsetFit elemental_start_at_tolerance(const Dataset& data,
                                              const std::vector<int>& triple,
                                              const SparseLtsConfig& config, double tolerance) {
  if (triple.size() != 3)
    throw std::invalid_argument("elemental_start: need exactly 3 indices");
  const int h = config.subset_size(data.n());

  IndexSet elemental(std::vector<int>(triple), data.n());
  LassoConfig elemental_cfg = config.lasso_config();
  elemental_cfg.tolerance = tolerance;
  if (tolerance > config.tolerance)
    elemental_cfg.max_iterations = std::min(elemental_cfg.max_iterations, kSearchSweepCap);
  LassoFit elemental_fit = lasso_fit(data, elemental, elemental_cfg);

  const VectorXd r = residuals(data, elemental_fit.coefficients);
  const IndexSet start_subset = h_smallest_indices(r.cwiseAbs2(), h);

  LassoConfig lasso_cfg = config.lasso_config();
  lasso_cfg.tolerance = tolerance;
  if (tolerance > config.tolerance)
    lasso_cfg.max_iterations = std::min(lasso_cfg.max_iterations, kSearchSweepCap);
  lasso_cfg.warm_start = &elemental_fit.coefficients;
  LassoFit fit = lasso_fit(data, start_subset, lasso_cfg);

  SubsetFit start;
  start.subset = start_subset;
  start.coefficients = std::move(fit.coefficients);
  start.objective = objective(data, start.subset, start.coefficients, config.lambda);
  start.solver_converged = fit.converged && elemental_fit.converged;
  return start;
}

}  // namespace detail

// Seed one restart chain from a fixed elemental triple: lasso on the three
// rows, then the h rows closest to that fit, refit included.
inline SubsetFit elemental_start_from_triple(const Dataset& data, const std::vector<int>& triple,
                                             const SparseLtsConfig& config) {
  return detail::elemental_start_at_tolerance(data, triple, config, config.tolerance);
}

inline SubsetFit elemental_start(const Dataset& data, Rng& rng, const SparseLtsConfig& config) {
  if (data.n() < 3) throw std::invalid_argument("elemental_start: need n >= 3");
  return elemental_start_from_triple(data, rng.sample_distinct(data.n(), 3), config);
}

namespace detail {

constexpr std::uint64_t kElementalStreamTag = 0x51;

// Iterate C-steps until the subset repeats (fixed point) or the cap is hit.
// Concentration runs at the loose tolerance first; once the subset settles,
// the chain continues at full precision until it settles again.
inline SubsetFit concentrate(const Dataset& data, SubsetFit chain, const SparseLtsConfig& config,
                             bool& reached_fixed_point, bool& solver_trouble) {
  reached_fixed_point = false;
  solver_trouble = false;
  const double loose = std::max(config.tolerance, config.cstep_tolerance);
  double tolerance = loose;
  for (int step = 0; step < config.max_csteps; ++step) {
    SubsetFit next = c_step_at_tolerance(data, chain, config, tolerance);
    // Capped loose-mode fits are part of the search; only full-precision
    // fits count as solver trouble.
    if (tolerance <= config.tolerance && !next.solver_converged) solver_trouble = true;
    const bool same_subset = next.subset == chain.subset;
    chain = std::move(next);
    if (same_subset) {
      if (tolerance <= config.tolerance) {
        reached_fixed_point = true;
        break;
      }
      tolerance = config.tolerance;
    }
  }
  return chain;
}

}  // namespace detail

struct RawFitResult {
  SubsetFit best;
  RawFitDiagnostics diagnostics;
};

// Restart search with externally supplied elemental triples. Exposed so that
// tests can replay draws (e.g. through a row permutation); fit_raw generates
// the triples from per-start streams and forwards here.
inline RawFitResult fit_raw_with_starts(const Dataset& data,
                                        const std::vector<std::vector<int>>& triples,
                                        const SparseLtsConfig& config) {
  config.validate();
  const int n = data.n();
  const int h = config.subset_size(n);
  if (h < 3) throw std::invalid_argument("fit_raw: h must be >= 3");
  const int n_starts = static_cast<int>(triples.size());
  if (n_starts < 1) throw std::invalid_argument("fit_raw: need at least one start");

  // Short initial concentration on every start, at the loose tolerance.
  const double loose = std::max(config.tolerance, config.cstep_tolerance);
  std::vector<SubsetFit> starts(n_starts);
  parallel_for(n_starts, config.threads, [&](int s) {
    SubsetFit fit = detail::elemental_start_at_tolerance(data, triples[s], config, loose);
    for (int step = 0; step < config.n_initial_csteps; ++step)
      fit = detail::c_step_at_tolerance(data, fit, config, loose);
    starts[s] = std::move(fit);
  });

  // Keep the most promising chains, ties resolved by start index.
  std::vector<int> order(n_starts);
  std::iota(order.begin(), order.end(), 0);
  const int n_keep = std::min(config.n_keep, n_starts);
  std::partial_sort(order.begin(), order.begin() + n_keep, order.end(), [&](int a, int b) {
    if (starts[a].objective != starts[b].objective)
      return starts[a].objective < starts[b].objective;
    return a < b;
  });

  // Full concentration on the kept chains.
  std::vector<SubsetFit> finals(n_keep);
  std::vector<std::uint8_t> fixed_point(n_keep, 0);
  std::vector<std::uint8_t> trouble(n_keep, 0);
  parallel_for(n_keep, config.threads, [&](int k) {
    bool reached = false;
    bool solver_trouble = false;
    finals[k] = detail::concentrate(data, starts[order[k]], config, reached, solver_trouble);
    fixed_point[k] = reached ? 1 : 0;
    trouble[k] = solver_trouble ? 1 : 0;
  });

  RawFitResult result;
  int best_k = 0;
  for (int k = 1; k < n_keep; ++k) {
    if (finals[k].objective < finals[best_k].objective ||
        (finals[k].objective == finals[best_k].objective && order[k] < order[best_k]))
      best_k = k;
  }
  result.best = finals[best_k];

  std::set<std::vector<int>> distinct;
  for (int k = 0; k < n_keep; ++k) {
    result.diagnostics.n_converged_restarts += fixed_point[k];
    result.diagnostics.n_cstep_cap_hits += fixed_point[k] ? 0 : 1;
    result.diagnostics.n_solver_nonconverged += trouble[k];
    distinct.insert(finals[k].subset.indices);
  }
  result.diagnostics.n_distinct_final_subsets = static_cast<int>(distinct.size());
  return result;
}

inline RawFitResult fit_raw(const Dataset& data, const SparseLtsConfig& config) {
  config.validate();
  if (data.n() < 3) throw std::invalid_argument("fit_raw: need n >= 3");
  std::vector<std::vector<int>> triples(config.n_starts);
  const Rng root(config.seed);
  for (int s = 0; s < config.n_starts; ++s) {
    Rng stream = root.stream(detail::kElementalStreamTag, static_cast<std::uint64_t>(s));
    triples[s] = stream.sample_distinct(data.n(), 3);
  }
  return fit_raw_with_starts(data, triples, config);
}

// Multiplier that makes the trimmed residual scale consistent for the
// standard deviation at the normal model.
inline double consistency_factor(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("consistency_factor: alpha must be in (0, 1]");
  if (alpha == 1.0) return 1.0;
  const double q = normal_quantile((alpha + 1.0) / 2.0);
  const double truncated_second_moment = alpha - 2.0 * q * normal_pdf(q);
  return std::sqrt(alpha / truncated_second_moment);
}

struct ScaleEstimate {
  double center = 0.0;
  double scale = 0.0;
  bool exact_fit = false;  // scale collapsed to zero
};

// Center of the raw residuals over the optimal subset and the consistent
// trimmed scale over all n centered residuals.
inline ScaleEstimate raw_scale(const Dataset& data, const SubsetFit& best, double alpha) {
  const VectorXd r = residuals(data, best.coefficients);
  const int h = best.subset.size();
  double center = 0.0;
  for (int idx : best.subset.indices) center += r[idx];
  center /= h;

  const VectorXd centered_sq = (r.array() - center).square();
  ScaleEstimate est;
  est.center = center;
  est.scale = consistency_factor(alpha) * std::sqrt(trimmed_sum(centered_sq, h) / h);
  if (est.scale <= 0.0) {
    est.scale = 0.0;
    est.exact_fit = true;
  }
  return est;
}

// Binary weights: 1 when the standardized residual is within the normal
// cutoff, inclusive at the boundary.
inline VectorXd outlier_weights(const VectorXd& res, double center, double scale, double delta) {
  if (!(scale > 0.0)) throw std::invalid_argument("outlier_weights: scale must be > 0");
  if (!(delta > 0.0 && delta < 0.5))
    throw std::invalid_argument("outlier_weights: delta must be in (0, 0.5)");
  const double cutoff = normal_quantile(1.0 - delta);
  VectorXd w(res.size());
  for (Eigen::Index i = 0; i < res.size(); ++i)
    w[i] = std::abs((res[i] - center) / scale) <= cutoff ? 1.0 : 0.0;
  return w;
}

// Weighted lasso on the unflagged observations plus the reweighted residual
// center and scale. Falls back to the raw fit when fewer than three rows
// survive.
inline SparseLtsFit fit_reweighted(const Dataset& data, const SubsetFit& raw,
                                   const ScaleEstimate& raw_est, const VectorXd& weights,
                                   const SparseLtsConfig& config) {
  const int n = data.n();
  SparseLtsFit fit;
  fit.raw_coefficients = raw.coefficients;
  fit.raw_center = raw_est.center;
  fit.raw_scale = raw_est.scale;
  fit.weights = weights;
  fit.lambda = config.lambda;
  fit.h = raw.subset.size();
  fit.best_subset = raw.subset;
  fit.exact_fit = raw_est.exact_fit;

  int n_w = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights[i] == 1.0) ++n_w;

  if (n_w < 3) {
    fit.reweighted_coefficients = raw.coefficients;
    fit.reweighted_center = raw_est.center;
    fit.reweighted_scale = raw_est.scale;
    fit.reweight_fallback = true;
    return fit;
  }

  LassoConfig lasso_cfg = config.lasso_config();
  lasso_cfg.observation_weights = weights;
  lasso_cfg.warm_start = &raw.coefficients;
  LassoFit rew = lasso_fit(data, IndexSet::full(n), lasso_cfg);
  fit.reweighted_coefficients = std::move(rew.coefficients);

  const VectorXd r = residuals(data, fit.reweighted_coefficients);
  double center = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (weights[i] == 1.0) center += r[i];
  center /= n_w;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (weights[i] == 1.0) ss += (r[i] - center) * (r[i] - center);

  const double alpha_w = static_cast<double>(n_w) / n;
  fit.reweighted_center = center;
  fit.reweighted_scale = consistency_factor(alpha_w) * std::sqrt(ss / n_w);
  return fit;
}

struct SparseLtsResult {
  SparseLtsFit fit;
  RawFitDiagnostics diagnostics;
};

// Full pipeline at a fixed penalty: raw restart search, residual scale,
// outlier weights, reweighted fit.
inline SparseLtsResult fit_sparse_lts(const Dataset& data, const SparseLtsConfig& config) {
  RawFitResult raw = fit_raw(data, config);
  const ScaleEstimate est = raw_scale(data, raw.best, config.alpha);

  VectorXd weights;
  if (est.exact_fit) {
    weights = VectorXd::Ones(data.n());
  } else {
    weights = outlier_weights(residuals(data, raw.best.coefficients), est.center, est.scale,
                              config.delta);
  }

  SparseLtsResult result;
  result.fit = fit_reweighted(data, raw.best, est, weights, config);
  result.fit.n_converged_restarts = raw.diagnostics.n_converged_restarts;
  result.diagnostics = raw.diagnostics;
  return result;
}

// Empirical breakdown probe: replace the last m rows by the adversarial
// point ((tau, 0, ..., 0), gamma tau) and report the Euclidean norm of the
// fitted slopes.
inline double breakdown_probe(const Dataset& data, int m, double gamma, double tau,
                              const SparseLtsConfig& config) {
  if (m < 0 || m > data.n()) throw std::invalid_argument("breakdown_probe: m out of range");
  Dataset contaminated = data;
  for (int i = data.n() - m; i < data.n(); ++i) {
    contaminated.X.row(i).setZero();
    contaminated.X(i, 0) = tau;
    contaminated.y[i] = gamma * tau;
  }
  RawFitResult raw = fit_raw(contaminated, config);
  return raw.best.coefficients.slopes.norm();
}

}  // namespace sparselts
