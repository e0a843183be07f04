#pragma once

// L1-penalized least squares on a row subset, plus the penalty boundary
// estimates used to build selection grids.
//
// lasso_fit minimizes
//
//     sum_{i in subset} w_i (y_i - b0 - x_i'beta)^2 + M lambda sum_j |beta_j|
//
// with M = sum of weights (= |subset| for unit weights) and the intercept
// unpenalized. The solve runs on subset-standardized data, which is an exact
// reparameterization: coordinate j gets threshold M lambda / (2 s_j), so the
// returned coefficients minimize the objective above in the original units.
// That exactness is what makes the C-step objective provably non-increasing.

#include "sparselts/core.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sparselts {

struct LassoConfig {
  double lambda = 0.0;
  int max_iterations = 100000;  // coordinate-descent sweeps
  double tolerance = 1e-7;      // max coefficient change per sweep, standardized scale
  std::optional<VectorXd> observation_weights;  // length n, aligned with data rows

  // Optional hooks. warm_start points at coefficients in original units;
  // objective_trace collects the objective value after every sweep.
  const Coefficients* warm_start = nullptr;
  std::vector<double>* objective_trace = nullptr;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("LassoConfig: lambda must be >= 0");
    if (!(tolerance > 0.0)) throw std::invalid_argument("LassoConfig: tolerance must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("LassoConfig: max_iterations must be >= 1");
  }
};

struct LassoFit {
  Coefficients coefficients;
  bool converged = true;
  int sweeps = 0;
};

namespace detail {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Cyclic coordinate descent with active-set iterations between full sweeps.
// Xs has zeroed constant columns; b holds standardized-scale coefficients.
inline LassoFit cd_solve(const MatrixXd& Xs, const VectorXd& ys,
                         const VectorXd* row_weights, const StandardizationStats& stats,
                         double penalty_multiplier, const LassoConfig& config,
                         VectorXd b) {
  const int p = static_cast<int>(Xs.cols());
  const double lambda = config.lambda;

  VectorXd nu(p);         // sum_i w_i xs_ij^2
  VectorXd threshold(p);  // M lambda / (2 s_j)
  for (int j = 0; j < p; ++j) {
    if (stats.constant[j]) {
      nu[j] = 0.0;
      threshold[j] = 0.0;
      b[j] = 0.0;
      continue;
    }
    nu[j] = row_weights ? Xs.col(j).cwiseProduct(*row_weights).dot(Xs.col(j))
                        : Xs.col(j).squaredNorm();
    threshold[j] = penalty_multiplier * lambda / (2.0 * stats.scales[j]);
  }

  VectorXd residual = ys - Xs * b;

  auto objective = [&]() {
    double rss = row_weights ? residual.cwiseProduct(*row_weights).dot(residual)
                             : residual.squaredNorm();
    double penalty = 0.0;
    for (int j = 0; j < p; ++j)
      if (!stats.constant[j]) penalty += std::abs(b[j]) / stats.scales[j];
    return rss + penalty_multiplier * lambda * penalty;
  };

  auto update = [&](int j) -> double {
    if (stats.constant[j] || nu[j] <= 0.0) return 0.0;
    const double grad = row_weights ? Xs.col(j).cwiseProduct(*row_weights).dot(residual)
                                    : Xs.col(j).dot(residual);
    const double z = grad + nu[j] * b[j];
    const double b_new = soft_threshold(z, threshold[j]) / nu[j];
    const double delta = b_new - b[j];
    if (delta != 0.0) {
      residual -= delta * Xs.col(j);
      b[j] = b_new;
    }
    return std::abs(delta);
  };

#ifndef NDEBUG
  double prev_objective = std::numeric_limits<double>::infinity();
#endif
  auto end_sweep = [&]() {
    if (config.objective_trace) config.objective_trace->push_back(objective());
#ifndef NDEBUG
    const double obj = objective();
    assert(obj <= prev_objective * (1.0 + 1e-12) + 1e-12);
    prev_objective = obj;
#endif
  };

  std::vector<int> active;
  active.reserve(p);
  int sweeps = 0;
  bool converged = false;
  while (sweeps < config.max_iterations) {
    // Full sweep over all coordinates.
    double max_delta = 0.0;
    for (int j = 0; j < p; ++j) max_delta = std::max(max_delta, update(j));
    ++sweeps;
    end_sweep();
    if (max_delta <= config.tolerance) {
      converged = true;
      break;
    }
    // Iterate on the active set until it stabilizes, then re-check all.
    active.clear();
    for (int j = 0; j < p; ++j)
      if (b[j] != 0.0) active.push_back(j);
    while (sweeps < config.max_iterations) {
      double active_delta = 0.0;
      for (int j : active) active_delta = std::max(active_delta, update(j));
      ++sweeps;
      end_sweep();
      if (active_delta <= config.tolerance) break;
    }
  }

  LassoFit fit;
  fit.coefficients = destandardize(b, stats);
  fit.converged = converged;
  fit.sweeps = sweeps;
  return fit;
}

// Weighted analogue of subset_standardize for genuinely fractional weights.
inline StandardizedSubset weighted_standardize(const Dataset& data, const IndexSet& subset,
                                               const VectorXd& weights) {
  const int h = subset.size();
  const int p = data.p();
  StandardizedSubset out;
  out.X.resize(h, p);
  out.y.resize(h);
  VectorXd w(h);
  for (int i = 0; i < h; ++i) {
    const int row = subset.indices[i];
    out.X.row(i) = data.X.row(row);
    out.y[i] = data.y[row];
    w[i] = weights[row];
  }
  const double w_sum = w.sum();
  if (w_sum <= 1.0)
    throw std::invalid_argument("lasso_fit: total weight must exceed 1");

  out.stats.centers.resize(p + 1);
  out.stats.scales.resize(p);
  out.stats.constant.assign(p, 0);

  const double y_mean = w.dot(out.y) / w_sum;
  out.y.array() -= y_mean;
  out.stats.centers[p] = y_mean;

  for (int j = 0; j < p; ++j) {
    const double mean = w.dot(out.X.col(j)) / w_sum;
    out.X.col(j).array() -= mean;
    out.stats.centers[j] = mean;
    const double ss = out.X.col(j).cwiseProduct(w).dot(out.X.col(j));
    const double sd = std::sqrt(ss / (w_sum - 1.0));
    if (sd <= 1e-12 * (1.0 + std::abs(mean))) {
      out.stats.constant[j] = 1;
      out.stats.scales[j] = 1.0;
      out.X.col(j).setZero();
    } else {
      out.stats.scales[j] = sd;
      out.X.col(j) /= sd;
    }
  }
  return out;
}

inline VectorXd warm_start_vector(const Coefficients* warm, const StandardizationStats& stats) {
  const int p = static_cast<int>(stats.scales.size());
  VectorXd b = VectorXd::Zero(p);
  if (warm != nullptr) {
    if (warm->slopes.size() != p)
      throw std::invalid_argument("lasso_fit: warm start dimension mismatch");
    for (int j = 0; j < p; ++j)
      if (!stats.constant[j] && warm->slopes[j] != 0.0)
        b[j] = warm->slopes[j] * stats.scales[j];
  }
  return b;
}

}  // namespace detail

inline LassoFit lasso_fit(const Dataset& data, const IndexSet& subset, const LassoConfig& config) {
  config.validate();
  if (subset.size() < 3) throw std::invalid_argument("lasso_fit: need |subset| >= 3");
  if (!subset.indices.empty() && subset.indices.back() >= data.n())
    throw std::invalid_argument("lasso_fit: subset index out of range");

  if (config.observation_weights) {
    const VectorXd& w = *config.observation_weights;
    if (w.size() != data.n())
      throw std::invalid_argument("lasso_fit: weights length must equal n");
    double w_sum = 0.0;
    bool binary = true;
    for (int idx : subset.indices) {
      const double wi = w[idx];
      if (wi < 0.0 || wi > 1.0 || !std::isfinite(wi))
        throw std::invalid_argument("lasso_fit: weights must lie in [0, 1]");
      if (wi != 0.0 && wi != 1.0) binary = false;
      w_sum += wi;
    }
    if (w_sum == 0.0) throw std::invalid_argument("lasso_fit: weights must not be all zero");

    if (binary) {
      // Binary weights are exactly the unweighted fit on the weight-1 rows.
      std::vector<int> kept;
      kept.reserve(subset.size());
      for (int idx : subset.indices)
        if (w[idx] == 1.0) kept.push_back(idx);
      IndexSet reduced;
      reduced.indices = std::move(kept);
      LassoConfig sub = config;
      sub.observation_weights.reset();
      return lasso_fit(data, reduced, sub);
    }

    StandardizedSubset std_data = detail::weighted_standardize(data, subset, w);
    VectorXd w_rows(subset.size());
    for (int i = 0; i < subset.size(); ++i) w_rows[i] = w[subset.indices[i]];
    VectorXd b = detail::warm_start_vector(config.warm_start, std_data.stats);
    return detail::cd_solve(std_data.X, std_data.y, &w_rows, std_data.stats, w_sum, config,
                            std::move(b));
  }

  StandardizedSubset std_data = subset_standardize(data, subset);
  VectorXd b = detail::warm_start_vector(config.warm_start, std_data.stats);
  return detail::cd_solve(std_data.X, std_data.y, nullptr, std_data.stats,
                          static_cast<double>(subset.size()), config, std::move(b));
}

// Normalized KKT residuals of a fit, in units of coefficient change on the
// standardized scale. `max_active_gap` measures how far active coordinates
// are from stationarity, `max_inactive_excess` how far inactive gradients
// exceed the penalty.
struct KktReport {
  double max_active_gap = 0.0;
  double max_inactive_excess = 0.0;
};

inline KktReport lasso_kkt(const Dataset& data, const IndexSet& subset, const LassoConfig& config,
                           const Coefficients& coef) {
  StandardizedSubset std_data = subset_standardize(data, subset);
  const int p = data.p();
  const double multiplier = static_cast<double>(subset.size());
  VectorXd b = detail::warm_start_vector(&coef, std_data.stats);
  VectorXd residual = std_data.y - std_data.X * b;
  KktReport report;
  for (int j = 0; j < p; ++j) {
    if (std_data.stats.constant[j]) continue;
    const double nu = std_data.X.col(j).squaredNorm();
    if (nu <= 0.0) continue;
    const double grad = std_data.X.col(j).dot(residual);
    const double threshold = multiplier * config.lambda / (2.0 * std_data.stats.scales[j]);
    if (b[j] != 0.0) {
      const double gap = std::abs(grad - (b[j] > 0.0 ? threshold : -threshold)) / nu;
      report.max_active_gap = std::max(report.max_active_gap, gap);
    } else {
      const double excess = std::max(0.0, std::abs(grad) - threshold) / nu;
      report.max_inactive_excess = std::max(report.max_inactive_excess, excess);
    }
  }
  return report;
}

namespace detail {

inline double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
    m = 0.5 * (m + values[mid - 1]);
  }
  return m;
}

inline double median(const VectorXd& values) {
  return median_of(std::vector<double>(values.data(), values.data() + values.size()));
}

// Median absolute deviation scaled for consistency at the normal model.
inline double mad(const VectorXd& values, double center) {
  std::vector<double> abs_dev(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) abs_dev[i] = std::abs(values[i] - center);
  return 1.4826 * median_of(std::move(abs_dev));
}

inline double pearson(const VectorXd& x, const VectorXd& y) {
  const double mx = x.mean();
  const double my = y.mean();
  const VectorXd xc = x.array() - mx;
  const VectorXd yc = y.array() - my;
  const double denom = std::sqrt(xc.squaredNorm() * yc.squaredNorm());
  if (denom == 0.0) return 0.0;
  return xc.dot(yc) / denom;
}

}  // namespace detail

// Robust correlation via two-step bivariate winsorization. Variables are
// median/MAD standardized; an initial correlation comes from adjusted
// univariate winsorization (clipping at +-c in the two quadrants holding the
// majority of the points and at the proportionally smaller +-hc elsewhere,
// h = minority/majority count ratio). Points are then shrunk toward the
// initial-correlation ellipse with the redescending factor min(1, D / d^2),
// D the 95% chi-square(2) quantile, so that gross outliers land near the
// origin instead of parking on the tolerance boundary. Falls back to the
// classical SD as scale when a MAD is zero.
inline double winsorized_correlation(const VectorXd& x, const VectorXd& y, double c,
                                     bool* mad_fallback = nullptr) {
  if (x.size() != y.size()) throw std::invalid_argument("winsorized_correlation: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("winsorized_correlation: need length >= 3");
  if (!(c > 0.0)) throw std::invalid_argument("winsorized_correlation: c must be > 0");
  if (mad_fallback) *mad_fallback = false;

  const Eigen::Index n = x.size();
  auto standardize = [&](const VectorXd& v) {
    const double center = detail::median(v);
    double scale = detail::mad(v, center);
    if (scale == 0.0) {
      scale = std::sqrt((v.array() - v.mean()).square().sum() / (n - 1));
      if (scale == 0.0)
        throw std::invalid_argument("winsorized_correlation: constant input");
      if (mad_fallback) *mad_fallback = true;
    }
    return VectorXd((v.array() - center) / scale);
  };

  const VectorXd u = standardize(x);
  const VectorXd v = standardize(y);

  Eigen::Index concordant = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (u[i] * v[i] > 0.0) ++concordant;
  const Eigen::Index discordant = n - concordant;
  const bool major_concordant = concordant >= discordant;
  const double ratio = std::max(concordant, discordant) > 0
                           ? static_cast<double>(std::min(concordant, discordant)) /
                                 static_cast<double>(std::max(concordant, discordant))
                           : 1.0;
  const double c_minor = ratio * c;

  VectorXd uc(n), vc(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double cc = ((u[i] * v[i] > 0.0) == major_concordant) ? c : c_minor;
    uc[i] = std::clamp(u[i], -cc, cc);
    vc[i] = std::clamp(v[i], -cc, cc);
  }
  const double r0 = detail::pearson(uc, vc);
  if (1.0 - r0 * r0 < 1e-12) return std::clamp(r0, -1.0, 1.0);

  const double cutoff = 5.991464547107982;  // 95% quantile of chi-square(2)
  const double det = 1.0 - r0 * r0;
  VectorXd us(n), vs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d2 = (u[i] * u[i] - 2.0 * r0 * u[i] * v[i] + v[i] * v[i]) / det;
    const double shrink = d2 > cutoff ? cutoff / d2 : 1.0;
    us[i] = shrink * u[i];
    vs[i] = shrink * v[i];
  }
  return std::clamp(detail::pearson(us, vs), -1.0, 1.0);
}

namespace detail {

template <typename CorFn>
inline double lambda_max_impl(const Dataset& data, CorFn&& correlation, const char* who) {
  if (data.n() < 3) throw std::invalid_argument(std::string(who) + ": need n >= 3");
  const double y_sd = std::sqrt((data.y.array() - data.y.mean()).square().sum());
  if (y_sd == 0.0) throw std::invalid_argument(std::string(who) + ": constant response");
  double best = -1.0;
  for (int j = 0; j < data.p(); ++j) {
    const VectorXd col = data.X.col(j);
    const double col_ss = (col.array() - col.mean()).square().sum();
    if (col_ss == 0.0) continue;  // constant column, skipped
    best = std::max(best, std::abs(correlation(col, data.y)));
  }
  if (best < 0.0) throw std::invalid_argument(std::string(who) + ": all columns constant");
  return 2.0 * best / data.n();
}

}  // namespace detail

// Smallest penalty that zeroes every slope for standardized data: the
// classical estimate (2/n) max_j |Cor(y, x_j)|.
inline double lambda_max_pearson(const Dataset& data) {
  return detail::lambda_max_impl(
      data, [](const VectorXd& x, const VectorXd& y) { return detail::pearson(x, y); },
      "lambda_max_pearson");
}

// Same boundary with the Pearson correlation replaced by the winsorized
// robust correlation.
inline double lambda_max_robust(const Dataset& data, double c = 2.0) {
  return detail::lambda_max_impl(
      data, [c](const VectorXd& x, const VectorXd& y) { return winsorized_correlation(x, y, c); },
      "lambda_max_robust");
}

}  // namespace sparselts
