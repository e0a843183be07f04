#pragma once

// Data containers, residual computation, order-statistic trimming and
// subset-wise standardization. Everything here is a pure function of its
// inputs and safe to call concurrently.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparselts {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Predictor matrix X (n x p) and response y (length n). Construction rejects
// non-finite entries and dimension mismatches.
struct Dataset {
  MatrixXd X;
  VectorXd y;

  Dataset() = default;
  Dataset(MatrixXd X_in, VectorXd y_in) : X(std::move(X_in)), y(std::move(y_in)) {
    if (X.rows() < 1 || X.cols() < 1)
      throw std::invalid_argument("Dataset: need n >= 1 and p >= 1");
    if (X.rows() != y.size())
      throw std::invalid_argument("Dataset: X row count must equal length of y");
    if (!X.allFinite() || !y.allFinite())
      throw std::invalid_argument("Dataset: non-finite entry");
  }

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
};

// Intercept plus slope vector. Inactive slopes are stored as exact zeros so
// that nonzero counting (df, FPR/FNR) is unambiguous.
struct Coefficients {
  double intercept = 0.0;
  VectorXd slopes;

  Coefficients() = default;
  Coefficients(double intercept_in, VectorXd slopes_in)
      : intercept(intercept_in), slopes(std::move(slopes_in)) {}

  static Coefficients zero(int p) { return Coefficients(0.0, VectorXd::Zero(p)); }

  int n_nonzero() const {
    int count = 0;
    for (Eigen::Index j = 0; j < slopes.size(); ++j)
      if (slopes[j] != 0.0) ++count;
    return count;
  }

  VectorXd predict(const MatrixXd& X) const {
    if (X.cols() != slopes.size())
      throw std::invalid_argument("Coefficients::predict: dimension mismatch");
    return (X * slopes).array() + intercept;
  }
};

// Sorted distinct row indices in [0, n).
struct IndexSet {
  std::vector<int> indices;

  IndexSet() = default;
  explicit IndexSet(std::vector<int> idx, int n = -1) : indices(std::move(idx)) {
    std::sort(indices.begin(), indices.end());
    if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
      throw std::invalid_argument("IndexSet: duplicate index");
    if (!indices.empty()) {
      if (indices.front() < 0)
        throw std::invalid_argument("IndexSet: negative index");
      if (n >= 0 && indices.back() >= n)
        throw std::invalid_argument("IndexSet: index out of range");
    }
  }

  static IndexSet full(int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    IndexSet s;
    s.indices = std::move(idx);
    return s;
  }

  int size() const { return static_cast<int>(indices.size()); }
  bool operator==(const IndexSet& other) const { return indices == other.indices; }
};

// Centers of the predictors and the response (length p + 1, response last)
// and predictor scales on a subset. Columns that are constant on the subset
// are flagged; their scale slot is set to 1 and their slope is pinned to
// zero by the solver.
struct StandardizationStats {
  VectorXd centers;                 // length p + 1
  VectorXd scales;                  // length p
  std::vector<std::uint8_t> constant;  // length p, 1 = constant on subset

  double response_center() const { return centers[centers.size() - 1]; }
};

inline VectorXd residuals(const Dataset& data, const Coefficients& coef) {
  if (coef.slopes.size() != data.p())
    throw std::invalid_argument("residuals: coefficient dimension mismatch");
  return data.y - coef.predict(data.X);
}

namespace detail {

// Indices of `values` ordered by (value, index). Shared by trimmed_sum and
// h_smallest_indices so the two always agree, ties resolved lowest index
// first.
inline std::vector<int> value_order(const VectorXd& values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  return order;
}

inline void check_h(Eigen::Index n, int h, const char* who) {
  if (h < 1 || h > n)
    throw std::invalid_argument(std::string(who) + ": h out of range [1, n]");
}

}  // namespace detail

// Sum of the h smallest entries. Summation follows the sorted order, so the
// result does not depend on the input permutation even with ties.
inline double trimmed_sum(const VectorXd& values, int h) {
  detail::check_h(values.size(), h, "trimmed_sum");
  const std::vector<int> order = detail::value_order(values);
  double sum = 0.0;
  for (int i = 0; i < h; ++i) sum += values[order[i]];
  return sum;
}

inline IndexSet h_smallest_indices(const VectorXd& values, int h) {
  detail::check_h(values.size(), h, "h_smallest_indices");
  const std::vector<int> order = detail::value_order(values);
  std::vector<int> idx(order.begin(), order.begin() + h);
  std::sort(idx.begin(), idx.end());
  IndexSet out;
  out.indices = std::move(idx);
  return out;
}

struct StandardizedSubset {
  MatrixXd X;  // |subset| x p, constant columns zeroed
  VectorXd y;  // centered response on the subset
  StandardizationStats stats;
};

// Center all variables and scale the predictors to unit sample standard
// deviation (divisor |subset| - 1) over the subset. The response is centered
// but not scaled. Constant columns are flagged and zeroed rather than
// rejected, since small subsets of sparse designs routinely contain them.
inline StandardizedSubset subset_standardize(const Dataset& data, const IndexSet& subset) {
  const int h = subset.size();
  if (h < 2) throw std::invalid_argument("subset_standardize: need |subset| >= 2");
  const int p = data.p();

  StandardizedSubset out;
  out.X.resize(h, p);
  out.y.resize(h);
  for (int i = 0; i < h; ++i) {
    out.X.row(i) = data.X.row(subset.indices[i]);
    out.y[i] = data.y[subset.indices[i]];
  }

  out.stats.centers.resize(p + 1);
  out.stats.scales.resize(p);
  out.stats.constant.assign(p, 0);

  const double y_mean = out.y.mean();
  out.y.array() -= y_mean;
  out.stats.centers[p] = y_mean;

  for (int j = 0; j < p; ++j) {
    const double mean = out.X.col(j).mean();
    out.X.col(j).array() -= mean;
    out.stats.centers[j] = mean;
    const double ss = out.X.col(j).squaredNorm();
    const double sd = std::sqrt(ss / (h - 1));
    const double col_mag = out.X.col(j).cwiseAbs().maxCoeff();
    if (sd <= 1e-12 * (1.0 + std::abs(mean)) || col_mag == 0.0) {
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

// Map a fit obtained on subset-standardized data back to original units.
// Slopes that are exactly zero stay exactly zero.
inline Coefficients destandardize(const VectorXd& std_slopes, const StandardizationStats& stats) {
  const int p = static_cast<int>(stats.scales.size());
  Coefficients coef = Coefficients::zero(p);
  double dot = 0.0;
  for (int j = 0; j < p; ++j) {
    if (stats.constant[j] || std_slopes[j] == 0.0) continue;
    coef.slopes[j] = std_slopes[j] / stats.scales[j];
    dot += coef.slopes[j] * stats.centers[j];
  }
  coef.intercept = stats.response_center() - dot;
  return coef;
}

}  // namespace sparselts
