#pragma once

#include "sparselts/core.hpp"
#include "sparselts/rng.hpp"

#include <vector>

namespace sparselts::testing {

// Random regression data y = X beta + sigma * noise with standard normal X.
inline Dataset make_regression(Rng& rng, int n, int p, const VectorXd& beta, double sigma,
                               VectorXd* signal_out = nullptr) {
  MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  VectorXd signal = X * beta;
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = signal[i] + sigma * rng.normal();
  if (signal_out) *signal_out = signal;
  return Dataset(std::move(X), std::move(y));
}

inline VectorXd sparse_beta(int p, const std::vector<std::pair<int, double>>& entries) {
  VectorXd beta = VectorXd::Zero(p);
  for (const auto& [index, value] : entries) beta[index] = value;
  return beta;
}

// Center every column of X and y, then rescale each to unit Euclidean norm.
// On data in this form the boundary estimate (2/n) max |Cor| is exactly the
// penalty that zeroes all slopes.
inline Dataset unit_norm_standardize(const Dataset& data) {
  MatrixXd X = data.X;
  VectorXd y = data.y;
  y.array() -= y.mean();
  y /= y.norm();
  for (int j = 0; j < data.p(); ++j) {
    X.col(j).array() -= X.col(j).mean();
    X.col(j) /= X.col(j).norm();
  }
  return Dataset(std::move(X), std::move(y));
}

}  // namespace sparselts::testing
