#pragma once

// Test-only generators and oracles.  Nothing here calls into the solver: the
// oracles use Eigen decompositions directly so they stay independent of the
// LQA/Fisher-scoring code paths they check.

#include "pgee/data.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace pgee::testing {

inline LongitudinalDataset make_dataset(const std::vector<Index>& sizes, const MatrixXd& X,
                                        const VectorXd& y) {
  std::vector<std::string> ids;
  std::vector<double> times;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    ids.push_back("s" + std::to_string(i));
    for (Index t = 0; t < sizes[i]; ++t) times.push_back(static_cast<double>(t + 1));
  }
  return LongitudinalDataset(ids, sizes, times, y, X);
}

/// Gaussian design with n subjects of T rows, i.i.d. N(0,1) covariates,
/// y = X beta + noise * N(0,1).
inline LongitudinalDataset random_gaussian(std::mt19937_64& rng, Index n, Index T, Index p,
                                           const VectorXd& beta, double noise = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd X(n * T, p);
  VectorXd y(n * T);
  for (Index r = 0; r < n * T; ++r) {
    for (Index j = 0; j < p; ++j) X(r, j) = z(rng);
    y(r) = X.row(r).dot(beta) + noise * z(rng);
  }
  return make_dataset(std::vector<Index>(static_cast<std::size_t>(n), T), X, y);
}

inline VectorXd random_beta(std::mt19937_64& rng, Index p) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  VectorXd b(p);
  for (Index j = 0; j < p; ++j) b(j) = u(rng);
  return b;
}

/// Pooled least squares via column-pivoted Householder QR.
inline VectorXd ols(const MatrixXd& X, const VectorXd& y) {
  return X.colPivHouseholderQr().solve(y);
}

/// Columns with pooled mean 0 and X'X = N I (Gram-Schmidt via QR).
inline MatrixXd orthonormal_design(std::mt19937_64& rng, Index N, Index p) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd A(N, p + 1);
  A.col(0).setOnes();
  for (Index r = 0; r < N; ++r) {
    for (Index j = 1; j <= p; ++j) A(r, j) = z(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(A);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(N, p + 1);
  return Q.rightCols(p) * std::sqrt(static_cast<double>(N));
}

}  // namespace pgee::testing
