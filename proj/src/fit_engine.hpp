#pragma once

// Internal fitting entry points shared by the solver, tuning and simulation
// modules.  Subject weights are multiplicities: 0 drops a subject (leave-one-
// subject-out folds), integers > 1 repeat it (cluster bootstrap).

#include "pgee/solver.hpp"

#include <memory>
#include <span>
#include <vector>

namespace pgee::detail {

/// Per-subject X_i' V_i^{-1} X_i and X_i' V_i^{-1} y_i for gaussian models
/// whose working covariance does not depend on beta.
struct GaussianBlocks {
  std::vector<MatrixXd> H;
  std::vector<VectorXd> g;
  MatrixXd H_total;
  VectorXd g_total;
};

bool gaussian_blocks_apply(const ModelSpec& model);

std::shared_ptr<const GaussianBlocks> make_gaussian_blocks(const LongitudinalDataset& data,
                                                           const ModelSpec& model);

struct FitRequest {
  const LongitudinalDataset& data;
  const ModelSpec& model;
  std::span<const double> weights{};      ///< empty means every subject once
  const GaussianBlocks* blocks = nullptr;  ///< optional cache, gaussian fixed-W models only
};

PgeeFit fit_weighted(const FitRequest& req, const PenaltySpec& penalty,
                     const SolverControl& control);

/// Working covariance of subject i given fitted means and correlation alpha.
MatrixXd subject_covariance(const ModelSpec& model, const VectorXd& mu, Index T_max);

/// Builds W for the current alpha, pulling exchangeable alpha back inside the
/// positive-definite range for the largest cluster.
MatrixXd safe_correlation(const CorrelationSpec& spec, Index T, Index T_max);

}  // namespace pgee::detail

namespace pgee::detail {

/// The ridge solution used to initialise LQA (lambda2 floored at 1e-3).
VectorXd ridge_warm_start(const FitRequest& req, const PenaltySpec& penalty,
                          const SolverControl& control);

}  // namespace pgee::detail
