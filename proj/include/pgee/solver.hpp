#pragma once

#include "pgee/correlation.hpp"
#include "pgee/data.hpp"
#include "pgee/penalty.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace pgee {

enum class Link { identity, logit };

std::string_view to_string(Link link);

struct ModelSpec {
  Link link = Link::identity;
  VarianceModel variance{};
  CorrelationSpec correlation{};

  /// identity pairs with gaussian, logit with binomial.
  void validate() const;

  static ModelSpec gaussian(CorrelationSpec corr = {}) {
    return ModelSpec{Link::identity, VarianceModel{Family::gaussian, 1.0}, corr};
  }
  static ModelSpec binomial(CorrelationSpec corr = {}) {
    return ModelSpec{Link::logit, VarianceModel{Family::binomial, 1.0}, corr};
  }
};

enum class InitKind { ridge_warm_start, zeros, user };

struct SolverControl {
  double zero_threshold = 1e-4;
  double convergence_c = 1e-6;
  int max_iterations = 200;
  InitKind init = InitKind::ridge_warm_start;
  VectorXd init_vector;  ///< used when init == InitKind::user
  double ridge_jitter = 1e-8;
  /// Record Q^P per iteration (gaussian only).  Costs one extra solve per fit.
  bool record_objective = true;
};

struct PgeeFit {
  VectorXd beta_naive;
  VectorXd beta_nonnaive;
  std::vector<Index> active_set;
  int iterations = 0;
  bool converged = false;
  double threshold_used = 0.0;
  std::vector<double> objective_trace;
  /// Number of unmasked coordinates at the start of each iteration.
  std::vector<Index> active_count_trace;
  PenaltySpec penalty;
  /// Model as fitted; the correlation alpha holds the final moment estimate.
  ModelSpec model;
  /// Moment estimate of the Pearson dispersion at the solution.
  double dispersion_estimate = 1.0;
  /// Effective subject / observation counts used by the fit.
  double n_subjects = 0.0;
  double n_observations = 0.0;
  std::vector<std::string> warnings;
};

struct MeanDerivatives {
  VectorXd mu;
  MatrixXd D;
};

/// mu_i = g^{-1}(X_i beta) and D_i = d mu_i / d beta.
MeanDerivatives mean_and_derivatives(const VectorXd& beta, const Eigen::Ref<const MatrixXd>& X_i,
                                     Link link);

struct GeeScore {
  VectorXd S;  ///< sum_i D_i' V_i^{-1} (y_i - mu_i)
  MatrixXd K;  ///< (1/n) sum_i D_i' V_i^{-1} D_i
};

/// Score and sensitivity at beta using the model's correlation as given (no
/// re-estimation of alpha).
GeeScore gee_score(const VectorXd& beta, const LongitudinalDataset& data, const ModelSpec& model);

/// Unpenalized GEE by Fisher scoring.  Throws DataError when the design is
/// rank deficient; a non-converged fit is returned with converged = false.
PgeeFit fit_gee(const LongitudinalDataset& data, const ModelSpec& model,
                const SolverControl& control = {});

/// Penalized GEE via the local quadratic approximation: small coefficients
/// are removed for good, the penalty gradient is linearised around the
/// current iterate, and a Newton step is taken on the remaining coordinates
/// until successive iterates differ by less than `control.convergence_c`.
PgeeFit fit_pgee(const LongitudinalDataset& data, const ModelSpec& model,
                 const PenaltySpec& penalty, const SolverControl& control = {});

/// Q^P(beta) = (1/2n) S' K^{-1} S + N P(beta) for the gaussian model.
double pgls_objective(const VectorXd& beta, const LongitudinalDataset& data,
                      const ModelSpec& model, const PenaltySpec& penalty);

/// Linear predictor mapped through the inverse link.
VectorXd predict_mean(const Eigen::Ref<const MatrixXd>& X, const VectorXd& beta, Link link);

}  // namespace pgee
