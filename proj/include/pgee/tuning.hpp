#pragma once

#include "pgee/solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pgee {

/// Candidate (lambda, alpha) values.  Lambdas strictly descending and
/// positive, alphas strictly increasing inside [0, 1].
struct TuningGrid {
  std::vector<double> lambdas;
  std::vector<double> alphas;

  void validate() const;
};

/// {k / 14 : k = 0..14}.
std::vector<double> default_alphas();

/// Alphas meaningful for a family: {1} for lasso/scad, {0} for ridge, the
/// supplied list for en/scad_l2.
std::vector<double> family_alphas(PenaltyFamily family, const std::vector<double>& alphas);

/// Smallest lambda that zeros every coefficient under the L1 part at the
/// given alpha: ||S(0)||_inf / (N max(alpha, 0.01)).
double lambda_max(const LongitudinalDataset& data, const ModelSpec& model, double alpha);

/// `count` log-spaced values from lambda_max down to lambda_max * ratio.
std::vector<double> log_lambda_sequence(double lambda_max, std::size_t count, double ratio = 1e-3);

/// Default grid for a family: lambda_max taken at the smallest alpha of the
/// family's alpha list, `n_lambda` log-spaced points over three decades.
TuningGrid default_grid(const LongitudinalDataset& data, const ModelSpec& model,
                        PenaltyFamily family, std::size_t n_lambda = 30,
                        const std::vector<double>& alphas = default_alphas());

struct CvPoint {
  double lambda = 0.0;
  double alpha = 0.0;
  double pl_cv = 0.0;
  double se_cv = 0.0;
  int n_folds = 0;
  bool valid = true;
  std::string message;
  std::vector<double> subject_losses;
};

struct CvSurface {
  PenaltyFamily family = PenaltyFamily::none;
  std::vector<CvPoint> points;
  std::optional<std::size_t> best;
  std::vector<std::size_t> one_se_set;
};

/// Leave-one-subject-out cross-validation over the grid.  Each fold is refit
/// without one subject; the subject's loss is
/// (y_i - yhat_i)' V_i^{-1} (y_i - yhat_i) / T_i with the non-naive
/// coefficients and the training fold's working covariance.  Results do
/// not depend on the thread count.
CvSurface loso_cv(const LongitudinalDataset& data, const ModelSpec& model, PenaltyFamily family,
                  const TuningGrid& grid, const SolverControl& control = {},
                  unsigned threads = 1);

enum class SelectionRule { min, one_se };

struct TuningChoice {
  double lambda = 0.0;
  double alpha = 0.0;
  std::size_t index = 0;
};

TuningChoice select_tuning(const CvSurface& surface, SelectionRule rule);

/// trace[(H + N Sigma(beta))^{-1} H] over the active coordinates.
double effective_parameters(const PgeeFit& fit, const LongitudinalDataset& data);

struct QgcvParts {
  double wdev = 0.0;
  double n_df = 0.0;
  double p_eff = 0.0;
  double value = 0.0;
};

/// Weighted deviance with a model-complexity correction.
QgcvParts qgcv_parts(const PgeeFit& fit, const LongitudinalDataset& data);
double qgcv(const PgeeFit& fit, const LongitudinalDataset& data);

struct PathResult {
  PenaltyFamily family = PenaltyFamily::none;
  double alpha = 0.0;
  std::vector<double> lambdas;
  MatrixXd coefficients;  ///< p x |lambdas|, non-naive, standardized scale
  std::vector<bool> valid;
  std::vector<std::string> messages;
};

/// Sequential fits along a descending lambda sequence, each warm-started
/// from the previous solution (dropped coordinates restart from the ridge
/// start so they can re-enter at smaller lambda).
PathResult penalization_path(const LongitudinalDataset& data, const ModelSpec& model,
                             PenaltyFamily family, double alpha,
                             const std::vector<double>& lambdas, const SolverControl& control = {});

}  // namespace pgee
