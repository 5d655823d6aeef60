#pragma once

#include "pgee/solver.hpp"
#include "pgee/tuning.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pgee {

/// Y_it = X_it' beta + e_it with X_it ~ N_p(0, sigma) i.i.d. over t and
/// AR(1) unit-variance errors within subject.
struct CrossSectionalConfig {
  Index n = 20;
  Index T = 5;
  VectorXd beta;
  double error_rho = 0.7;
  MatrixXd sigma;

  void validate() const;
  /// beta = (-1,-1,1,1,0.5,0,0,0), corr(X1,X2) = 0.6, corr(X3,X4) = 0.3.
  static CrossSectionalConfig table1();
};

/// How the asymmetric printed 3x3 covariate block is turned into a
/// correlation matrix.
enum class Sigma1Mode { symmetrize, upper, lower };

MatrixXd sigma1_block(Sigma1Mode mode = Sigma1Mode::symmetrize);
/// diag(S1, S1, S1, I_11).
MatrixXd lagged_sigma(Sigma1Mode mode = Sigma1Mode::symmetrize);

/// Y_it = X_it' gamma1 + X_{i,t-1}' gamma2 + b_i + e_it with each covariate
/// a stationary unit-variance AR(1) whose cross-sectional correlation at
/// every t equals `sigma`.
struct LaggedConfig {
  Index n = 20;
  Index T = 5;
  VectorXd gamma1;
  VectorXd gamma2;
  VectorXd rho;
  MatrixXd sigma;
  double subject_effect_sd = 1.0;
  double error_sd = 1.0;

  void validate() const;
  /// Scenario 1 or 2 with n subjects.
  static LaggedConfig scenario(int which, Index n, Sigma1Mode mode = Sigma1Mode::symmetrize);
};

LongitudinalDataset simulate_cross_sectional(const CrossSectionalConfig& cfg, std::uint64_t seed);
LongitudinalDataset simulate_lagged(const LaggedConfig& cfg, std::uint64_t seed);
/// Same covariate process; Y_it ~ Bernoulli(logistic(X_it' g1 + X_{i,t-1}' g2 + b_i)).
LongitudinalDataset simulate_binomial(const LaggedConfig& cfg, std::uint64_t seed);

/// Cross-sectional coefficients implied by the lagged model:
/// beta_j = gamma1_j + rho_j gamma2_j.
VectorXd implied_beta(const VectorXd& gamma1, const VectorXd& gamma2, const VectorXd& rho);

/// Population-average logistic coefficients for the binomial lagged model:
/// the beta* solving E[X (P(Y=1 | X) - logistic(X' beta*))] = 0, which is the
/// target of an independence GEE fit.  P(Y=1 | X_t) integrates the lagged
/// covariates and the subject effect out of the conditional model
/// (Gauss-Hermite); the outer expectation over X ~ N(0, sigma) uses a fixed
/// sample of `draws` points, so the result is deterministic.
VectorXd marginal_logistic_beta(const LaggedConfig& cfg, std::size_t draws = 200000);

/// (beta_hat - beta)' M (beta_hat - beta) with M = E(X X').
double model_error(const VectorXd& beta_hat, const VectorXd& beta_true,
                   const MatrixXd& second_moment);

struct SelectionMetrics {
  std::optional<double> correct_deletion;    ///< absent when beta has no zeros
  std::optional<double> incorrect_deletion;  ///< absent when beta has no nonzeros
};

SelectionMetrics selection_metrics(const VectorXd& beta_hat, const VectorXd& beta_true);

struct BootstrapResult {
  VectorXd se;
  int replicates = 0;
  /// Refits that hit max_iterations; their returned iterates are used.
  int unconverged = 0;
};

/// Cluster bootstrap: subjects resampled with replacement, the model refit
/// at the fixed penalty, SE = sample standard deviation of the non-naive
/// coefficients.  A refit that stops at max_iterations contributes its last
/// iterate and is counted.  Throws NumericalError when more than 20% of
/// refits throw (singular systems).
BootstrapResult cluster_bootstrap(const LongitudinalDataset& data, const ModelSpec& model,
                                  const PenaltySpec& penalty, int replicates, std::uint64_t seed,
                                  const SolverControl& control = {}, unsigned threads = 1);

/// Standard errors only; see cluster_bootstrap.
VectorXd bootstrap_se(const LongitudinalDataset& data, const ModelSpec& model,
                      const PenaltySpec& penalty, int replicates, std::uint64_t seed,
                      const SolverControl& control = {}, unsigned threads = 1);

/// Per-replicate seed derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

enum class DesignKind { cross_sectional, lagged, binomial };

struct StudyDesign {
  std::string name;
  DesignKind kind = DesignKind::cross_sectional;
  CrossSectionalConfig cross;
  LaggedConfig lagged;

  /// Coefficients the fitted cross-sectional model targets: beta for the
  /// cross-sectional design, implied_beta for lagged gaussian designs and
  /// marginal_logistic_beta for binomial ones.
  VectorXd true_beta() const;
  /// E(X X') of the covariates, which is also their correlation matrix.
  MatrixXd second_moment() const;
  ModelSpec model() const;
  LongitudinalDataset simulate(std::uint64_t seed) const;
};

/// table1, scenario1-n20, scenario1-n100, scenario2-n20, scenario2-n100,
/// scenario1-binomial, scenario2-binomial.  Lagged presets also accept
/// "scenarioK-n<number>" for other sample sizes.
StudyDesign design_preset(std::string_view name, Sigma1Mode mode = Sigma1Mode::symmetrize);
std::vector<std::string> design_preset_names();

struct StudyControl {
  std::size_t n_lambda = 10;
  std::vector<double> alphas = {4.0 / 14, 7.0 / 14, 9.0 / 14, 11.0 / 14, 1.0};
  SolverControl solver{};
  SelectionRule rule = SelectionRule::min;
  unsigned threads = 1;
};

struct ReplicateResult {
  std::size_t replicate = 0;
  PenaltyFamily family = PenaltyFamily::none;
  bool ok = false;
  std::string message;
  double model_error = 0.0;
  std::optional<double> correct_deletion;
  std::optional<double> incorrect_deletion;
  std::optional<double> relative_bias;
  double lambda = 0.0;
  double alpha = 0.0;
  VectorXd beta_hat;  ///< original scale, non-naive
};

struct FamilySummary {
  PenaltyFamily family = PenaltyFamily::none;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double me_mean = 0.0;
  std::optional<double> me_se;
  double me_median = 0.0;
  std::optional<double> cd_mean;
  std::optional<double> id_mean;
  std::optional<double> lambda_median;
  std::optional<double> alpha_median;
  std::optional<double> rel_bias_mean;
};

struct SimReport {
  std::string design;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::vector<FamilySummary> summaries;
  std::vector<ReplicateResult> details;

  const FamilySummary& summary(PenaltyFamily family) const;
  bool incomplete() const;
};

/// Fits every family on `replicates` simulated datasets: standardize, tune
/// by leave-one-subject-out CV on a shared-shape grid, refit at the chosen
/// point and score on the original scale against the true coefficients.
SimReport run_study(const StudyDesign& design, const std::vector<PenaltyFamily>& families,
                    std::size_t replicates, const StudyControl& control, std::uint64_t seed);

}  // namespace pgee
