#pragma once

#include <Eigen/Dense>

#include <string_view>
#include <utility>
#include <vector>

namespace pgee {

enum class PenaltyFamily { none, lasso, ridge, en, scad, scad_l2 };

std::string_view to_string(PenaltyFamily family);
PenaltyFamily penalty_family_from_string(std::string_view name);

/// lambda1 * P_L1(beta) + lambda2 * sum beta_j^2, where P_L1 is the L1 norm
/// (lasso, en) or the SCAD penalty with shape `a` (scad, scad_l2).
struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::none;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double a = 3.7;

  /// Throws std::invalid_argument if the tuning parameters do not fit the family.
  void validate() const;

  bool uses_scad() const {
    return family == PenaltyFamily::scad || family == PenaltyFamily::scad_l2;
  }
  bool has_sparse_part() const { return lambda1 > 0.0; }

  /// Builds a spec from the (lambda, alpha) parametrization.
  static PenaltySpec from_lambda_alpha(PenaltyFamily family, double lambda, double alpha,
                                       double a = 3.7);
};

/// Families that require alpha = 1 (sparse only) or alpha = 0 (ridge only).
bool alpha_is_fixed(PenaltyFamily family);
double fixed_alpha(PenaltyFamily family);

/// Penalty contribution of a single coefficient magnitude.
double penalty_value(const PenaltySpec& spec, double theta);
double penalty_value(const PenaltySpec& spec, const Eigen::VectorXd& beta);

/// d P / d theta at theta >= 0; throws std::domain_error for theta < 0.
double penalty_derivative(const PenaltySpec& spec, double theta);

/// Diagonal of the local quadratic weight matrix and U = Sigma * beta_t.
struct LqaWeights {
  Eigen::VectorXd sigma;
  Eigen::VectorXd u;
};

/// sigma_j = P'(|beta_j|) / |beta_j| on unmasked coordinates, 0 on masked
/// ones.  An unmasked exact zero is only allowed when the weight has a
/// finite limit there (no sparse part); otherwise std::domain_error.
LqaWeights lqa_weights(const PenaltySpec& spec, const Eigen::VectorXd& beta_t,
                       const std::vector<bool>& masked);

/// (lambda, alpha) -> (lambda1, lambda2) = (lambda alpha, lambda (1 - alpha)).
std::pair<double, double> reparametrize(double lambda, double alpha);

/// True iff the complete penalty is strictly convex.
bool convexity_check(const PenaltySpec& spec);

}  // namespace pgee
