#pragma once

#include "pgee/data.hpp"

#include <span>
#include <string>
#include <string_view>

namespace pgee {

enum class CorrelationKind { independence, exchangeable, ar1 };

/// Working correlation W(alpha).  For exchangeable and ar1, `alpha` is the
/// starting value and is re-estimated by moments during a fit unless
/// `fixed` is set.
struct CorrelationSpec {
  CorrelationKind kind = CorrelationKind::independence;
  double alpha = 0.0;
  bool fixed = false;
};

enum class Family { gaussian, binomial };

/// Var(Y_it | X_it) = dispersion for gaussian, mu (1 - mu) for binomial.
struct VarianceModel {
  Family family = Family::gaussian;
  double dispersion = 1.0;

  double variance(double mu) const;
};

std::string_view to_string(CorrelationKind kind);
CorrelationKind correlation_kind_from_string(std::string_view name);
std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

/// T x T working correlation.  Throws std::invalid_argument when alpha makes
/// the matrix indefinite for this cluster size.
MatrixXd build_correlation(const CorrelationSpec& spec, Index T);

/// V = U^{1/2} W U^{1/2} with U = diag(u).
MatrixXd working_covariance(const VectorXd& u, const MatrixXd& W);

/// Moment estimator of the correlation parameter from per-subject Pearson
/// residual blocks: mean within-subject cross product (all pairs for
/// exchangeable, lag-1 pairs for ar1) divided by the dispersion, clamped to
/// (-0.99, 0.99).  Throws std::domain_error if no subject has T_i >= 2.
double estimate_alpha(std::span<const VectorXd> residuals, CorrelationKind kind,
                      double dispersion = 1.0);

/// Weighted variant used by resampling and cross-validation; weight w_i is
/// the multiplicity of subject i (0 drops it).
double estimate_alpha(std::span<const VectorXd> residuals, std::span<const double> weights,
                      CorrelationKind kind, double dispersion);

/// Mean squared Pearson residual with N - p degrees of freedom.
double estimate_dispersion(std::span<const VectorXd> residuals, std::span<const double> weights,
                           Index num_params);

inline constexpr double kAlphaClamp = 0.99;

}  // namespace pgee
