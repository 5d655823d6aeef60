#include "pgee/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pgee {

double VarianceModel::variance(double mu) const {
  switch (family) {
    case Family::gaussian:
      return dispersion;
    case Family::binomial:
      return mu * (1.0 - mu);
  }
  return dispersion;
}

std::string_view to_string(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::independence:
      return "independence";
    case CorrelationKind::exchangeable:
      return "exchangeable";
    case CorrelationKind::ar1:
      return "ar1";
  }
  return "independence";
}

CorrelationKind correlation_kind_from_string(std::string_view name) {
  if (name == "independence") return CorrelationKind::independence;
  if (name == "exchangeable") return CorrelationKind::exchangeable;
  if (name == "ar1") return CorrelationKind::ar1;
  throw std::invalid_argument("unknown working correlation '" + std::string(name) + "'");
}

std::string_view to_string(Family family) {
  return family == Family::gaussian ? "gaussian" : "binomial";
}

Family family_from_string(std::string_view name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "binomial") return Family::binomial;
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

MatrixXd build_correlation(const CorrelationSpec& spec, Index T) {
  if (T < 1) throw std::invalid_argument("cluster size must be at least 1");
  const double a = spec.alpha;
  switch (spec.kind) {
    case CorrelationKind::independence:
      return MatrixXd::Identity(T, T);
    case CorrelationKind::exchangeable: {
      if (!(a > -1.0 && a < 1.0) || (T > 1 && !(a > -1.0 / static_cast<double>(T - 1)))) {
        throw std::invalid_argument("exchangeable alpha " + std::to_string(a) +
                                    " outside the positive-definite range for T=" +
                                    std::to_string(T));
      }
      MatrixXd W = MatrixXd::Constant(T, T, a);
      W.diagonal().setOnes();
      return W;
    }
    case CorrelationKind::ar1: {
      if (!(a > -1.0 && a < 1.0)) {
        throw std::invalid_argument("ar1 alpha " + std::to_string(a) + " outside (-1, 1)");
      }
      MatrixXd W(T, T);
      for (Index s = 0; s < T; ++s) {
        for (Index t = 0; t < T; ++t) W(s, t) = std::pow(a, static_cast<double>(std::abs(s - t)));
      }
      return W;
    }
  }
  return MatrixXd::Identity(T, T);
}

MatrixXd working_covariance(const VectorXd& u, const MatrixXd& W) {
  if (W.rows() != W.cols() || W.rows() != u.size()) {
    throw std::invalid_argument("variance vector and correlation matrix dimensions differ");
  }
  if ((u.array() <= 0.0).any() || !u.allFinite()) {
    throw std::invalid_argument("working variances must be strictly positive");
  }
  const VectorXd root = u.array().sqrt();
  MatrixXd V = root.asDiagonal() * W * root.asDiagonal();
  // keep the diagonal exact: sqrt(u) * sqrt(u) can be off by an ulp
  V.diagonal() = u.cwiseProduct(W.diagonal());
  return V;
}

double estimate_alpha(std::span<const VectorXd> residuals, std::span<const double> weights,
                      CorrelationKind kind, double dispersion) {
  if (kind == CorrelationKind::independence) return 0.0;
  if (!(dispersion > 0.0)) throw std::invalid_argument("dispersion must be positive");
  double sum = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    const VectorXd& r = residuals[i];
    const Index T = r.size();
    if (T < 2) continue;
    if (kind == CorrelationKind::exchangeable) {
      const double total = r.sum();
      sum += w * 0.5 * (total * total - r.squaredNorm());
      pairs += w * 0.5 * static_cast<double>(T * (T - 1));
    } else {
      sum += w * r.head(T - 1).dot(r.tail(T - 1));
      pairs += w * static_cast<double>(T - 1);
    }
  }
  if (pairs == 0.0) throw std::domain_error("correlation not estimable: every subject has T_i = 1");
  const double alpha = sum / pairs / dispersion;
  return std::clamp(alpha, -kAlphaClamp, kAlphaClamp);
}

double estimate_alpha(std::span<const VectorXd> residuals, CorrelationKind kind,
                      double dispersion) {
  return estimate_alpha(residuals, {}, kind, dispersion);
}

double estimate_dispersion(std::span<const VectorXd> residuals, std::span<const double> weights,
                           Index num_params) {
  double ss = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    ss += w * residuals[i].squaredNorm();
    count += w * static_cast<double>(residuals[i].size());
  }
  const double dof = count - static_cast<double>(num_params);
  return dof > 0.0 ? ss / dof : ss / std::max(count, 1.0);
}

}  // namespace pgee
