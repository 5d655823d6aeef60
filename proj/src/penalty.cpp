#include "pgee/penalty.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pgee {

std::string_view to_string(PenaltyFamily family) {
  switch (family) {
    case PenaltyFamily::none:
      return "none";
    case PenaltyFamily::lasso:
      return "lasso";
    case PenaltyFamily::ridge:
      return "ridge";
    case PenaltyFamily::en:
      return "en";
    case PenaltyFamily::scad:
      return "scad";
    case PenaltyFamily::scad_l2:
      return "scad_l2";
  }
  return "none";
}

PenaltyFamily penalty_family_from_string(std::string_view name) {
  if (name == "none" || name == "gee") return PenaltyFamily::none;
  if (name == "lasso") return PenaltyFamily::lasso;
  if (name == "ridge") return PenaltyFamily::ridge;
  if (name == "en" || name == "elastic_net") return PenaltyFamily::en;
  if (name == "scad") return PenaltyFamily::scad;
  if (name == "scad_l2") return PenaltyFamily::scad_l2;
  throw std::invalid_argument("unknown penalty family '" + std::string(name) + "'");
}

void PenaltySpec::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    throw std::invalid_argument("penalty tuning parameters must be finite and non-negative");
  }
  switch (family) {
    case PenaltyFamily::none:
      if (lambda1 != 0.0 || lambda2 != 0.0) {
        throw std::invalid_argument("penalty 'none' takes no tuning parameters");
      }
      break;
    case PenaltyFamily::lasso:
    case PenaltyFamily::scad:
      if (lambda2 != 0.0) {
        throw std::invalid_argument(std::string(to_string(family)) + " requires lambda2 = 0");
      }
      break;
    case PenaltyFamily::ridge:
      if (lambda1 != 0.0) throw std::invalid_argument("ridge requires lambda1 = 0");
      break;
    case PenaltyFamily::en:
    case PenaltyFamily::scad_l2:
      break;
  }
  if (uses_scad() && !(a > 2.0)) throw std::invalid_argument("SCAD shape a must exceed 2");
}

bool alpha_is_fixed(PenaltyFamily family) {
  return family != PenaltyFamily::en && family != PenaltyFamily::scad_l2;
}

double fixed_alpha(PenaltyFamily family) { return family == PenaltyFamily::ridge ? 0.0 : 1.0; }

PenaltySpec PenaltySpec::from_lambda_alpha(PenaltyFamily family, double lambda, double alpha,
                                           double a) {
  if (family == PenaltyFamily::none) return PenaltySpec{};
  const auto [l1, l2] = reparametrize(lambda, alpha);
  PenaltySpec spec{family, l1, l2, a};
  spec.validate();
  return spec;
}

std::pair<double, double> reparametrize(double lambda, double alpha) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and non-negative");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  return {lambda * alpha, lambda * (1.0 - alpha)};
}

namespace {

// SCAD with threshold lambda and shape a, in closed form.
double scad_value(double lambda, double a, double theta) {
  if (theta <= lambda) return lambda * theta;
  if (theta <= a * lambda) {
    return (2.0 * a * lambda * theta - theta * theta - lambda * lambda) / (2.0 * (a - 1.0));
  }
  return lambda * lambda * (a + 1.0) / 2.0;
}

double scad_slope(double lambda, double a, double theta) {
  if (theta <= lambda) return lambda;
  const double rest = a * lambda - theta;
  return rest > 0.0 ? rest / (a - 1.0) : 0.0;
}

double sparse_value(const PenaltySpec& spec, double theta) {
  if (spec.lambda1 == 0.0) return 0.0;
  return spec.uses_scad() ? scad_value(spec.lambda1, spec.a, theta) : spec.lambda1 * theta;
}

double sparse_slope(const PenaltySpec& spec, double theta) {
  if (spec.lambda1 == 0.0) return 0.0;
  return spec.uses_scad() ? scad_slope(spec.lambda1, spec.a, theta) : spec.lambda1;
}

}  // namespace

double penalty_value(const PenaltySpec& spec, double theta) {
  theta = std::abs(theta);
  return sparse_value(spec, theta) + spec.lambda2 * theta * theta;
}

double penalty_value(const PenaltySpec& spec, const Eigen::VectorXd& beta) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) total += penalty_value(spec, beta(j));
  return total;
}

double penalty_derivative(const PenaltySpec& spec, double theta) {
  if (theta < 0.0) throw std::domain_error("penalty derivative needs a non-negative magnitude");
  return sparse_slope(spec, theta) + 2.0 * spec.lambda2 * theta;
}

LqaWeights lqa_weights(const PenaltySpec& spec, const Eigen::VectorXd& beta_t,
                       const std::vector<bool>& masked) {
  const Eigen::Index p = beta_t.size();
  if (!masked.empty() && static_cast<Eigen::Index>(masked.size()) != p) {
    throw std::invalid_argument("mask length does not match coefficient length");
  }
  LqaWeights w{Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!masked.empty() && masked[static_cast<std::size_t>(j)]) continue;
    const double theta = std::abs(beta_t(j));
    if (theta == 0.0) {
      if (spec.lambda1 > 0.0) {
        throw std::domain_error("coefficient " + std::to_string(j) +
                                " is zero but not masked; remove it before the LQA step");
      }
      w.sigma(j) = 2.0 * spec.lambda2;
    } else {
      w.sigma(j) = penalty_derivative(spec, theta) / theta;
    }
    w.u(j) = w.sigma(j) * beta_t(j);
  }
  return w;
}

bool convexity_check(const PenaltySpec& spec) {
  switch (spec.family) {
    case PenaltyFamily::en:
    case PenaltyFamily::ridge:
      return spec.lambda2 > 0.0;
    case PenaltyFamily::scad_l2:
      return spec.lambda2 > 1.0 / (2.0 * (spec.a - 1.0));
    case PenaltyFamily::none:
    case PenaltyFamily::lasso:
    case PenaltyFamily::scad:
      return false;
  }
  return false;
}

}  // namespace pgee
