#include "pgee/tuning.hpp"

#include "fit_engine.hpp"
#include "parallel.hpp"
#include "pgee/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pgee {

void TuningGrid::validate() const {
  if (lambdas.empty() || alphas.empty()) throw std::invalid_argument("tuning grid is empty");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0) || !std::isfinite(lambdas[k])) {
      throw std::invalid_argument("grid lambdas must be positive and finite");
    }
    if (k > 0 && !(lambdas[k] < lambdas[k - 1])) {
      throw std::invalid_argument("grid lambdas must be strictly descending");
    }
  }
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (!(alphas[k] >= 0.0 && alphas[k] <= 1.0)) {
      throw std::invalid_argument("grid alphas must lie in [0, 1]");
    }
    if (k > 0 && !(alphas[k] > alphas[k - 1])) {
      throw std::invalid_argument("grid alphas must be strictly increasing");
    }
  }
}

std::vector<double> default_alphas() {
  std::vector<double> a;
  for (int k = 0; k <= 14; ++k) a.push_back(k / 14.0);
  return a;
}

std::vector<double> family_alphas(PenaltyFamily family, const std::vector<double>& alphas) {
  if (family == PenaltyFamily::none) return {0.0};
  if (alpha_is_fixed(family)) return {fixed_alpha(family)};
  return alphas;
}

double lambda_max(const LongitudinalDataset& data, const ModelSpec& model, double alpha) {
  ModelSpec m = model;
  m.correlation = CorrelationSpec{};
  const GeeScore sc = gee_score(VectorXd::Zero(data.num_covariates()), data, m);
  const double N = static_cast<double>(data.num_observations());
  return sc.S.cwiseAbs().maxCoeff() / (N * std::max(alpha, 0.01));
}

std::vector<double> log_lambda_sequence(double lmax, std::size_t count, double ratio) {
  if (!(lmax > 0.0) || count == 0 || !(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("invalid lambda sequence request");
  }
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lmax;
    return out;
  }
  const double lo = std::log(lmax * ratio);
  const double hi = std::log(lmax);
  for (std::size_t k = 0; k < count; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(count - 1);
    out[k] = std::exp(hi + f * (lo - hi));
  }
  return out;
}

TuningGrid default_grid(const LongitudinalDataset& data, const ModelSpec& model,
                        PenaltyFamily family, std::size_t n_lambda,
                        const std::vector<double>& alphas) {
  TuningGrid grid;
  grid.alphas = family_alphas(family, alphas);
  const double smallest = *std::min_element(grid.alphas.begin(), grid.alphas.end());
  grid.lambdas = log_lambda_sequence(lambda_max(data, model, smallest), n_lambda);
  return grid;
}

namespace {

struct FoldOutcome {
  double loss = 0.0;
  bool ok = false;
  std::string message;
};

double binomial_deviance_residual(double y, double mu) {
  auto xlogx = [](double a, double b) { return a > 0.0 ? a * std::log(a / b) : 0.0; };
  const double dev = 2.0 * (xlogx(y, mu) + xlogx(1.0 - y, 1.0 - mu));
  const double r = std::sqrt(std::max(dev, 0.0));
  return y >= mu ? r : -r;
}

// Binary folds use deviance residuals under the working correlation; Pearson
// residuals blow up on confident misclassifications and favour the null model.
double subject_loss(const LongitudinalDataset& data, const PgeeFit& fit, Index i) {
  const auto c = data.cluster(i);
  const VectorXd mu = predict_mean(c.X, fit.beta_nonnaive, fit.model.link);
  if (fit.model.variance.family == Family::binomial) {
    VectorXd r(c.size);
    for (Index t = 0; t < c.size; ++t) r(t) = binomial_deviance_residual(c.y(t), mu(t));
    const MatrixXd R = detail::safe_correlation(fit.model.correlation, c.size, data.max_cluster_size());
    Eigen::LLT<MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw NumericalError("singular working correlation in CV loss");
    return r.dot(llt.solve(r)) / static_cast<double>(c.size);
  }
  const VectorXd r = c.y - mu;
  const MatrixXd V = detail::subject_covariance(fit.model, mu, data.max_cluster_size());
  Eigen::LLT<MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) throw NumericalError("singular working covariance in CV loss");
  return r.dot(llt.solve(r)) / static_cast<double>(c.size);
}

}  // namespace

CvSurface loso_cv(const LongitudinalDataset& data, const ModelSpec& model, PenaltyFamily family,
                  const TuningGrid& grid, const SolverControl& control, unsigned threads) {
  model.validate();
  const Index n = data.num_subjects();
  if (n < 2) throw std::invalid_argument("leave-one-subject-out CV needs at least two subjects");
  TuningGrid g = grid;
  g.alphas = family_alphas(family, grid.alphas);
  if (family == PenaltyFamily::none) g.lambdas = {1.0};
  g.validate();

  CvSurface surface;
  surface.family = family;
  for (double a : g.alphas) {
    for (double l : g.lambdas) {
      CvPoint pt;
      pt.lambda = family == PenaltyFamily::none ? 0.0 : l;
      pt.alpha = a;
      surface.points.push_back(pt);
    }
  }

  std::shared_ptr<const detail::GaussianBlocks> blocks;
  if (detail::gaussian_blocks_apply(model)) blocks = detail::make_gaussian_blocks(data, model);
  SolverControl ctl = control;
  ctl.record_objective = false;

  const std::size_t n_points = surface.points.size();
  const auto n_folds = static_cast<std::size_t>(n);
  std::vector<FoldOutcome> outcomes(n_points * n_folds);
  detail::parallel_for(outcomes.size(), threads, [&](std::size_t task) {
    const std::size_t pt_index = task / n_folds;
    const auto fold = static_cast<Index>(task % n_folds);
    const CvPoint& pt = surface.points[pt_index];
    FoldOutcome& out = outcomes[task];
    try {
      const PenaltySpec pen = PenaltySpec::from_lambda_alpha(family, pt.lambda, pt.alpha);
      std::vector<double> weights(n_folds, 1.0);
      weights[static_cast<std::size_t>(fold)] = 0.0;
      const PgeeFit fit =
          detail::fit_weighted(detail::FitRequest{data, model, weights, blocks.get()}, pen, ctl);
      if (!fit.converged) {
        out.message = "fold " + std::to_string(fold) + " did not converge";
        return;
      }
      out.loss = subject_loss(data, fit, fold);
      out.ok = std::isfinite(out.loss);
      if (!out.ok) out.message = "fold " + std::to_string(fold) + " produced a non-finite loss";
    } catch (const std::exception& e) {
      out.message = "fold " + std::to_string(fold) + ": " + e.what();
    }
  });

  for (std::size_t k = 0; k < n_points; ++k) {
    CvPoint& pt = surface.points[k];
    pt.subject_losses.resize(n_folds);
    double sum = 0.0;
    for (std::size_t f = 0; f < n_folds; ++f) {
      const FoldOutcome& o = outcomes[k * n_folds + f];
      if (!o.ok) {
        pt.valid = false;
        if (pt.message.empty()) pt.message = o.message;
      }
      pt.subject_losses[f] = o.loss;
      sum += o.loss;
    }
    pt.n_folds = static_cast<int>(n_folds);
    if (!pt.valid) {
      pt.pl_cv = std::numeric_limits<double>::quiet_NaN();
      pt.se_cv = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    pt.pl_cv = sum;
    const double mean = sum / static_cast<double>(n_folds);
    double ss = 0.0;
    for (double l : pt.subject_losses) ss += (l - mean) * (l - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n_folds - 1));
    pt.se_cv = sd * std::sqrt(static_cast<double>(n_folds));
  }

  bool any_valid = std::any_of(surface.points.begin(), surface.points.end(),
                               [](const CvPoint& p) { return p.valid; });
  if (any_valid) {
    const TuningChoice best = select_tuning(surface, SelectionRule::min);
    surface.best = best.index;
    const CvPoint& b = surface.points[best.index];
    const double limit = b.pl_cv + b.se_cv;
    for (std::size_t k = 0; k < surface.points.size(); ++k) {
      if (surface.points[k].valid && surface.points[k].pl_cv <= limit) {
        surface.one_se_set.push_back(k);
      }
    }
  }
  return surface;
}

namespace {

// Larger lambda first, then larger alpha: the more parsimonious point.
bool more_parsimonious(const CvPoint& a, const CvPoint& b) {
  if (a.lambda != b.lambda) return a.lambda > b.lambda;
  return a.alpha > b.alpha;
}

}  // namespace

TuningChoice select_tuning(const CvSurface& surface, SelectionRule rule) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < surface.points.size(); ++k) {
    const CvPoint& p = surface.points[k];
    if (!p.valid) continue;
    if (!best) {
      best = k;
      continue;
    }
    const CvPoint& b = surface.points[*best];
    if (p.pl_cv < b.pl_cv || (p.pl_cv == b.pl_cv && more_parsimonious(p, b))) best = k;
  }
  if (!best) throw std::invalid_argument("CV surface has no valid grid point");
  std::size_t chosen = *best;
  if (rule == SelectionRule::one_se) {
    const CvPoint& b = surface.points[*best];
    const double limit = b.pl_cv + b.se_cv;
    for (std::size_t k = 0; k < surface.points.size(); ++k) {
      const CvPoint& p = surface.points[k];
      if (p.valid && p.pl_cv <= limit && more_parsimonious(p, surface.points[chosen])) chosen = k;
    }
  }
  const CvPoint& c = surface.points[chosen];
  return TuningChoice{c.lambda, c.alpha, chosen};
}

double effective_parameters(const PgeeFit& fit, const LongitudinalDataset& data) {
  if (fit.active_set.empty()) return 0.0;
  ModelSpec m = fit.model;
  m.correlation.fixed = true;
  const GeeScore sc = gee_score(fit.beta_naive, data, m);
  const MatrixXd H = sc.K * static_cast<double>(data.num_subjects());
  std::vector<bool> masked(static_cast<std::size_t>(fit.beta_naive.size()), true);
  for (Index j : fit.active_set) masked[static_cast<std::size_t>(j)] = false;
  const LqaWeights w = lqa_weights(fit.penalty, fit.beta_naive, masked);
  const auto na = static_cast<Index>(fit.active_set.size());
  const double N = static_cast<double>(data.num_observations());
  MatrixXd HA(na, na);
  MatrixXd M(na, na);
  for (Index a = 0; a < na; ++a) {
    for (Index b = 0; b < na; ++b) HA(a, b) = H(fit.active_set[a], fit.active_set[b]);
  }
  M = HA;
  for (Index a = 0; a < na; ++a) M(a, a) += N * w.sigma(fit.active_set[a]);
  Eigen::FullPivLU<MatrixXd> lu(M);
  if (!lu.isInvertible()) throw NumericalError("H + N Sigma is singular");
  return lu.solve(HA).trace();
}

QgcvParts qgcv_parts(const PgeeFit& fit, const LongitudinalDataset& data) {
  QgcvParts out;
  const Index T_max = data.max_cluster_size();
  for (Index i = 0; i < data.num_subjects(); ++i) {
    const auto c = data.cluster(i);
    const VectorXd mu = predict_mean(c.X, fit.beta_nonnaive, fit.model.link);
    VectorXd r(c.size);
    for (Index t = 0; t < c.size; ++t) {
      r(t) = fit.model.variance.family == Family::gaussian ? c.y(t) - mu(t)
                                                           : binomial_deviance_residual(c.y(t), mu(t));
    }
    const MatrixXd R = detail::safe_correlation(fit.model.correlation, c.size, T_max);
    out.wdev += r.dot(R.llt().solve(r));
    out.n_df += static_cast<double>(c.size * c.size) / R.sum();
  }
  out.p_eff = effective_parameters(fit, data);
  if (out.p_eff >= out.n_df) throw NumericalError("model too complex for QGCV correction");
  out.value = out.wdev / (static_cast<double>(data.num_subjects()) * (1.0 - out.p_eff / out.n_df));
  return out;
}

double qgcv(const PgeeFit& fit, const LongitudinalDataset& data) { return qgcv_parts(fit, data).value; }

PathResult penalization_path(const LongitudinalDataset& data, const ModelSpec& model,
                             PenaltyFamily family, double alpha,
                             const std::vector<double>& lambdas, const SolverControl& control) {
  for (std::size_t k = 1; k < lambdas.size(); ++k) {
    if (!(lambdas[k] < lambdas[k - 1])) throw std::invalid_argument("lambda sequence must be descending");
  }
  PathResult out;
  out.family = family;
  out.alpha = alpha_is_fixed(family) ? fixed_alpha(family) : alpha;
  out.lambdas = lambdas;
  const Index p = data.num_covariates();
  out.coefficients = MatrixXd::Zero(p, static_cast<Index>(lambdas.size()));
  out.valid.assign(lambdas.size(), false);
  out.messages.assign(lambdas.size(), std::string{});

  std::shared_ptr<const detail::GaussianBlocks> blocks;
  if (detail::gaussian_blocks_apply(model)) blocks = detail::make_gaussian_blocks(data, model);
  const detail::FitRequest req{data, model, {}, blocks.get()};
  std::optional<VectorXd> previous;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    try {
      const PenaltySpec pen = PenaltySpec::from_lambda_alpha(family, lambdas[k], out.alpha);
      SolverControl ctl = control;
      ctl.record_objective = false;
      if (previous) {
        VectorXd start = detail::ridge_warm_start(req, pen, control);
        for (Index j = 0; j < p; ++j) {
          if ((*previous)(j) != 0.0) start(j) = (*previous)(j);
        }
        ctl.init = InitKind::user;
        ctl.init_vector = start;
      }
      const PgeeFit fit = detail::fit_weighted(req, pen, ctl);
      out.coefficients.col(static_cast<Index>(k)) = fit.beta_nonnaive;
      out.valid[k] = fit.converged;
      if (!fit.converged) out.messages[k] = "did not converge";
      previous = fit.beta_naive;
    } catch (const std::exception& e) {
      out.messages[k] = e.what();
    }
  }
  return out;
}

}  // namespace pgee
