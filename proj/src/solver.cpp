#include "pgee/solver.hpp"

#include "fit_engine.hpp"
#include "pgee/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace pgee {

std::string_view to_string(Link link) { return link == Link::identity ? "identity" : "logit"; }

void ModelSpec::validate() const {
  const bool ok = (link == Link::identity && variance.family == Family::gaussian) ||
                  (link == Link::logit && variance.family == Family::binomial);
  if (!ok) throw std::invalid_argument("link and variance family do not match");
  if (!(variance.dispersion > 0.0)) throw std::invalid_argument("dispersion must be positive");
  if (correlation.kind != CorrelationKind::independence &&
      !(correlation.alpha > -1.0 && correlation.alpha < 1.0)) {
    throw std::invalid_argument("working correlation alpha must lie in (-1, 1)");
  }
}

namespace {

constexpr double kEtaClamp = 35.0;

double inv_logit(double eta) {
  eta = std::clamp(eta, -kEtaClamp, kEtaClamp);
  return 1.0 / (1.0 + std::exp(-eta));
}

}  // namespace

VectorXd predict_mean(const Eigen::Ref<const MatrixXd>& X, const VectorXd& beta, Link link) {
  VectorXd eta = X * beta;
  if (link == Link::logit) eta = eta.unaryExpr([](double e) { return inv_logit(e); });
  return eta;
}

MeanDerivatives mean_and_derivatives(const VectorXd& beta, const Eigen::Ref<const MatrixXd>& X_i,
                                     Link link) {
  if (X_i.cols() != beta.size()) throw std::invalid_argument("coefficient length mismatch");
  MeanDerivatives out;
  out.mu = predict_mean(X_i, beta, link);
  if (link == Link::identity) {
    out.D = X_i;
  } else {
    const VectorXd slope = (out.mu.array() * (1.0 - out.mu.array())).matrix();
    out.D = slope.asDiagonal() * X_i;
  }
  return out;
}

namespace detail {

bool gaussian_blocks_apply(const ModelSpec& model) {
  return model.variance.family == Family::gaussian &&
         (model.correlation.kind == CorrelationKind::independence || model.correlation.fixed);
}

MatrixXd safe_correlation(const CorrelationSpec& spec, Index T, Index T_max) {
  CorrelationSpec s = spec;
  if (s.kind == CorrelationKind::exchangeable && T_max > 1) {
    const double floor = -1.0 / static_cast<double>(T_max - 1) + 1e-3;
    s.alpha = std::max(s.alpha, floor);
  }
  return build_correlation(s, T);
}

MatrixXd subject_covariance(const ModelSpec& model, const VectorXd& mu, Index T_max) {
  VectorXd u(mu.size());
  for (Index t = 0; t < mu.size(); ++t) {
    u(t) = model.variance.family == Family::gaussian ? model.variance.dispersion
                                                     : std::max(mu(t) * (1.0 - mu(t)), 1e-300);
  }
  return working_covariance(u, safe_correlation(model.correlation, mu.size(), T_max));
}

std::shared_ptr<const GaussianBlocks> make_gaussian_blocks(const LongitudinalDataset& data,
                                                           const ModelSpec& model) {
  if (!gaussian_blocks_apply(model)) {
    throw std::invalid_argument("cached cross products need a gaussian fixed-correlation model");
  }
  auto blocks = std::make_shared<GaussianBlocks>();
  const Index p = data.num_covariates();
  const Index T_max = data.max_cluster_size();
  blocks->H_total = MatrixXd::Zero(p, p);
  blocks->g_total = VectorXd::Zero(p);
  std::map<Index, Eigen::LLT<MatrixXd>> factor_by_size;
  const bool identity_w = model.correlation.kind == CorrelationKind::independence;
  const double phi = model.variance.dispersion;
  for (Index i = 0; i < data.num_subjects(); ++i) {
    const auto c = data.cluster(i);
    MatrixXd H;
    VectorXd g;
    if (identity_w) {
      H = c.X.transpose() * c.X / phi;
      g = c.X.transpose() * c.y / phi;
    } else {
      auto it = factor_by_size.find(c.size);
      if (it == factor_by_size.end()) {
        const VectorXd mu = VectorXd::Zero(c.size);
        it = factor_by_size.emplace(c.size, Eigen::LLT<MatrixXd>(subject_covariance(model, mu, T_max)))
                 .first;
      }
      const MatrixXd VinvX = it->second.solve(MatrixXd(c.X));
      H = c.X.transpose() * VinvX;
      g = VinvX.transpose() * c.y;
    }
    blocks->H_total += H;
    blocks->g_total += g;
    blocks->H.push_back(std::move(H));
    blocks->g.push_back(std::move(g));
  }
  return blocks;
}

namespace {

/// Evaluates the unpenalized score S(beta) and H(beta) = sum_i w_i D_i' V_i^{-1} D_i
/// for a (possibly reweighted) set of subjects, re-estimating the working
/// correlation parameter by moments on each call when it is not fixed.
class ScoreEvaluator {
 public:
  explicit ScoreEvaluator(const FitRequest& req)
      : data_(req.data), model_(req.model), weights_(req.weights), T_max_(req.data.max_cluster_size()) {
    if (!weights_.empty() && static_cast<Index>(weights_.size()) != data_.num_subjects()) {
      throw std::invalid_argument("subject weight count does not match subject count");
    }
    for (Index i = 0; i < data_.num_subjects(); ++i) {
      const double w = weight(i);
      if (w < 0.0) throw std::invalid_argument("subject weights must be non-negative");
      n_ += w;
      N_ += w * static_cast<double>(data_.cluster_size(i));
    }
    if (n_ <= 0.0) throw std::invalid_argument("fit has no subjects with positive weight");
    if (gaussian_blocks_apply(model_)) {
      if (req.blocks == nullptr) {
        owned_blocks_ = make_gaussian_blocks(data_, model_);
        blocks_ = owned_blocks_.get();
      } else {
        blocks_ = req.blocks;
      }
      H_fixed_ = blocks_->H_total;
      g_fixed_ = blocks_->g_total;
      for (Index i = 0; i < data_.num_subjects(); ++i) {
        const double w = weight(i);
        if (w != 1.0) {
          H_fixed_ += (w - 1.0) * blocks_->H[static_cast<std::size_t>(i)];
          g_fixed_ += (w - 1.0) * blocks_->g[static_cast<std::size_t>(i)];
        }
      }
    }
  }

  double n() const { return n_; }
  double N() const { return N_; }
  Index p() const { return data_.num_covariates(); }
  const ModelSpec& model() const { return model_; }
  bool constant_information() const { return blocks_ != nullptr; }

  void evaluate(const VectorXd& beta, VectorXd& S, MatrixXd& H) {
    if (blocks_ != nullptr) {
      H = H_fixed_;
      S = g_fixed_ - H_fixed_ * beta;
      return;
    }
    if (model_.correlation.kind == CorrelationKind::independence) {
      evaluate_pooled(beta, S, H);
      return;
    }
    if (!model_.correlation.fixed) update_alpha(beta);
    const Index p = data_.num_covariates();
    S = VectorXd::Zero(p);
    H = MatrixXd::Zero(p, p);
    for (Index i = 0; i < data_.num_subjects(); ++i) {
      const double w = weight(i);
      if (w == 0.0) continue;
      const auto c = data_.cluster(i);
      const MeanDerivatives md = mean_and_derivatives(beta, c.X, model_.link);
      const MatrixXd V = subject_covariance(model_, md.mu, T_max_);
      Eigen::LLT<MatrixXd> llt(V);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("working covariance of subject " + std::to_string(i) + " is singular");
      }
      const MatrixXd VinvD = llt.solve(md.D);
      S.noalias() += w * VinvD.transpose() * (c.y - md.mu);
      H.noalias() += w * md.D.transpose() * VinvD;
    }
  }

  // Independence makes V_i diagonal, so all subjects can be stacked into one
  // weighted least-squares style product.
  void evaluate_pooled(const VectorXd& beta, VectorXd& S, MatrixXd& H) {
    if (row_weights_.size() == 0) {
      row_weights_.resize(data_.num_observations());
      for (Index i = 0; i < data_.num_subjects(); ++i) {
        row_weights_.segment(data_.offset(i), data_.cluster_size(i)).setConstant(weight(i));
      }
    }
    const MatrixXd& X = data_.X();
    const VectorXd mu = predict_mean(X, beta, model_.link);
    VectorXd score_w(mu.size());
    VectorXd info_w(mu.size());
    for (Index r = 0; r < mu.size(); ++r) {
      double slope = 1.0;
      double u = model_.variance.dispersion;
      if (model_.link == Link::logit) slope = mu(r) * (1.0 - mu(r));
      if (model_.variance.family == Family::binomial) u = std::max(mu(r) * (1.0 - mu(r)), 1e-300);
      score_w(r) = row_weights_(r) * slope / u * (data_.y()(r) - mu(r));
      info_w(r) = row_weights_(r) * slope * slope / u;
    }
    S.noalias() = X.transpose() * score_w;
    const MatrixXd Xw = info_w.cwiseSqrt().asDiagonal() * X;
    H = MatrixXd::Zero(X.cols(), X.cols());
    H.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
  }

  std::vector<VectorXd> pearson_residuals(const VectorXd& beta) const {
    std::vector<VectorXd> res;
    res.reserve(static_cast<std::size_t>(data_.num_subjects()));
    for (Index i = 0; i < data_.num_subjects(); ++i) {
      const auto c = data_.cluster(i);
      const VectorXd mu = predict_mean(c.X, beta, model_.link);
      VectorXd r(c.size);
      for (Index t = 0; t < c.size; ++t) {
        const double v = model_.variance.family == Family::gaussian
                             ? 1.0
                             : std::max(mu(t) * (1.0 - mu(t)), 1e-12);
        r(t) = (c.y(t) - mu(t)) / std::sqrt(v);
      }
      res.push_back(std::move(r));
    }
    return res;
  }

  double dispersion_at(const VectorXd& beta, Index num_params) const {
    const auto res = pearson_residuals(beta);
    return estimate_dispersion(res, weights_, num_params);
  }

 private:
  double weight(Index i) const {
    return weights_.empty() ? 1.0 : weights_[static_cast<std::size_t>(i)];
  }

  void update_alpha(const VectorXd& beta) {
    const auto res = pearson_residuals(beta);
    const double phi = estimate_dispersion(res, weights_, data_.num_covariates());
    if (!(phi > 0.0)) return;
    try {
      model_.correlation.alpha = estimate_alpha(res, weights_, model_.correlation.kind, phi);
    } catch (const std::domain_error&) {
      model_.correlation.alpha = 0.0;
    }
  }

  const LongitudinalDataset& data_;
  ModelSpec model_;
  std::span<const double> weights_;
  Index T_max_;
  double n_ = 0.0;
  double N_ = 0.0;
  std::shared_ptr<const GaussianBlocks> owned_blocks_;
  const GaussianBlocks* blocks_ = nullptr;
  MatrixXd H_fixed_;
  VectorXd g_fixed_;
  VectorXd row_weights_;
};

VectorXd solve_newton(MatrixXd M, const VectorXd& rhs, double jitter) {
  const double scale = std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
  double added = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) {
      const VectorXd pivots = MatrixXd(llt.matrixL()).diagonal();
      const double smallest = pivots.minCoeff();
      if (smallest * smallest > 1e-15 * scale) {
        VectorXd step = llt.solve(rhs);
        if (step.allFinite()) return step;
      }
    }
    const double bump = (attempt == 0 ? jitter : added * 99.0) * scale;
    M.diagonal().array() += bump;
    added += bump / scale;
  }
  throw NumericalError("Newton matrix is singular even after ridge jitter");
}

std::vector<Index> active_indices(const std::vector<bool>& masked) {
  std::vector<Index> out;
  for (std::size_t j = 0; j < masked.size(); ++j) {
    if (!masked[j]) out.push_back(static_cast<Index>(j));
  }
  return out;
}

double gaussian_objective(const VectorXd& S, const MatrixXd& H, double N, const PenaltySpec& pen,
                          const VectorXd& beta, bool& ok) {
  Eigen::LDLT<MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
    ok = false;
    return 0.0;
  }
  return 0.5 * S.dot(ldlt.solve(S)) + N * penalty_value(pen, beta);
}

struct LoopOptions {
  bool threshold = true;
  bool tolerate_breakdown = false;  // logit GEE on separated data
};

struct LoopResult {
  VectorXd beta;
  std::vector<bool> masked;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  std::vector<Index> active_counts;
  double alpha = 0.0;
};

LoopResult run_lqa(ScoreEvaluator& ev, const PenaltySpec& pen, const SolverControl& ctl,
                   VectorXd beta, std::vector<bool> masked, const LoopOptions& opt) {
  const Index p = ev.p();
  const double N = ev.N();
  const bool record = ctl.record_objective && ev.model().variance.family == Family::gaussian;
  bool trace_ok = record;
  LoopResult out;
  VectorXd S;
  MatrixXd H;
  for (int it = 0; it < ctl.max_iterations; ++it) {
    ev.evaluate(beta, S, H);
    if (trace_ok) {
      const double q = gaussian_objective(S, H, N, pen, beta, trace_ok);
      if (trace_ok) out.trace.push_back(q);
    }
    const std::vector<Index> active = active_indices(masked);
    out.active_counts.push_back(static_cast<Index>(active.size()));
    if (active.empty()) {
      out.converged = true;
      break;
    }
    const LqaWeights w = lqa_weights(pen, beta, masked);
    const auto na = static_cast<Index>(active.size());
    MatrixXd M(na, na);
    VectorXd rhs(na);
    for (Index a = 0; a < na; ++a) {
      rhs(a) = S(active[a]) - N * w.u(active[a]);
      for (Index b = 0; b < na; ++b) M(a, b) = H(active[a], active[b]);
      M(a, a) += N * w.sigma(active[a]);
    }
    VectorXd step;
    try {
      step = solve_newton(std::move(M), rhs, ctl.ridge_jitter);
    } catch (const NumericalError&) {
      if (opt.tolerate_breakdown && it > 0) break;
      throw;
    }
    VectorXd next = beta;
    for (Index a = 0; a < na; ++a) next(active[a]) += step(a);
    if (opt.threshold) {
      for (Index j = 0; j < p; ++j) {
        if (!masked[static_cast<std::size_t>(j)] && std::abs(next(j)) < ctl.zero_threshold) {
          masked[static_cast<std::size_t>(j)] = true;
          next(j) = 0.0;
        }
      }
    }
    if (!next.allFinite()) {
      if (opt.tolerate_breakdown) break;
      throw NumericalError("non-finite iterate in LQA update");
    }
    const double diff = (next - beta).norm();
    beta = std::move(next);
    out.iterations = it + 1;
    if (diff < ctl.convergence_c) {
      out.converged = true;
      break;
    }
  }
  if (trace_ok && out.converged && !out.trace.empty()) {
    ev.evaluate(beta, S, H);
    const double q = gaussian_objective(S, H, N, pen, beta, trace_ok);
    if (trace_ok) out.trace.push_back(q);
  }
  out.beta = std::move(beta);
  out.masked = std::move(masked);
  return out;
}

void validate_control(const SolverControl& ctl) {
  if (!(ctl.zero_threshold > 0.0) || !(ctl.convergence_c > 0.0) || ctl.max_iterations < 1 ||
      !(ctl.ridge_jitter > 0.0)) {
    throw std::invalid_argument("solver control values must be positive");
  }
}

VectorXd ridge_start(ScoreEvaluator& ev, const PenaltySpec& pen, const SolverControl& ctl) {
  PenaltySpec ridge{PenaltyFamily::ridge, 0.0, std::max(pen.lambda2, 1e-3), pen.a};
  SolverControl rc = ctl;
  rc.record_objective = false;
  const LoopResult r = run_lqa(ev, ridge, rc, VectorXd::Zero(ev.p()),
                               std::vector<bool>(static_cast<std::size_t>(ev.p()), false),
                               LoopOptions{false, true});
  return r.beta;
}

PgeeFit assemble(const LoopResult& r, const ScoreEvaluator& ev, const PenaltySpec& pen,
                 const ModelSpec& model, double threshold) {
  PgeeFit fit;
  fit.beta_naive = r.beta;
  fit.beta_nonnaive = r.beta * (1.0 + pen.lambda2);
  for (Index j = 0; j < r.beta.size(); ++j) {
    if (r.beta(j) != 0.0) fit.active_set.push_back(j);
  }
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  fit.threshold_used = threshold;
  fit.objective_trace = r.trace;
  fit.active_count_trace = r.active_counts;
  fit.penalty = pen;
  fit.model = ev.model();
  fit.model.correlation.fixed = model.correlation.fixed;
  fit.dispersion_estimate =
      ev.dispersion_at(r.beta, std::max<Index>(1, static_cast<Index>(fit.active_set.size())));
  fit.n_subjects = ev.n();
  fit.n_observations = ev.N();
  return fit;
}

}  // namespace

PgeeFit fit_weighted(const FitRequest& req, const PenaltySpec& penalty,
                     const SolverControl& control) {
  req.model.validate();
  penalty.validate();
  validate_control(control);
  ScoreEvaluator ev(req);
  const Index p = ev.p();
  std::vector<bool> masked(static_cast<std::size_t>(p), false);
  if (penalty.has_sparse_part()) {
    // Zero already solves the equations when every score component sits
    // inside the L1 subgradient at the origin.  LQA would only creep towards
    // it, sublinearly, when lambda1 is close to that boundary.
    VectorXd S;
    MatrixXd H;
    ev.evaluate(VectorXd::Zero(p), S, H);
    if (S.cwiseAbs().maxCoeff() <= ev.N() * penalty.lambda1 * (1.0 + 1e-9)) {
      LoopResult zero;
      zero.beta = VectorXd::Zero(p);
      zero.masked.assign(static_cast<std::size_t>(p), true);
      zero.converged = true;
      zero.active_counts.push_back(0);
      if (control.record_objective && req.model.variance.family == Family::gaussian) {
        bool ok = true;
        const double q = gaussian_objective(S, H, ev.N(), penalty, zero.beta, ok);
        if (ok) zero.trace.push_back(q);
      }
      return assemble(zero, ev, penalty, req.model, control.zero_threshold);
    }
  }
  VectorXd beta;
  switch (control.init) {
    case InitKind::zeros:
      if (penalty.has_sparse_part()) {
        throw std::invalid_argument(
            "zero initialisation is undefined for penalties with a sparse part; use the ridge "
            "warm start");
      }
      beta = VectorXd::Zero(p);
      break;
    case InitKind::user:
      if (control.init_vector.size() != p) {
        throw std::invalid_argument("initial vector length does not match covariate count");
      }
      beta = control.init_vector;
      break;
    case InitKind::ridge_warm_start:
      beta = ridge_start(ev, penalty, control);
      break;
  }
  if (control.init != InitKind::zeros) {
    for (Index j = 0; j < p; ++j) {
      if (std::abs(beta(j)) < control.zero_threshold) {
        masked[static_cast<std::size_t>(j)] = true;
        beta(j) = 0.0;
      }
    }
  }
  const LoopResult r = run_lqa(ev, penalty, control, std::move(beta), std::move(masked),
                               LoopOptions{true, false});
  return assemble(r, ev, penalty, req.model, control.zero_threshold);
}

VectorXd ridge_warm_start(const FitRequest& req, const PenaltySpec& penalty,
                          const SolverControl& control) {
  req.model.validate();
  ScoreEvaluator ev(req);
  return ridge_start(ev, penalty, control);
}

}  // namespace detail

PgeeFit fit_pgee(const LongitudinalDataset& data, const ModelSpec& model,
                 const PenaltySpec& penalty, const SolverControl& control) {
  PgeeFit fit = detail::fit_weighted(detail::FitRequest{data, model}, penalty, control);
  if (penalty.family != PenaltyFamily::none && standardization_defect(data) > 1e-6) {
    fit.warnings.emplace_back(
        "covariates are not standardized; penalties weigh columns unevenly");
  }
  return fit;
}

PgeeFit fit_gee(const LongitudinalDataset& data, const ModelSpec& model,
                const SolverControl& control) {
  model.validate();
  detail::FitRequest req{data, model};
  detail::ScoreEvaluator ev(req);
  const Index p = ev.p();
  {
    VectorXd S;
    MatrixXd H;
    ev.evaluate(VectorXd::Zero(p), S, H);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-10 * top) {
      throw DataError("design singular: use a penalized fit");
    }
  }
  VectorXd beta = VectorXd::Zero(p);
  if (control.init == InitKind::user) {
    if (control.init_vector.size() != p) {
      throw std::invalid_argument("initial vector length does not match covariate count");
    }
    beta = control.init_vector;
  }
  const PenaltySpec none{};
  const bool logit = model.link == Link::logit;
  const detail::LoopResult r =
      detail::run_lqa(ev, none, control, std::move(beta),
                      std::vector<bool>(static_cast<std::size_t>(p), false),
                      detail::LoopOptions{false, logit});
  return detail::assemble(r, ev, none, model, 0.0);
}

GeeScore gee_score(const VectorXd& beta, const LongitudinalDataset& data, const ModelSpec& model) {
  model.validate();
  if (beta.size() != data.num_covariates()) {
    throw std::invalid_argument("coefficient length mismatch");
  }
  ModelSpec fixed = model;
  fixed.correlation.fixed = true;
  detail::FitRequest req{data, fixed};
  detail::ScoreEvaluator ev(req);
  GeeScore out;
  MatrixXd H;
  ev.evaluate(beta, out.S, H);
  out.K = H / ev.n();
  return out;
}

double pgls_objective(const VectorXd& beta, const LongitudinalDataset& data,
                      const ModelSpec& model, const PenaltySpec& penalty) {
  if (model.variance.family != Family::gaussian) {
    throw std::invalid_argument("PGLS objective defined for gaussian only");
  }
  const GeeScore sc = gee_score(beta, data, model);
  const double n = static_cast<double>(data.num_subjects());
  const double N = static_cast<double>(data.num_observations());
  Eigen::LDLT<MatrixXd> ldlt(sc.K);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericalError("sensitivity matrix K is not positive definite");
  }
  return sc.S.dot(ldlt.solve(sc.S)) / (2.0 * n) + N * penalty_value(penalty, beta);
}

}  // namespace pgee
