#include "pgee/simulation.hpp"

#include "fit_engine.hpp"
#include "parallel.hpp"
#include "pgee/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pgee {

namespace {

using Rng = std::mt19937_64;

VectorXd standard_normals(Rng& rng, Index k) {
  std::normal_distribution<double> z(0.0, 1.0);
  VectorXd v(k);
  for (Index j = 0; j < k; ++j) v(j) = z(rng);
  return v;
}

MatrixXd cholesky_factor(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(what) + " is not positive definite");
  }
  return llt.matrixL();
}

void check_correlation_matrix(const MatrixXd& s, Index p, const char* what) {
  if (s.rows() != p || s.cols() != p) {
    throw std::invalid_argument(std::string(what) + " has the wrong dimension");
  }
  if (!s.isApprox(s.transpose(), 1e-12)) {
    throw std::invalid_argument(std::string(what) + " is not symmetric");
  }
  cholesky_factor(s, what);
}

std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  for (Index k = 0; k < count; ++k) out.push_back(prefix + std::to_string(k + 1));
  return out;
}

LongitudinalDataset assemble(Index n, Index T, VectorXd y, MatrixXd X) {
  std::vector<std::string> ids = numbered("", n);
  std::vector<Index> sizes(static_cast<std::size_t>(n), T);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(n * T));
  for (Index i = 0; i < n; ++i) {
    for (Index t = 1; t <= T; ++t) times.push_back(static_cast<double>(t));
  }
  const Index p = X.cols();
  return LongitudinalDataset(std::move(ids), std::move(sizes), std::move(times), std::move(y),
                             std::move(X), numbered("x", p), "y");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x70676565u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void CrossSectionalConfig::validate() const {
  if (n < 1 || T < 1) throw std::invalid_argument("n and T must be positive");
  if (beta.size() < 1) throw std::invalid_argument("beta must not be empty");
  if (!(std::abs(error_rho) < 1.0)) throw std::invalid_argument("|error_rho| must be < 1");
  check_correlation_matrix(sigma, beta.size(), "covariate covariance");
}

CrossSectionalConfig CrossSectionalConfig::table1() {
  CrossSectionalConfig cfg;
  cfg.beta.resize(8);
  cfg.beta << -1, -1, 1, 1, 0.5, 0, 0, 0;
  cfg.sigma = MatrixXd::Identity(8, 8);
  cfg.sigma(0, 1) = cfg.sigma(1, 0) = 0.6;
  cfg.sigma(2, 3) = cfg.sigma(3, 2) = 0.3;
  return cfg;
}

MatrixXd sigma1_block(Sigma1Mode mode) {
  MatrixXd printed(3, 3);
  printed << 1.0, 0.2, 0.5,
             0.3, 1.0, 0.4,
             0.5, 0.4, 1.0;
  switch (mode) {
    case Sigma1Mode::symmetrize:
      return 0.5 * (printed + printed.transpose());
    case Sigma1Mode::upper: {
      MatrixXd s = printed.triangularView<Eigen::Upper>();
      return s + s.transpose() - MatrixXd::Identity(3, 3);
    }
    case Sigma1Mode::lower: {
      MatrixXd s = printed.triangularView<Eigen::Lower>();
      return s + s.transpose() - MatrixXd::Identity(3, 3);
    }
  }
  return printed;
}

MatrixXd lagged_sigma(Sigma1Mode mode) {
  MatrixXd s = MatrixXd::Identity(20, 20);
  const MatrixXd block = sigma1_block(mode);
  for (Index b = 0; b < 3; ++b) s.block(3 * b, 3 * b, 3, 3) = block;
  return s;
}

void LaggedConfig::validate() const {
  if (n < 1 || T < 1) throw std::invalid_argument("n and T must be positive");
  const Index p = gamma1.size();
  if (p < 1 || gamma2.size() != p || rho.size() != p) {
    throw std::invalid_argument("gamma1, gamma2 and rho must have equal positive length");
  }
  if ((rho.array().abs() >= 1.0).any()) throw std::invalid_argument("every |rho_j| must be < 1");
  check_correlation_matrix(sigma, p, "covariate covariance");
  if (subject_effect_sd < 0.0 || error_sd < 0.0) {
    throw std::invalid_argument("standard deviations must be non-negative");
  }
}

LaggedConfig LaggedConfig::scenario(int which, Index n, Sigma1Mode mode) {
  LaggedConfig cfg;
  cfg.n = n;
  cfg.T = 5;
  cfg.sigma = lagged_sigma(mode);
  cfg.gamma1 = VectorXd::Zero(20);
  cfg.rho = VectorXd::Constant(20, 0.5);
  if (which == 1) {
    cfg.gamma1.head(3).setConstant(2.0);
    cfg.gamma1.segment(3, 3).setConstant(1.0);
    cfg.gamma1.segment(6, 3).setConstant(0.1);
  } else if (which == 2) {
    cfg.gamma1.head(6).setConstant(1.0);
    cfg.rho.head(3).setConstant(0.3);
    cfg.rho.segment(3, 3).setConstant(0.6);
  } else {
    throw std::invalid_argument("scenario must be 1 or 2");
  }
  cfg.gamma2 = cfg.gamma1;
  return cfg;
}

LongitudinalDataset simulate_cross_sectional(const CrossSectionalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Index p = cfg.beta.size();
  const MatrixXd L = cholesky_factor(cfg.sigma, "covariate covariance");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Index N = cfg.n * cfg.T;
  MatrixXd X(N, p);
  VectorXd y(N);
  const double innov = std::sqrt(1.0 - cfg.error_rho * cfg.error_rho);
  Index r = 0;
  for (Index i = 0; i < cfg.n; ++i) {
    double e = 0.0;
    for (Index t = 0; t < cfg.T; ++t, ++r) {
      X.row(r) = (L * standard_normals(rng, p)).transpose();
      e = t == 0 ? z(rng) : cfg.error_rho * e + innov * z(rng);
      y(r) = X.row(r).dot(cfg.beta) + e;
    }
  }
  return assemble(cfg.n, cfg.T, std::move(y), std::move(X));
}

namespace {

// Shared covariate process; returns linear predictors without the e_it term.
void lagged_process(const LaggedConfig& cfg, Rng& rng, MatrixXd& X, VectorXd& eta,
                    VectorXd& noise) {
  cfg.validate();
  const Index p = cfg.gamma1.size();
  const MatrixXd Ls = cholesky_factor(cfg.sigma, "covariate covariance");
  const MatrixXd R = cfg.rho.asDiagonal();
  const MatrixXd Q = cfg.sigma - R * cfg.sigma * R;
  Eigen::LLT<MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("implied innovation covariance is not positive definite");
  }
  const MatrixXd Lq = llt.matrixL();
  std::normal_distribution<double> z(0.0, 1.0);
  const Index N = cfg.n * cfg.T;
  X.resize(N, p);
  eta.resize(N);
  noise.resize(N);
  Index r = 0;
  for (Index i = 0; i < cfg.n; ++i) {
    VectorXd prev = Ls * standard_normals(rng, p);
    const double b = cfg.subject_effect_sd * z(rng);
    for (Index t = 0; t < cfg.T; ++t, ++r) {
      VectorXd cur = R * prev + Lq * standard_normals(rng, p);
      X.row(r) = cur.transpose();
      eta(r) = cur.dot(cfg.gamma1) + prev.dot(cfg.gamma2) + b;
      noise(r) = cfg.error_sd * z(rng);
      prev = std::move(cur);
    }
  }
}

}  // namespace

LongitudinalDataset simulate_lagged(const LaggedConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd X;
  VectorXd eta, noise;
  lagged_process(cfg, rng, X, eta, noise);
  return assemble(cfg.n, cfg.T, eta + noise, std::move(X));
}

LongitudinalDataset simulate_binomial(const LaggedConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd X;
  VectorXd eta, noise;
  lagged_process(cfg, rng, X, eta, noise);
  Rng coin(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd y(eta.size());
  for (Index r = 0; r < eta.size(); ++r) {
    const double prob = 1.0 / (1.0 + std::exp(-eta(r)));
    y(r) = u(coin) < prob ? 1.0 : 0.0;
  }
  return assemble(cfg.n, cfg.T, std::move(y), std::move(X));
}

namespace {

// Golub-Welsch nodes/weights for integrals against exp(-x^2).
void gauss_hermite(int k, VectorXd& nodes, VectorXd& weights) {
  MatrixXd J = MatrixXd::Zero(k, k);
  for (int i = 1; i < k; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().cwiseAbs2();
}

}  // namespace

VectorXd marginal_logistic_beta(const LaggedConfig& cfg, std::size_t draws) {
  cfg.validate();
  if (draws < 1000) throw std::invalid_argument("need at least 1000 draws");
  const Index p = cfg.gamma1.size();
  const MatrixXd R = cfg.rho.asDiagonal();
  const MatrixXd sigma_inv = cfg.sigma.inverse();
  // X_{t-1} | X_t ~ N(A X_t, C) for the stationary AR(1) covariate process
  const MatrixXd A = cfg.sigma * R * sigma_inv;
  const MatrixXd C = cfg.sigma - A * R * cfg.sigma;
  const VectorXd slope = cfg.gamma1 + A.transpose() * cfg.gamma2;
  const double spread =
      std::sqrt(cfg.gamma2.dot(C * cfg.gamma2) + cfg.subject_effect_sd * cfg.subject_effect_sd);

  VectorXd gh_x, gh_w;
  gauss_hermite(64, gh_x, gh_w);
  auto logistic = [](double e) { return 1.0 / (1.0 + std::exp(-e)); };

  const MatrixXd L = cholesky_factor(cfg.sigma, "covariate covariance");
  Rng rng(0x6d61726769ULL);
  const Index M = static_cast<Index>(draws);
  MatrixXd X(M, p);
  VectorXd m(M);
  for (Index r = 0; r < M; ++r) {
    X.row(r) = (L * standard_normals(rng, p)).transpose();
    const double centre = X.row(r).dot(slope);
    double acc = 0.0;
    for (Index k = 0; k < gh_x.size(); ++k) {
      acc += gh_w(k) * logistic(centre + std::sqrt(2.0) * spread * gh_x(k));
    }
    m(r) = acc / std::sqrt(std::numbers::pi);
  }

  // Newton on the population logistic score, started at the attenuated slope
  VectorXd beta = slope / std::sqrt(1.0 + spread * spread * std::numbers::pi / 8.0);
  for (int it = 0; it < 50; ++it) {
    const VectorXd mu = (X * beta).unaryExpr(logistic);
    const VectorXd w = (mu.array() * (1.0 - mu.array())).sqrt().matrix();
    const MatrixXd Xw = w.asDiagonal() * X;
    const VectorXd step = (Xw.transpose() * Xw).ldlt().solve(X.transpose() * (m - mu));
    beta += step;
    if (step.norm() < 1e-12) break;
  }
  return beta;
}

VectorXd implied_beta(const VectorXd& gamma1, const VectorXd& gamma2, const VectorXd& rho) {
  if (gamma1.size() != gamma2.size() || gamma1.size() != rho.size()) {
    throw std::invalid_argument("gamma1, gamma2 and rho lengths differ");
  }
  return gamma1 + rho.cwiseProduct(gamma2);
}

double model_error(const VectorXd& beta_hat, const VectorXd& beta_true,
                   const MatrixXd& second_moment) {
  if (beta_hat.size() != beta_true.size() || second_moment.rows() != beta_hat.size() ||
      second_moment.cols() != beta_hat.size()) {
    throw std::invalid_argument("model error dimensions differ");
  }
  const VectorXd d = beta_hat - beta_true;
  return std::max(0.0, d.dot(second_moment * d));
}

SelectionMetrics selection_metrics(const VectorXd& beta_hat, const VectorXd& beta_true) {
  if (beta_hat.size() != beta_true.size()) {
    throw std::invalid_argument("selection metric dimensions differ");
  }
  double zeros = 0.0, nonzeros = 0.0, correct = 0.0, incorrect = 0.0;
  for (Index j = 0; j < beta_true.size(); ++j) {
    const bool dropped = beta_hat(j) == 0.0;
    if (beta_true(j) == 0.0) {
      zeros += 1.0;
      if (dropped) correct += 1.0;
    } else {
      nonzeros += 1.0;
      if (dropped) incorrect += 1.0;
    }
  }
  SelectionMetrics m;
  if (zeros > 0.0) m.correct_deletion = correct / zeros;
  if (nonzeros > 0.0) m.incorrect_deletion = incorrect / nonzeros;
  return m;
}

BootstrapResult cluster_bootstrap(const LongitudinalDataset& data, const ModelSpec& model,
                                  const PenaltySpec& penalty, int replicates, std::uint64_t seed,
                                  const SolverControl& control, unsigned threads) {
  if (replicates < 2) throw std::invalid_argument("bootstrap needs at least two replicates");
  model.validate();
  penalty.validate();
  const auto n = static_cast<std::size_t>(data.num_subjects());
  const auto B = static_cast<std::size_t>(replicates);
  std::vector<std::vector<double>> weights(B, std::vector<double>(n, 0.0));
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (auto& w : weights) {
    for (std::size_t k = 0; k < n; ++k) w[pick(rng)] += 1.0;
  }
  std::shared_ptr<const detail::GaussianBlocks> blocks;
  if (detail::gaussian_blocks_apply(model)) blocks = detail::make_gaussian_blocks(data, model);
  SolverControl ctl = control;
  ctl.record_objective = false;
  std::vector<std::optional<VectorXd>> coefs(B);
  std::vector<char> converged(B, 0);
  detail::parallel_for(B, threads, [&](std::size_t b) {
    try {
      const PgeeFit fit = detail::fit_weighted(
          detail::FitRequest{data, model, weights[b], blocks.get()}, penalty, ctl);
      coefs[b] = fit.beta_nonnaive;
      converged[b] = fit.converged ? 1 : 0;
    } catch (const std::exception&) {
    }
  });
  BootstrapResult out;
  out.replicates = replicates;
  std::vector<VectorXd> ok;
  for (std::size_t b = 0; b < B; ++b) {
    if (!coefs[b]) continue;
    ok.push_back(*coefs[b]);
    if (!converged[b]) ++out.unconverged;
  }
  const std::size_t failed = B - ok.size();
  if (static_cast<double>(failed) > 0.2 * static_cast<double>(B) || ok.size() < 2) {
    throw NumericalError("bootstrap: " + std::to_string(failed) + " of " + std::to_string(B) +
                         " refits failed");
  }
  const Index p = data.num_covariates();
  VectorXd mean = VectorXd::Zero(p);
  for (const auto& c : ok) mean += c;
  mean /= static_cast<double>(ok.size());
  VectorXd ss = VectorXd::Zero(p);
  for (const auto& c : ok) ss += (c - mean).cwiseAbs2();
  out.se = (ss / static_cast<double>(ok.size() - 1)).cwiseSqrt();
  return out;
}

VectorXd bootstrap_se(const LongitudinalDataset& data, const ModelSpec& model,
                      const PenaltySpec& penalty, int replicates, std::uint64_t seed,
                      const SolverControl& control, unsigned threads) {
  return cluster_bootstrap(data, model, penalty, replicates, seed, control, threads).se;
}

VectorXd StudyDesign::true_beta() const {
  if (kind == DesignKind::cross_sectional) return cross.beta;
  if (kind == DesignKind::binomial) return marginal_logistic_beta(lagged);
  return implied_beta(lagged.gamma1, lagged.gamma2, lagged.rho);
}

MatrixXd StudyDesign::second_moment() const {
  return kind == DesignKind::cross_sectional ? cross.sigma : lagged.sigma;
}

ModelSpec StudyDesign::model() const {
  return kind == DesignKind::binomial ? ModelSpec::binomial() : ModelSpec::gaussian();
}

LongitudinalDataset StudyDesign::simulate(std::uint64_t seed) const {
  switch (kind) {
    case DesignKind::cross_sectional:
      return simulate_cross_sectional(cross, seed);
    case DesignKind::lagged:
      return simulate_lagged(lagged, seed);
    case DesignKind::binomial:
      return simulate_binomial(lagged, seed);
  }
  throw std::logic_error("unknown design kind");
}

std::vector<std::string> design_preset_names() {
  return {"table1",         "scenario1-n20",      "scenario1-n100",     "scenario2-n20",
          "scenario2-n100", "scenario1-binomial", "scenario2-binomial"};
}

StudyDesign design_preset(std::string_view name, Sigma1Mode mode) {
  StudyDesign d;
  d.name = std::string(name);
  if (name == "table1") {
    d.kind = DesignKind::cross_sectional;
    d.cross = CrossSectionalConfig::table1();
    return d;
  }
  auto parse_scenario = [&](std::string_view rest) -> int {
    if (rest.rfind("scenario1", 0) == 0) return 1;
    if (rest.rfind("scenario2", 0) == 0) return 2;
    return 0;
  };
  const int which = parse_scenario(name);
  if (which != 0 && name.size() > 10) {
    const std::string_view tail = name.substr(10);
    if (tail == "binomial") {
      d.kind = DesignKind::binomial;
      d.lagged = LaggedConfig::scenario(which, 100, mode);
      return d;
    }
    if (tail.size() > 1 && tail[0] == 'n') {
      long long n = 0;
      auto [ptr, ec] = std::from_chars(tail.data() + 1, tail.data() + tail.size(), n);
      if (ec == std::errc() && ptr == tail.data() + tail.size() && n >= 2) {
        d.kind = DesignKind::lagged;
        d.lagged = LaggedConfig::scenario(which, static_cast<Index>(n), mode);
        return d;
      }
    }
  }
  throw std::invalid_argument("unknown design preset '" + std::string(name) + "'");
}

const FamilySummary& SimReport::summary(PenaltyFamily family) const {
  for (const auto& s : summaries) {
    if (s.family == family) return s;
  }
  throw std::out_of_range("family not part of this report");
}

bool SimReport::incomplete() const {
  return std::any_of(summaries.begin(), summaries.end(),
                     [](const FamilySummary& s) { return s.failed > 0; });
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<ReplicateResult> run_replicate(const StudyDesign& design,
                                           const std::vector<PenaltyFamily>& families,
                                           std::size_t rep, const StudyControl& control,
                                           std::uint64_t seed, const VectorXd& truth) {
  std::vector<ReplicateResult> out;
  const MatrixXd moment = design.second_moment();
  const ModelSpec model = design.model();
  LongitudinalDataset raw;
  StandardizedData std_data;
  std::string setup_error;
  try {
    raw = design.simulate(derive_seed(seed, rep));
    std_data = standardize(raw, model.variance.family == Family::gaussian);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  for (PenaltyFamily family : families) {
    ReplicateResult r;
    r.replicate = rep;
    r.family = family;
    if (!setup_error.empty()) {
      r.message = setup_error;
      out.push_back(std::move(r));
      continue;
    }
    try {
      const LongitudinalDataset& data = std_data.data;
      PenaltySpec pen;
      if (family != PenaltyFamily::none) {
        const TuningGrid grid = default_grid(data, model, family, control.n_lambda, control.alphas);
        const CvSurface surface = loso_cv(data, model, family, grid, control.solver, 1);
        const TuningChoice choice = select_tuning(surface, control.rule);
        r.lambda = choice.lambda;
        r.alpha = choice.alpha;
        pen = PenaltySpec::from_lambda_alpha(family, choice.lambda, choice.alpha);
      }
      SolverControl ctl = control.solver;
      ctl.record_objective = false;
      const PgeeFit fit = fit_pgee(data, model, pen, ctl);
      if (!fit.converged) throw NumericalError("final fit did not converge");
      r.beta_hat = std_data.scaling.to_original(fit.beta_nonnaive);
      r.model_error = model_error(r.beta_hat, truth, moment);
      const SelectionMetrics sel = selection_metrics(r.beta_hat, truth);
      r.correct_deletion = sel.correct_deletion;
      r.incorrect_deletion = sel.incorrect_deletion;
      if (truth(0) != 0.0) r.relative_bias = (r.beta_hat(0) - truth(0)) / truth(0);
      r.ok = true;
    } catch (const std::exception& e) {
      r.message = "replicate " + std::to_string(rep) + ": " + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

SimReport run_study(const StudyDesign& design, const std::vector<PenaltyFamily>& families,
                    std::size_t replicates, const StudyControl& control, std::uint64_t seed) {
  if (replicates < 1) throw std::invalid_argument("a study needs at least one replicate");
  if (families.empty()) throw std::invalid_argument("a study needs at least one penalty family");
  std::vector<std::vector<ReplicateResult>> per_rep(replicates);
  const VectorXd truth = design.true_beta();
  detail::parallel_for(replicates, control.threads, [&](std::size_t rep) {
    per_rep[rep] = run_replicate(design, families, rep, control, seed, truth);
  });

  SimReport report;
  report.design = design.name;
  report.replicates = replicates;
  report.seed = seed;
  for (auto& rows : per_rep) {
    for (auto& r : rows) report.details.push_back(std::move(r));
  }
  for (PenaltyFamily family : families) {
    FamilySummary s;
    s.family = family;
    std::vector<double> me, cd, id, lam, alp, bias;
    for (const auto& r : report.details) {
      if (r.family != family) continue;
      if (!r.ok) {
        ++s.failed;
        continue;
      }
      ++s.completed;
      me.push_back(r.model_error);
      if (r.correct_deletion) cd.push_back(*r.correct_deletion);
      if (r.incorrect_deletion) id.push_back(*r.incorrect_deletion);
      if (r.relative_bias) bias.push_back(*r.relative_bias);
      lam.push_back(r.lambda);
      alp.push_back(r.alpha);
    }
    auto mean = [](const std::vector<double>& v) {
      double t = 0.0;
      for (double x : v) t += x;
      return t / static_cast<double>(v.size());
    };
    if (!me.empty()) {
      s.me_mean = mean(me);
      s.me_median = median(me);
      if (me.size() >= 2) {
        double ss = 0.0;
        for (double x : me) ss += (x - s.me_mean) * (x - s.me_mean);
        s.me_se = std::sqrt(ss / static_cast<double>(me.size() - 1)) /
                  std::sqrt(static_cast<double>(me.size()));
      }
      if (!cd.empty()) s.cd_mean = mean(cd);
      if (!id.empty()) s.id_mean = mean(id);
      if (!bias.empty()) s.rel_bias_mean = mean(bias);
      if (family != PenaltyFamily::none) {
        s.lambda_median = median(lam);
        s.alpha_median = median(alp);
      }
    }
    report.summaries.push_back(s);
  }
  return report;
}

}  // namespace pgee
