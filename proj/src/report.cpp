#include "pgee/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pgee {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace {

json vec_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Index k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string{};
}

}  // namespace

json penalty_to_json(const PenaltySpec& spec) {
  json j;
  j["penalty"] = std::string(to_string(spec.family));
  j["lambda1"] = spec.lambda1;
  j["lambda2"] = spec.lambda2;
  if (spec.uses_scad()) j["a"] = spec.a;
  return j;
}

PenaltySpec penalty_from_json(const json& j) {
  const auto family = penalty_family_from_string(j.value("penalty", std::string("none")));
  const double a = j.value("a", 3.7);
  const bool explicit_form = j.contains("lambda1") || j.contains("lambda2");
  const bool reparam = j.contains("lambda") || j.contains("alpha");
  if (explicit_form && reparam) {
    throw std::invalid_argument("give either lambda/alpha or lambda1/lambda2, not both");
  }
  if (family == PenaltyFamily::none) return PenaltySpec{};
  if (explicit_form) {
    PenaltySpec spec{family, j.value("lambda1", 0.0), j.value("lambda2", 0.0), a};
    spec.validate();
    return spec;
  }
  if (!j.contains("lambda")) throw std::invalid_argument("penalty needs lambda or lambda1/lambda2");
  const double alpha = j.contains("alpha") ? j.at("alpha").get<double>()
                                           : (alpha_is_fixed(family) ? fixed_alpha(family) : 1.0);
  return PenaltySpec::from_lambda_alpha(family, j.at("lambda").get<double>(), alpha, a);
}

json model_to_json(const ModelSpec& model) {
  json j;
  j["family"] = std::string(to_string(model.variance.family));
  j["link"] = std::string(to_string(model.link));
  j["working"] = std::string(to_string(model.correlation.kind));
  if (model.correlation.kind != CorrelationKind::independence) {
    j["working_alpha"] = model.correlation.alpha;
  }
  return j;
}

ModelSpec model_from_json(const json& j) {
  const Family fam = family_from_string(j.value("family", std::string("gaussian")));
  CorrelationSpec corr;
  corr.kind = correlation_kind_from_string(j.value("working", std::string("independence")));
  if (j.contains("working_alpha")) {
    corr.alpha = j.at("working_alpha").get<double>();
    corr.fixed = j.value("working_fixed", false);
  }
  ModelSpec m = fam == Family::gaussian ? ModelSpec::gaussian(corr) : ModelSpec::binomial(corr);
  m.validate();
  return m;
}

json fit_to_json(const PgeeFit& fit, const std::vector<std::string>& names,
                 const ScalingInfo* scaling, const std::optional<VectorXd>& bootstrap_se) {
  json j;
  j["covariates"] = names;
  j["beta_naive"] = vec_to_json(fit.beta_naive);
  j["beta_nonnaive"] = vec_to_json(fit.beta_nonnaive);
  if (scaling != nullptr) {
    j["beta_original"] = vec_to_json(scaling->to_original(fit.beta_nonnaive));
    j["intercept_original"] = scaling->original_intercept(fit.beta_nonnaive);
  }
  if (bootstrap_se) j["bootstrap_se"] = vec_to_json(*bootstrap_se);
  json active = json::array();
  for (Index k : fit.active_set) active.push_back(names.at(static_cast<std::size_t>(k)));
  j["active_set"] = active;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["threshold"] = fit.threshold_used;
  j["dispersion_estimate"] = fit.dispersion_estimate;
  j["penalty"] = penalty_to_json(fit.penalty);
  j["model"] = model_to_json(fit.model);
  if (!fit.warnings.empty()) j["warnings"] = fit.warnings;
  return j;
}

std::string surface_to_csv(const CvSurface& surface) {
  std::ostringstream os;
  os << "lambda,alpha,pl_cv,se_cv,valid\n";
  for (const auto& p : surface.points) {
    os << format_number(p.lambda) << ',' << format_number(p.alpha) << ','
       << format_number(p.pl_cv) << ',' << format_number(p.se_cv) << ',' << (p.valid ? 1 : 0)
       << '\n';
  }
  return os.str();
}

json surface_to_json(const CvSurface& surface) {
  json j;
  j["penalty"] = std::string(to_string(surface.family));
  json pts = json::array();
  for (const auto& p : surface.points) {
    json e;
    e["lambda"] = p.lambda;
    e["alpha"] = p.alpha;
    e["pl_cv"] = p.valid ? json(p.pl_cv) : json(nullptr);
    e["se_cv"] = p.valid ? json(p.se_cv) : json(nullptr);
    e["n_folds"] = p.n_folds;
    e["valid"] = p.valid;
    if (!p.message.empty()) e["message"] = p.message;
    pts.push_back(e);
  }
  j["points"] = pts;
  if (surface.best) {
    j["best_index"] = *surface.best;
    j["min"] = {{"lambda", surface.points[*surface.best].lambda},
                {"alpha", surface.points[*surface.best].alpha}};
    const TuningChoice one = select_tuning(surface, SelectionRule::one_se);
    j["one_se"] = {{"lambda", one.lambda}, {"alpha", one.alpha}};
  }
  j["one_se_set"] = surface.one_se_set;
  return j;
}

std::string path_to_csv(const PathResult& path, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "lambda";
  for (const auto& n : names) os << ',' << n;
  os << ",valid\n";
  for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
    os << format_number(path.lambdas[k]);
    for (Index j = 0; j < path.coefficients.rows(); ++j) {
      os << ',' << format_number(path.coefficients(j, static_cast<Index>(k)));
    }
    os << ',' << (path.valid[k] ? 1 : 0) << '\n';
  }
  return os.str();
}

json path_to_json(const PathResult& path, const std::vector<std::string>& names) {
  json j;
  j["penalty"] = std::string(to_string(path.family));
  j["alpha"] = path.alpha;
  j["lambdas"] = path.lambdas;
  json coefs;
  for (Index r = 0; r < path.coefficients.rows(); ++r) {
    coefs[names.at(static_cast<std::size_t>(r))] = vec_to_json(path.coefficients.row(r).transpose());
  }
  j["coefficients"] = coefs;
  j["valid"] = path.valid;
  return j;
}

std::string path_to_svg(const PathResult& path, const std::vector<std::string>& names,
                        std::size_t top_k) {
  const double width = 720, height = 440, left = 60, right = 140, top = 20, bottom = 40;
  const Index p = path.coefficients.rows();
  const auto L = static_cast<Index>(path.lambdas.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (L == 0 || p == 0) {
    os << "</svg>\n";
    return os.str();
  }
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  const Index last = L - 1;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(path.coefficients(a, last)) > std::abs(path.coefficients(b, last));
  });
  order.resize(std::min<std::size_t>(top_k, order.size()));

  double xmin = std::log(path.lambdas.back()), xmax = std::log(path.lambdas.front());
  if (xmax == xmin) xmax = xmin + 1.0;
  double ymin = 0.0, ymax = 0.0;
  for (Index j : order) {
    ymin = std::min(ymin, path.coefficients.row(j).minCoeff());
    ymax = std::max(ymax, path.coefficients.row(j).maxCoeff());
  }
  if (ymax == ymin) ymax = ymin + 1.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double lam) { return left + (std::log(lam) - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double v) { return top + (ymax - v) / (ymax - ymin) * ph; };

  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << sy(0.0) << "\" y2=\""
     << sy(0.0) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 8
     << "\" text-anchor=\"middle\">log(lambda)</text>\n";
  os << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
     << ")\" text-anchor=\"middle\">standardized coefficient</text>\n";
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Index j = order[r];
    const char* colour = palette[r % 10];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (Index k = 0; k < L; ++k) {
      os << format_number(sx(path.lambdas[static_cast<std::size_t>(k)])) << ','
         << format_number(sy(path.coefficients(j, k))) << (k + 1 < L ? " " : "");
    }
    os << "\"/>\n";
    os << "<text x=\"" << left + pw + 6 << "\" y=\"" << top + 14 * static_cast<double>(r + 1)
       << "\" fill=\"" << colour << "\">" << names.at(static_cast<std::size_t>(j)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string report_to_csv(const SimReport& report) {
  std::ostringstream os;
  os << "penalty,me,me_se,lambda,alpha,cd,id,rel_bias,completed,failed\n";
  for (const auto& s : report.summaries) {
    os << (s.family == PenaltyFamily::none ? std::string("gee") : std::string(to_string(s.family)))
       << ',' << format_number(s.me_mean) << ',' << optional_cell(s.me_se) << ','
       << optional_cell(s.lambda_median) << ',' << optional_cell(s.alpha_median) << ','
       << optional_cell(s.cd_mean) << ',' << optional_cell(s.id_mean) << ','
       << optional_cell(s.rel_bias_mean) << ',' << s.completed << ',' << s.failed << '\n';
  }
  return os.str();
}

json report_to_json(const SimReport& report) {
  json j;
  j["design"] = report.design;
  j["replicates"] = report.replicates;
  j["seed"] = report.seed;
  j["incomplete"] = report.incomplete();
  json sums = json::array();
  for (const auto& s : report.summaries) {
    json e;
    e["penalty"] = s.family == PenaltyFamily::none ? "gee" : std::string(to_string(s.family));
    e["me"] = s.me_mean;
    e["me_se"] = optional_number(s.me_se);
    e["me_median"] = s.me_median;
    e["lambda_median"] = optional_number(s.lambda_median);
    e["alpha_median"] = optional_number(s.alpha_median);
    e["cd"] = optional_number(s.cd_mean);
    e["id"] = optional_number(s.id_mean);
    e["rel_bias"] = optional_number(s.rel_bias_mean);
    e["completed"] = s.completed;
    e["failed"] = s.failed;
    sums.push_back(e);
  }
  j["summary"] = sums;
  json reps = json::array();
  for (const auto& r : report.details) {
    json e;
    e["replicate"] = r.replicate;
    e["penalty"] = r.family == PenaltyFamily::none ? "gee" : std::string(to_string(r.family));
    e["ok"] = r.ok;
    if (!r.ok) {
      e["message"] = r.message;
    } else {
      e["me"] = r.model_error;
      e["cd"] = optional_number(r.correct_deletion);
      e["id"] = optional_number(r.incorrect_deletion);
      e["rel_bias"] = optional_number(r.relative_bias);
      e["lambda"] = r.lambda;
      e["alpha"] = r.alpha;
      e["beta"] = vec_to_json(r.beta_hat);
    }
    reps.push_back(e);
  }
  j["replicate_results"] = reps;
  return j;
}

std::string report_to_text(const SimReport& report) {
  std::ostringstream os;
  os << "design " << report.design << ", " << report.replicates << " replicates, seed "
     << report.seed << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-18s %-18s %-7s %-7s %-9s\n", "Penalty", "ME (S.E.)",
                "(lambda; alpha)", "C.D.", "I.D.", "Rel.Bias");
  os << line;
  for (const auto& s : report.summaries) {
    char me[64], la[64], cd[16], id[16], rb[16];
    if (s.me_se) {
      std::snprintf(me, sizeof me, "%.3f (%.3f)", s.me_mean, *s.me_se);
    } else {
      std::snprintf(me, sizeof me, "%.3f", s.me_mean);
    }
    if (s.lambda_median) {
      std::snprintf(la, sizeof la, "(%.3f; %.3f)", *s.lambda_median, *s.alpha_median);
    } else {
      std::snprintf(la, sizeof la, "-");
    }
    std::snprintf(cd, sizeof cd, s.cd_mean ? "%.3f" : "-", s.cd_mean.value_or(0.0));
    std::snprintf(id, sizeof id, s.id_mean ? "%.3f" : "-", s.id_mean.value_or(0.0));
    std::snprintf(rb, sizeof rb, s.rel_bias_mean ? "%.3f" : "-", s.rel_bias_mean.value_or(0.0));
    const std::string name =
        s.family == PenaltyFamily::none ? "GEE" : std::string(to_string(s.family));
    std::snprintf(line, sizeof line, "%-8s %-18s %-18s %-7s %-7s %-9s\n", name.c_str(), me, la, cd,
                  id, rb);
    os << line;
    if (s.failed > 0) os << "  (" << s.failed << " replicates failed)\n";
  }
  return os.str();
}

}  // namespace pgee
