// pgee: fit, cross-validate, trace paths, simulate and benchmark penalized GEE
// models from the command line.
//
// Exit status: 0 success, 1 usage error, 2 numerical failure, 3 bad input data.

#include "pgee/pgee.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using namespace pgee;

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kData = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string input;
  ColumnSchema schema;
  std::string penalty = "none";
  std::optional<double> lambda, alpha, a, lambda1, lambda2;
  std::string working = "independence";
  std::string family = "gaussian";
  std::vector<double> grid_lambdas;
  std::vector<double> grid_alphas;
  std::size_t n_lambda = 30;
  std::string rule = "min";
  std::string tune;
  int bootstrap = 0;
  std::size_t replicates = 100;
  std::string design;
  std::string penalties = "none,lasso,en,scad,scad_l2";
  std::string sigma1 = "symmetrize";
  std::string seed;
  unsigned threads = 1;
  std::string output;
  std::string format = "text";
  std::string plot;
  std::size_t plot_top = 10;
};

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--input", o.input, "long-format CSV file")->required();
  cmd->add_option("--subject-col", o.schema.subject_col, "subject id column");
  cmd->add_option("--time-col", o.schema.time_col, "time column");
  cmd->add_option("--response-col", o.schema.response_col, "response column");
  cmd->add_option("--covariates", o.schema.covariate_cols, "covariate columns (default: all others)")
      ->delimiter(',');
  cmd->add_option("--family", o.family, "gaussian | binomial")
      ->check(CLI::IsMember({"gaussian", "binomial"}));
  cmd->add_option("--working", o.working, "independence | exchangeable | ar1")
      ->check(CLI::IsMember({"independence", "exchangeable", "ar1"}));
}

void add_penalty_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--penalty", o.penalty, "none | lasso | ridge | en | scad | scad_l2")
      ->check(CLI::IsMember({"none", "gee", "lasso", "ridge", "en", "scad", "scad_l2"}));
  cmd->add_option("--lambda", o.lambda, "overall penalty level");
  cmd->add_option("--alpha", o.alpha, "share of lambda given to the sparse part");
  cmd->add_option("--a", o.a, "SCAD shape parameter (> 2)");
  cmd->add_option("--lambda1", o.lambda1, "sparse penalty level");
  cmd->add_option("--lambda2", o.lambda2, "quadratic penalty level");
}

void add_grid_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--grid-lambdas", o.grid_lambdas, "comma-separated descending lambdas")
      ->delimiter(',');
  cmd->add_option("--grid-alphas", o.grid_alphas, "comma-separated increasing alphas")
      ->delimiter(',');
  cmd->add_option("--n-lambda", o.n_lambda, "size of the default lambda grid")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rule", o.rule, "min | one-se")->check(CLI::IsMember({"min", "one-se"}));
}

void add_output_flags(CLI::App* cmd, Options& o, bool formats = true) {
  cmd->add_option("--output", o.output, "output file (default: stdout)");
  if (formats) {
    cmd->add_option("--format", o.format, "text | csv | json")
        ->check(CLI::IsMember({"text", "csv", "json"}));
  }
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(const std::string& text) {
  if (text.empty()) throw UsageError("--seed is required (use --seed auto for a random seed)");
  if (text == "auto") {
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::cerr << "seed " << s << "\n";
    return s;
  }
  try {
    std::size_t used = 0;
    const auto s = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return s;
  } catch (const std::logic_error&) {
    throw UsageError("--seed must be a non-negative integer or 'auto'");
  }
}

void emit(const Options& o, const std::string& text) {
  if (o.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(o.output, std::ios::binary);
  if (!out) throw DataError("cannot write output file '" + o.output + "'");
  out << text;
}

ModelSpec model_of(const Options& o) {
  return model_from_json(json{{"family", o.family}, {"working", o.working}});
}

struct Prepared {
  StandardizedData std;
  ModelSpec model;
};

Prepared prepare(const Options& o) {
  const LongitudinalDataset raw = load_dataset(o.input, o.schema);
  const ModelSpec model = model_of(o);
  return {standardize(raw, model.variance.family == Family::gaussian), model};
}

PenaltySpec penalty_of(const Options& o) {
  json j{{"penalty", o.penalty}};
  if (o.lambda) j["lambda"] = *o.lambda;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.lambda1) j["lambda1"] = *o.lambda1;
  if (o.lambda2) j["lambda2"] = *o.lambda2;
  if (o.a) j["a"] = *o.a;
  return penalty_from_json(j);
}

SelectionRule rule_of(const Options& o) {
  return o.rule == "one-se" ? SelectionRule::one_se : SelectionRule::min;
}

// CV always uses the default SCAD shape, so an explicit --a would be ignored.
void reject_fixed_penalty_flags(const Options& o, const char* context) {
  if (o.lambda || o.alpha || o.lambda1 || o.lambda2 || o.a) {
    throw UsageError(std::string("--lambda/--alpha/--a/--lambda1/--lambda2 conflict with ") + context);
  }
}

CvSurface run_cv(const Options& o, const Prepared& p, PenaltyFamily family) {
  if (family == PenaltyFamily::none) throw UsageError("cross-validation needs a penalty other than none");
  TuningGrid grid;
  const auto alphas = family_alphas(family, o.grid_alphas.empty() ? default_alphas() : o.grid_alphas);
  if (o.grid_lambdas.empty()) {
    grid = default_grid(p.std.data, p.model, family, o.n_lambda, alphas);
  } else {
    grid = TuningGrid{o.grid_lambdas, alphas};
  }
  CvSurface surface = loso_cv(p.std.data, p.model, family, grid, {}, o.threads);
  if (!surface.best) throw NumericalError("no grid point produced a valid CV score");
  return surface;
}

std::string fit_text(const PgeeFit& fit, const std::vector<std::string>& names,
                     const ScalingInfo& scaling, const std::optional<VectorXd>& se) {
  std::ostringstream os;
  os << "penalty " << to_string(fit.penalty.family) << " (lambda1 " << format_number(fit.penalty.lambda1)
     << ", lambda2 " << format_number(fit.penalty.lambda2) << "), working "
     << to_string(fit.model.correlation.kind) << ", " << fit.iterations << " iterations"
     << (fit.converged ? "" : " (not converged)") << "\n";
  const VectorXd orig = scaling.to_original(fit.beta_nonnaive);
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %14s %14s%s\n", "covariate", "standardized", "original",
                se ? "      boot.se" : "");
  os << line;
  for (Index j = 0; j < fit.beta_nonnaive.size(); ++j) {
    std::snprintf(line, sizeof line, "%-16s %14.6g %14.6g", names[static_cast<std::size_t>(j)].c_str(),
                  fit.beta_nonnaive(j), orig(j));
    os << line;
    if (se) {
      std::snprintf(line, sizeof line, " %13.6g", (*se)(j));
      os << line;
    }
    os << "\n";
  }
  os << "intercept (original scale) " << format_number(scaling.original_intercept(fit.beta_nonnaive))
     << "\n";
  for (const auto& w : fit.warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::string fit_csv(const PgeeFit& fit, const std::vector<std::string>& names,
                    const ScalingInfo& scaling, const std::optional<VectorXd>& se) {
  std::ostringstream os;
  os << "covariate,beta_naive,beta_nonnaive,beta_original" << (se ? ",bootstrap_se" : "") << "\n";
  const VectorXd orig = scaling.to_original(fit.beta_nonnaive);
  for (Index j = 0; j < fit.beta_nonnaive.size(); ++j) {
    os << names[static_cast<std::size_t>(j)] << ',' << format_number(fit.beta_naive(j)) << ','
       << format_number(fit.beta_nonnaive(j)) << ',' << format_number(orig(j));
    if (se) os << ',' << format_number((*se)(j));
    os << "\n";
  }
  os << "(intercept),,," << format_number(scaling.original_intercept(fit.beta_nonnaive))
     << (se ? "," : "") << "\n";
  return os.str();
}

int cmd_fit(const Options& o) {
  std::optional<std::uint64_t> seed;
  if (o.bootstrap > 0) seed = resolve_seed(o.seed);
  if (!o.tune.empty() && o.tune != "cv") throw UsageError("--tune accepts only 'cv'");
  const Prepared p = prepare(o);

  PenaltySpec penalty;
  std::optional<CvSurface> surface;
  if (o.tune == "cv") {
    reject_fixed_penalty_flags(o, "--tune cv");
    const auto family = penalty_family_from_string(o.penalty);
    surface = run_cv(o, p, family);
    const TuningChoice c = select_tuning(*surface, rule_of(o));
    penalty = PenaltySpec::from_lambda_alpha(family, c.lambda, c.alpha);
  } else {
    penalty = penalty_of(o);
  }

  PgeeFit fit = fit_pgee(p.std.data, p.model, penalty);
  std::optional<VectorXd> se;
  if (o.bootstrap > 0) {
    const BootstrapResult boot =
        cluster_bootstrap(p.std.data, p.model, penalty, o.bootstrap, *seed, {}, o.threads);
    se = boot.se;
    if (boot.unconverged > 0) {
      fit.warnings.push_back("bootstrap: " + std::to_string(boot.unconverged) + " of " +
                             std::to_string(boot.replicates) +
                             " refits stopped at the iteration limit");
    }
  }
  const auto& names = p.std.data.covariate_names();
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";

  if (o.format == "json") {
    json j = fit_to_json(fit, names, &p.std.scaling, se);
    if (surface) j["tuning"] = {{"rule", o.rule}, {"lambda", select_tuning(*surface, rule_of(o)).lambda},
                                {"alpha", select_tuning(*surface, rule_of(o)).alpha}};
    emit(o, j.dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, fit_csv(fit, names, p.std.scaling, se));
  } else {
    emit(o, fit_text(fit, names, p.std.scaling, se));
  }
  if (!fit.converged) {
    std::cerr << "error: solver did not converge in " << fit.iterations << " iterations\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_cv(const Options& o) {
  reject_fixed_penalty_flags(o, "cv");
  const Prepared p = prepare(o);
  const CvSurface surface = run_cv(o, p, penalty_family_from_string(o.penalty));
  const TuningChoice lo = select_tuning(surface, SelectionRule::min);
  const TuningChoice one = select_tuning(surface, SelectionRule::one_se);
  if (o.format == "json") {
    emit(o, surface_to_json(surface).dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, surface_to_csv(surface));
    std::cerr << "min: lambda " << format_number(lo.lambda) << " alpha " << format_number(lo.alpha)
              << "\none-se: lambda " << format_number(one.lambda) << " alpha "
              << format_number(one.alpha) << "\n";
  } else {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%14s %8s %14s %14s\n", "lambda", "alpha", "pl_cv", "se_cv");
    os << line;
    for (const auto& pt : surface.points) {
      if (pt.valid) {
        std::snprintf(line, sizeof line, "%14.6g %8.4f %14.6g %14.6g\n", pt.lambda, pt.alpha, pt.pl_cv,
                      pt.se_cv);
      } else {
        std::snprintf(line, sizeof line, "%14.6g %8.4f %14s %14s\n", pt.lambda, pt.alpha, "invalid", "");
      }
      os << line;
    }
    os << "min:    lambda " << format_number(lo.lambda) << " alpha " << format_number(lo.alpha) << "\n";
    os << "one-se: lambda " << format_number(one.lambda) << " alpha " << format_number(one.alpha) << "\n";
    emit(o, os.str());
  }
  return kOk;
}

int cmd_path(const Options& o) {
  const auto family = penalty_family_from_string(o.penalty);
  if (family == PenaltyFamily::none) throw UsageError("path needs a penalty other than none");
  if (o.lambda || o.lambda1 || o.lambda2 || o.a) {
    throw UsageError("path takes --alpha and --grid-lambdas, not a fixed penalty level");
  }
  const Prepared p = prepare(o);
  const double alpha = alpha_is_fixed(family) ? fixed_alpha(family) : o.alpha.value_or(1.0);
  std::vector<double> lambdas = o.grid_lambdas;
  if (lambdas.empty()) lambdas = log_lambda_sequence(lambda_max(p.std.data, p.model, alpha), o.n_lambda);
  const PathResult path = penalization_path(p.std.data, p.model, family, alpha, lambdas);
  const auto& names = p.std.data.covariate_names();
  if (!o.plot.empty()) {
    std::ofstream svg(o.plot, std::ios::binary);
    if (!svg) throw DataError("cannot write plot file '" + o.plot + "'");
    svg << path_to_svg(path, names, o.plot_top);
  }
  if (o.format == "json") {
    emit(o, path_to_json(path, names).dump(2) + "\n");
  } else {
    emit(o, path_to_csv(path, names));
  }
  return kOk;
}

Sigma1Mode sigma1_of(const Options& o) {
  if (o.sigma1 == "upper") return Sigma1Mode::upper;
  if (o.sigma1 == "lower") return Sigma1Mode::lower;
  return Sigma1Mode::symmetrize;
}

int cmd_simulate(const Options& o) {
  const std::uint64_t seed = resolve_seed(o.seed);
  const StudyDesign design = design_preset(o.design, sigma1_of(o));
  emit(o, to_csv(design.simulate(seed)));
  return kOk;
}

std::vector<PenaltyFamily> families_of(const std::string& list) {
  std::vector<PenaltyFamily> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(penalty_family_from_string(item));
  }
  return out;
}

int cmd_bench(const Options& o) {
  const std::uint64_t seed = resolve_seed(o.seed);
  const StudyDesign design = design_preset(o.design, sigma1_of(o));
  StudyControl ctl;
  ctl.n_lambda = o.n_lambda;
  if (!o.grid_alphas.empty()) ctl.alphas = o.grid_alphas;
  ctl.rule = rule_of(o);
  ctl.threads = o.threads;
  const SimReport report = run_study(design, families_of(o.penalties), o.replicates, ctl, seed);
  if (o.format == "json") {
    emit(o, report_to_json(report).dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, report_to_csv(report));
  } else {
    emit(o, report_to_text(report));
  }
  // A few failed replicates still leave a usable report; it lists them per penalty.
  if (report.incomplete()) std::cerr << "warning: some replicates failed, see the report\n";
  for (const auto& s : report.summaries) {
    if (s.completed == 0) {
      std::cerr << "numerical failure: every replicate failed for " << to_string(s.family) << "\n";
      return kNumerical;
    }
  }
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Penalized generalized estimating equations"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values");
  Options o;

  auto* fit = app.add_subcommand("fit", "fit one penalized GEE model");
  add_data_flags(fit, o);
  add_penalty_flags(fit, o);
  add_grid_flags(fit, o);
  add_output_flags(fit, o);
  fit->add_option("--tune", o.tune, "choose lambda/alpha first ('cv')");
  fit->add_option("--bootstrap", o.bootstrap, "cluster bootstrap replicates for standard errors")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", o.seed, "integer seed or 'auto' (needed with --bootstrap)");

  auto* cv = app.add_subcommand("cv", "leave-one-subject-out cross-validation over a grid");
  add_data_flags(cv, o);
  add_penalty_flags(cv, o);
  add_grid_flags(cv, o);
  add_output_flags(cv, o);

  auto* path = app.add_subcommand("path", "coefficient paths over a lambda sequence");
  add_data_flags(path, o);
  add_penalty_flags(path, o);
  add_grid_flags(path, o);
  add_output_flags(path, o);
  path->add_option("--plot", o.plot, "also write an SVG plot of the paths");
  path->add_option("--plot-top", o.plot_top, "number of paths drawn")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "draw one dataset from a preset design");
  sim->add_option("--design", o.design, "design preset")->required();
  sim->add_option("--seed", o.seed, "integer seed or 'auto'");
  sim->add_option("--sigma1", o.sigma1, "symmetrize | upper | lower")
      ->check(CLI::IsMember({"symmetrize", "upper", "lower"}));
  add_output_flags(sim, o, false);

  auto* bench = app.add_subcommand("bench", "Monte-Carlo study on a preset design");
  bench->add_option("--design", o.design, "design preset")->required();
  bench->add_option("--replicates", o.replicates, "number of simulated datasets")
      ->check(CLI::PositiveNumber);
  bench->add_option("--penalties", o.penalties, "comma-separated penalty families");
  bench->add_option("--seed", o.seed, "integer seed or 'auto'");
  bench->add_option("--sigma1", o.sigma1, "symmetrize | upper | lower")
      ->check(CLI::IsMember({"symmetrize", "upper", "lower"}));
  bench->add_option("--grid-alphas", o.grid_alphas, "comma-separated alphas")->delimiter(',');
  bench->add_option("--n-lambda", o.n_lambda, "lambda grid size")->check(CLI::PositiveNumber);
  bench->add_option("--rule", o.rule, "min | one-se")->check(CLI::IsMember({"min", "one-se"}));
  add_output_flags(bench, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*cv) return cmd_cv(o);
    if (*path) return cmd_path(o);
    if (*sim) return cmd_simulate(o);
    return cmd_bench(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
