#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pgee/pgee.hpp"

namespace py = pybind11;
using namespace pgee;

namespace {

ModelSpec make_model(const std::string& family, const std::string& working) {
  return model_from_json(json{{"family", family}, {"working", working}});
}

PenaltySpec make_penalty(const std::string& penalty, std::optional<double> lambda,
                         std::optional<double> alpha, std::optional<double> lambda1,
                         std::optional<double> lambda2, std::optional<double> a) {
  json j{{"penalty", penalty}};
  if (lambda) j["lambda"] = *lambda;
  if (alpha) j["alpha"] = *alpha;
  if (lambda1) j["lambda1"] = *lambda1;
  if (lambda2) j["lambda2"] = *lambda2;
  if (a) j["a"] = *a;
  return penalty_from_json(j);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Penalized generalized estimating equations";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<LongitudinalDataset>(m, "Dataset")
      .def(py::init<std::vector<std::string>, std::vector<Index>, std::vector<double>, VectorXd,
                    MatrixXd, std::vector<std::string>, std::string>(),
           py::arg("subject_ids"), py::arg("sizes"), py::arg("times"), py::arg("y"), py::arg("X"),
           py::arg("covariate_names") = std::vector<std::string>{}, py::arg("response_name") = "y")
      .def_property_readonly("num_subjects", &LongitudinalDataset::num_subjects)
      .def_property_readonly("num_observations", &LongitudinalDataset::num_observations)
      .def_property_readonly("num_covariates", &LongitudinalDataset::num_covariates)
      .def_property_readonly("subject_ids", &LongitudinalDataset::subject_ids)
      .def_property_readonly("covariate_names", &LongitudinalDataset::covariate_names)
      .def_property_readonly("times", &LongitudinalDataset::times)
      .def_property_readonly("y", &LongitudinalDataset::y)
      .def_property_readonly("X", &LongitudinalDataset::X)
      .def("cluster_size", &LongitudinalDataset::cluster_size)
      .def("to_csv", [](const LongitudinalDataset& d) { return to_csv(d); });

  py::class_<ScalingInfo>(m, "Scaling")
      .def_readonly("x_mean", &ScalingInfo::x_mean)
      .def_readonly("x_sd", &ScalingInfo::x_sd)
      .def_readonly("y_mean", &ScalingInfo::y_mean)
      .def_readonly("y_sd", &ScalingInfo::y_sd)
      .def("to_original", &ScalingInfo::to_original)
      .def("original_intercept", &ScalingInfo::original_intercept);

  py::class_<PgeeFit>(m, "Fit")
      .def_readonly("beta_naive", &PgeeFit::beta_naive)
      .def_readonly("beta", &PgeeFit::beta_nonnaive)
      .def_readonly("active_set", &PgeeFit::active_set)
      .def_readonly("iterations", &PgeeFit::iterations)
      .def_readonly("converged", &PgeeFit::converged)
      .def_readonly("objective_trace", &PgeeFit::objective_trace)
      .def_readonly("dispersion", &PgeeFit::dispersion_estimate)
      .def_readonly("warnings", &PgeeFit::warnings)
      .def_property_readonly("working_alpha", [](const PgeeFit& f) { return f.model.correlation.alpha; })
      .def_property_readonly("lambda1", [](const PgeeFit& f) { return f.penalty.lambda1; })
      .def_property_readonly("lambda2", [](const PgeeFit& f) { return f.penalty.lambda2; });

  m.def("load_csv",
        [](const std::string& path, const std::string& subject, const std::string& time,
           const std::string& response, const std::vector<std::string>& covariates) {
          return load_dataset(path, ColumnSchema{subject, time, response, covariates});
        },
        py::arg("path"), py::arg("subject_col") = "subject", py::arg("time_col") = "time",
        py::arg("response_col") = "y", py::arg("covariates") = std::vector<std::string>{});

  m.def("parse_csv",
        [](const std::string& text, const std::string& subject, const std::string& time,
           const std::string& response) {
          return parse_dataset(text, ColumnSchema{subject, time, response, {}});
        },
        py::arg("text"), py::arg("subject_col") = "subject", py::arg("time_col") = "time",
        py::arg("response_col") = "y");

  m.def("standardize",
        [](const LongitudinalDataset& d, bool scale_response) {
          StandardizedData s = standardize(d, scale_response);
          return py::make_tuple(std::move(s.data), std::move(s.scaling));
        },
        py::arg("data"), py::arg("scale_response") = true);

  m.def("fit",
        [](const LongitudinalDataset& d, const std::string& penalty, std::optional<double> lambda,
           std::optional<double> alpha, std::optional<double> lambda1, std::optional<double> lambda2,
           std::optional<double> a, const std::string& family, const std::string& working) {
          const ModelSpec model = make_model(family, working);
          const PenaltySpec pen = make_penalty(penalty, lambda, alpha, lambda1, lambda2, a);
          py::gil_scoped_release release;
          return fit_pgee(d, model, pen);
        },
        py::arg("data"), py::arg("penalty") = "none", py::arg("lam") = py::none(),
        py::arg("alpha") = py::none(), py::arg("lambda1") = py::none(), py::arg("lambda2") = py::none(),
        py::arg("a") = py::none(), py::arg("family") = "gaussian", py::arg("working") = "independence");

  m.def("cv_json",
        [](const LongitudinalDataset& d, const std::string& penalty, std::vector<double> lambdas,
           std::vector<double> alphas, std::size_t n_lambda, const std::string& family,
           const std::string& working, unsigned threads) {
          const ModelSpec model = make_model(family, working);
          const PenaltyFamily fam = penalty_family_from_string(penalty);
          const auto fam_alphas = family_alphas(fam, alphas.empty() ? default_alphas() : alphas);
          py::gil_scoped_release release;
          const TuningGrid grid = lambdas.empty() ? default_grid(d, model, fam, n_lambda, fam_alphas)
                                                  : TuningGrid{lambdas, fam_alphas};
          return surface_to_json(loso_cv(d, model, fam, grid, {}, threads)).dump();
        },
        py::arg("data"), py::arg("penalty"), py::arg("lambdas") = std::vector<double>{},
        py::arg("alphas") = std::vector<double>{}, py::arg("n_lambda") = 30,
        py::arg("family") = "gaussian", py::arg("working") = "independence", py::arg("threads") = 1);

  m.def("path_json",
        [](const LongitudinalDataset& d, const std::string& penalty, double alpha,
           std::vector<double> lambdas, std::size_t n_lambda, const std::string& family,
           const std::string& working) {
          const ModelSpec model = make_model(family, working);
          const PenaltyFamily fam = penalty_family_from_string(penalty);
          if (alpha_is_fixed(fam)) alpha = fixed_alpha(fam);
          if (lambdas.empty()) lambdas = log_lambda_sequence(lambda_max(d, model, alpha), n_lambda);
          py::gil_scoped_release release;
          return path_to_json(penalization_path(d, model, fam, alpha, lambdas), d.covariate_names()).dump();
        },
        py::arg("data"), py::arg("penalty"), py::arg("alpha") = 1.0,
        py::arg("lambdas") = std::vector<double>{}, py::arg("n_lambda") = 30,
        py::arg("family") = "gaussian", py::arg("working") = "independence");

  m.def("bootstrap_se",
        [](const LongitudinalDataset& d, const std::string& penalty, std::optional<double> lambda,
           std::optional<double> alpha, int replicates, std::uint64_t seed, const std::string& family,
           const std::string& working, unsigned threads) {
          const ModelSpec model = make_model(family, working);
          const PenaltySpec pen = make_penalty(penalty, lambda, alpha, std::nullopt, std::nullopt, std::nullopt);
          py::gil_scoped_release release;
          return bootstrap_se(d, model, pen, replicates, seed, {}, threads);
        },
        py::arg("data"), py::arg("penalty"), py::arg("lam") = py::none(), py::arg("alpha") = py::none(),
        py::arg("replicates") = 200, py::arg("seed"), py::arg("family") = "gaussian",
        py::arg("working") = "independence", py::arg("threads") = 1);

  m.def("simulate",
        [](const std::string& design, std::uint64_t seed) { return design_preset(design).simulate(seed); },
        py::arg("design"), py::arg("seed"));

  m.def("true_beta", [](const std::string& design) { return design_preset(design).true_beta(); });

  m.def("implied_beta", &implied_beta, py::arg("gamma1"), py::arg("gamma2"), py::arg("rho"));

  m.def("study_json",
        [](const std::string& design, const std::vector<std::string>& penalties, std::size_t replicates,
           std::uint64_t seed, std::size_t n_lambda, unsigned threads) {
          std::vector<PenaltyFamily> fams;
          for (const auto& p : penalties) fams.push_back(penalty_family_from_string(p));
          StudyControl ctl;
          ctl.n_lambda = n_lambda;
          ctl.threads = threads;
          const StudyDesign d = design_preset(design);
          py::gil_scoped_release release;
          return report_to_json(run_study(d, fams, replicates, ctl, seed)).dump();
        },
        py::arg("design"), py::arg("penalties"), py::arg("replicates"), py::arg("seed"),
        py::arg("n_lambda") = 10, py::arg("threads") = 1);

  m.def("design_presets", &design_preset_names);
}
