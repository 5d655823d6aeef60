#pragma once

#include "pgee/data.hpp"
#include "pgee/simulation.hpp"
#include "pgee/solver.hpp"
#include "pgee/tuning.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace pgee {

using json = nlohmann::ordered_json;

/// Shortest round-trip decimal for a double ("nan" for NaN).
std::string format_number(double v);

json penalty_to_json(const PenaltySpec& spec);
/// Accepts `{"penalty": f, "lambda": l, "alpha": a, "a": 3.7}` or explicit
/// `lambda1` / `lambda2`.
PenaltySpec penalty_from_json(const json& j);

json model_to_json(const ModelSpec& model);
/// `{"working": "independence"|"exchangeable"|"ar1", "family": "gaussian"|"binomial"}`.
ModelSpec model_from_json(const json& j);

/// Coefficient document: standardized naive/non-naive, original scale when
/// scaling is given, active set, iteration count, convergence flag and the
/// penalty/model snapshot.
json fit_to_json(const PgeeFit& fit, const std::vector<std::string>& names,
                 const ScalingInfo* scaling = nullptr,
                 const std::optional<VectorXd>& bootstrap_se = std::nullopt);

/// `lambda,alpha,pl_cv,se_cv,valid`.
std::string surface_to_csv(const CvSurface& surface);
json surface_to_json(const CvSurface& surface);

/// One row per lambda: `lambda,<covariates...>,valid`.
std::string path_to_csv(const PathResult& path, const std::vector<std::string>& names);
json path_to_json(const PathResult& path, const std::vector<std::string>& names);
/// Line plot of the `top_k` covariates with the largest absolute coefficient
/// at the smallest lambda, against log(lambda).
std::string path_to_svg(const PathResult& path, const std::vector<std::string>& names,
                        std::size_t top_k = 10);

/// Table layout: penalty, ME (SE), median (lambda, alpha), C.D., I.D., relative bias.
std::string report_to_csv(const SimReport& report);
json report_to_json(const SimReport& report);
std::string report_to_text(const SimReport& report);

}  // namespace pgee
