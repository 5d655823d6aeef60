#include "doctest.h"

#include "cli_runner.hpp"
#include "pgee/report.hpp"
#include "support.hpp"

#include <random>
#include <set>

using namespace pgee;
using pgee::testing::CliSandbox;

namespace {

const std::string kExe = PGEE_CLI_PATH;

// y = 2 + X beta + noise, written with non-default column names.
std::string gaussian_csv(std::uint64_t seed, Index n, Index T, Index p, MatrixXd* X_out = nullptr,
                         VectorXd* y_out = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const VectorXd beta = testing::random_beta(rng, p);
  MatrixXd X(n * T, p);
  VectorXd y(n * T);
  std::ostringstream os;
  os << "id,visit,outcome";
  for (Index j = 0; j < p; ++j) os << ",x" << j + 1;
  os << "\n";
  for (Index i = 0; i < n; ++i) {
    for (Index t = 0; t < T; ++t) {
      const Index r = i * T + t;
      for (Index j = 0; j < p; ++j) X(r, j) = z(rng) * (1.0 + static_cast<double>(j));
      y(r) = 2.0 + X.row(r).dot(beta) + z(rng);
      os << "subj" << i << ',' << t << ',' << format_number(y(r));
      for (Index j = 0; j < p; ++j) os << ',' << format_number(X(r, j));
      os << "\n";
    }
  }
  if (X_out) *X_out = X;
  if (y_out) *y_out = y;
  return os.str();
}

const std::string kCols = "--subject-col id --time-col visit --response-col outcome";

}  // namespace

TEST_CASE("fit --penalty none reproduces pooled OLS with intercept") {
  CliSandbox box("cli_ols");
  MatrixXd X;
  VectorXd y;
  box.write("data.csv", gaussian_csv(11, 12, 4, 5, &X, &y));
  const auto r = box.run(kExe, "fit --input data.csv " + kCols + " --penalty none --format json");
  REQUIRE(r.status == 0);
  const json doc = json::parse(r.out);

  MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  const VectorXd oracle = testing::ols(A, y);
  CHECK(doc["intercept_original"].get<double>() == doctest::Approx(oracle(0)).epsilon(1e-8));
  for (Index j = 0; j < X.cols(); ++j) {
    CHECK(doc["beta_original"][static_cast<std::size_t>(j)].get<double>() ==
          doctest::Approx(oracle(j + 1)).epsilon(1e-8));
  }
  CHECK(doc["covariates"][0] == "x1");
}

TEST_CASE("cv followed by fit equals fit --tune cv") {
  CliSandbox box("cli_compose");
  box.write("data.csv", gaussian_csv(12, 15, 4, 6));
  const std::string grid = " --grid-lambdas 0.4,0.2,0.1,0.05,0.02 --grid-alphas 0.25,0.5,1";
  for (const std::string rule : {"min", "one-se"}) {
    CAPTURE(rule);
    const auto cv = box.run(kExe, "cv --input data.csv " + kCols + " --penalty scad_l2 --format json" + grid);
    REQUIRE(cv.status == 0);
    const json surface = json::parse(cv.out);
    const json& choice = surface[rule == "min" ? "min" : "one_se"];
    const auto fixed =
        box.run(kExe, "fit --input data.csv " + kCols + " --penalty scad_l2 --format json --lambda " +
                          choice["lambda"].dump() + " --alpha " + choice["alpha"].dump());
    const auto tuned = box.run(kExe, "fit --input data.csv " + kCols +
                                         " --penalty scad_l2 --format json --tune cv --rule " + rule + grid);
    REQUIRE(fixed.status == 0);
    REQUIRE(tuned.status == 0);
    const json a = json::parse(fixed.out);
    const json b = json::parse(tuned.out);
    CHECK(a["beta_nonnaive"] == b["beta_nonnaive"]);
    CHECK(a["penalty"] == b["penalty"]);
    CHECK(b["tuning"]["lambda"] == choice["lambda"]);
  }
}

TEST_CASE("seeded pipelines are byte-identical across runs and thread counts") {
  CliSandbox box("cli_det");
  box.write("data.csv", gaussian_csv(13, 12, 3, 4));
  const std::string fit = "fit --input data.csv " + kCols +
                          " --penalty en --lambda 0.1 --alpha 0.5 --bootstrap 30 --seed 9 --format json";
  const std::string cv = "cv --input data.csv " + kCols + " --penalty scad --n-lambda 6 --format csv";
  const std::string bench =
      "bench --design table1 --replicates 3 --n-lambda 3 --penalties none,scad_l2 --seed 7 --format json";
  for (const std::string& cmd : {fit, cv, bench}) {
    CAPTURE(cmd);
    const auto one = box.run(kExe, cmd + " --threads 1");
    const auto again = box.run(kExe, cmd + " --threads 1");
    const auto many = box.run(kExe, cmd + " --threads 3");
    REQUIRE(one.status == 0);
    CHECK(one.out == again.out);
    CHECK(one.out == many.out);
    CHECK(!one.out.empty());
  }
}

TEST_CASE("simulate and path outputs") {
  CliSandbox box("cli_sim");
  const auto sim = box.run(kExe, "simulate --design table1 --seed 3 --output sim.csv");
  REQUIRE(sim.status == 0);
  const auto data = load_dataset(box.path("sim.csv"));
  CHECK(data.num_subjects() == 20);
  CHECK(data.num_observations() == 100);
  CHECK(data.num_covariates() == 8);
  CHECK(box.run(kExe, "simulate --design table1 --seed 3").out == testing::slurp(box.path("sim.csv")));

  const auto path = box.run(kExe, "path --input sim.csv --penalty lasso --n-lambda 8 --plot p.svg --plot-top 3");
  REQUIRE(path.status == 0);
  CHECK(path.out.rfind("lambda,x1,", 0) == 0);
  const std::string svg = testing::slurp(box.path("p.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);

  // only the files named on the command line were created
  std::set<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(box.dir())) {
    files.insert(e.path().filename().string());
  }
  CHECK(files == std::set<std::string>{"sim.csv", "p.svg"});
}

TEST_CASE("exit codes and required seeds") {
  CliSandbox box("cli_exit");
  box.write("data.csv", gaussian_csv(14, 8, 3, 3));
  CHECK(box.run(kExe, "--help").status == 0);
  CHECK(box.run(kExe, "").status == 1);
  CHECK(box.run(kExe, "fit --input data.csv " + kCols + " --bogus 1").status == 1);
  CHECK(box.run(kExe, "fit --input data.csv " + kCols + " --penalty wiggle").status == 1);
  CHECK(box.run(kExe, "fit --input data.csv " + kCols + " --penalty lasso").status == 1);
  CHECK(box.run(kExe, "fit --input data.csv " + kCols + " --penalty en --lambda 1 --lambda1 1").status == 1);

  const auto missing = box.run(kExe, "fit --input nowhere.csv --penalty none");
  CHECK(missing.status == 3);
  CHECK(missing.err.find("nowhere.csv") != std::string::npos);
  CHECK(box.run(kExe, "fit --input data.csv --penalty none").status == 3);  // default columns absent

  const auto noseed = box.run(kExe, "bench --design table1 --replicates 1");
  CHECK(noseed.status == 1);
  CHECK(noseed.err.find("--seed") != std::string::npos);
  CHECK(box.run(kExe, "simulate --design table1").status == 1);
  CHECK(box.run(kExe, "fit --input data.csv " + kCols + " --penalty ridge --lambda 0.1 --bootstrap 5").status == 1);
  const auto autoseed = box.run(kExe, "simulate --design table1 --seed auto");
  CHECK(autoseed.status == 0);
  CHECK(autoseed.err.find("seed ") == 0);
  CHECK(box.run(kExe, "simulate --design table9 --seed 1").status == 1);

  // perfectly separated binary response: the logit fit cannot converge
  box.write("sep.csv",
            "subject,time,y,x\na,1,0,-2\na,2,0,-1\nb,1,1,1\nb,2,1,2\nc,1,0,-3\nc,2,1,3\n");
  const auto sep = box.run(kExe, "fit --input sep.csv --family binomial --penalty none");
  CHECK(sep.status == 2);
  CHECK(sep.err.find("converge") != std::string::npos);
}
