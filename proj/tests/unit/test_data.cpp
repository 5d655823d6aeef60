#include "doctest.h"

#include "pgee/data.hpp"
#include "pgee/error.hpp"
#include "pgee/solver.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace pgee;

namespace {

const char* kTwoByThree =
    "subject,time,y,x1,x2,x3,x4\n"
    "a,1,1.0,0.1,0.2,0.3,0.4\n"
    "a,2,2.0,0.5,0.1,0.2,0.9\n"
    "a,3,0.5,0.3,0.7,0.2,0.1\n"
    "b,1,1.5,0.9,0.4,0.8,0.6\n"
    "b,2,2.5,0.2,0.3,0.1,0.5\n"
    "b,3,3.0,0.6,0.9,0.4,0.3\n";

}  // namespace

TEST_CASE("load: row counts and grouping") {
  const auto d = parse_dataset(kTwoByThree);
  CHECK(d.num_subjects() == 2);
  CHECK(d.num_observations() == 6);
  CHECK(d.num_covariates() == 4);
  CHECK(d.subject_ids() == std::vector<std::string>{"a", "b"});
  CHECK(d.covariate_names() == std::vector<std::string>{"x1", "x2", "x3", "x4"});
}

TEST_CASE("load: subjects keep first-appearance order and interleaved rows are grouped") {
  const auto d = parse_dataset(
      "subject,time,y,x\n"
      "z,1,1,1\n"
      "a,1,2,2\n"
      "z,2,3,3\n");
  CHECK(d.subject_ids() == std::vector<std::string>{"z", "a"});
  CHECK(d.cluster_size(0) == 2);
  CHECK(d.y()(1) == 3.0);
}

TEST_CASE("load: duplicate observation is rejected") {
  const std::string csv =
      "subject,time,y,x\n"
      "1,1,0.1,1\n"
      "1,2,0.2,2\n"
      "1,2,0.3,3\n";
  CHECK_THROWS_WITH_AS(parse_dataset(csv), doctest::Contains("duplicate observation"), DataError);
}

TEST_CASE("load: unsorted times are sorted within subject") {
  const auto d = parse_dataset(
      "subject,time,y,x\n"
      "s,3,30,3\n"
      "s,1,10,1\n"
      "s,2,20,2\n");
  const auto c = d.cluster(0);
  // hand-ordered fixture
  const std::vector<double> times{1, 2, 3};
  const std::vector<double> ys{10, 20, 30};
  for (Index t = 0; t < 3; ++t) {
    CHECK(c.times[static_cast<std::size_t>(t)] == times[static_cast<std::size_t>(t)]);
    CHECK(c.y(t) == ys[static_cast<std::size_t>(t)]);
    CHECK(c.X(t, 0) == times[static_cast<std::size_t>(t)]);
  }
}

TEST_CASE("load: malformed cells") {
  CHECK_THROWS_WITH_AS(parse_dataset("subject,time,y,x\n1,1,abc,2\n"),
                       doctest::Contains("non-numeric"), DataError);
  CHECK_THROWS_WITH_AS(parse_dataset("subject,time,y,x\n1,1,,2\n"), doctest::Contains("missing"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_dataset("subject,time,y,x\n1,1,NA,2\n"), doctest::Contains("missing"),
                       DataError);
  CHECK_THROWS_AS(parse_dataset("subject,time,y\n1,1,2\n"), DataError);
  CHECK_THROWS_AS(parse_dataset("subj,time,y,x\n1,1,2,3\n"), DataError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), DataError);
}

TEST_CASE("load: custom column names and explicit covariates") {
  ColumnSchema schema;
  schema.subject_col = "id";
  schema.time_col = "year";
  schema.response_col = "life";
  schema.covariate_cols = {"gdp"};
  const auto d = parse_dataset("id,year,gdp,life,junk\nA,2000,1,70,9\nA,2001,2,71,9\n", schema);
  CHECK(d.num_covariates() == 1);
  CHECK(d.response_name() == "life");
  CHECK(d.y()(1) == 71.0);
}

TEST_CASE("load: constant covariate loads but fails at standardize, naming the column") {
  const auto d = parse_dataset("subject,time,y,x1,flat\n1,1,1,1,5\n1,2,2,2,5\n2,1,3,4,5\n");
  CHECK(d.num_covariates() == 2);
  CHECK_THROWS_WITH_AS(standardize(d), doctest::Contains("'flat'"), DataError);
}

TEST_CASE("standardize: hand-computed column with divisor N") {
  MatrixXd X(3, 1);
  X << 1, 2, 3;
  VectorXd y(3);
  y << 1, 0, 2;
  const auto d = testing::make_dataset({3}, X, y);
  const auto s = standardize(d);
  const double v = std::sqrt(1.5);  // (3-2)/sqrt(2/3)
  CHECK(s.data.X()(0, 0) == doctest::Approx(-v).epsilon(1e-14));
  CHECK(s.data.X()(1, 0) == doctest::Approx(0.0));
  CHECK(s.data.X()(2, 0) == doctest::Approx(v).epsilon(1e-14));
  CHECK(s.data.X()(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("standardize: pooled moments, idempotence and round trip") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 300);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 7, T = 3, p = 4;
    MatrixXd X(n * T, p);
    VectorXd y(n * T);
    for (Index r = 0; r < n * T; ++r) {
      y(r) = u(rng);
      for (Index j = 0; j < p; ++j) X(r, j) = u(rng) * (j + 1);
    }
    const auto d = testing::make_dataset(std::vector<Index>(n, T), X, y);
    const auto s = standardize(d);
    CHECK(standardization_defect(s.data) < 1e-10);
    CHECK(std::abs(s.data.y().mean()) < 1e-10);

    const auto twice = standardize(s.data);
    CHECK((twice.data.X() - s.data.X()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((twice.data.y() - s.data.y()).cwiseAbs().maxCoeff() < 1e-12);

    const auto back = destandardize(s.data, s.scaling);
    const double scale_x = d.X().cwiseAbs().maxCoeff();
    const double scale_y = d.y().cwiseAbs().maxCoeff();
    CHECK((back.X() - d.X()).cwiseAbs().maxCoeff() <= 1e-12 * scale_x);
    CHECK((back.y() - d.y()).cwiseAbs().maxCoeff() <= 1e-12 * scale_y);
  }
}

TEST_CASE("standardize: original-scale coefficients match an unstandardized OLS fit") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  const Index n = 12, T = 4, p = 3;
  MatrixXd X(n * T, p);
  VectorXd y(n * T);
  for (Index r = 0; r < n * T; ++r) {
    X(r, 0) = 10 + 3 * z(rng);
    X(r, 1) = -2 + 0.5 * z(rng);
    X(r, 2) = 100 * z(rng);
    y(r) = 4 + 1.5 * X(r, 0) - 2 * X(r, 1) + 0.01 * X(r, 2) + z(rng);
  }
  const auto d = testing::make_dataset(std::vector<Index>(n, T), X, y);
  const auto s = standardize(d);
  const PgeeFit fit = fit_gee(s.data, ModelSpec::gaussian());
  const VectorXd original = s.scaling.to_original(fit.beta_nonnaive);

  MatrixXd A(n * T, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  const VectorXd oracle = testing::ols(A, y);
  for (Index j = 0; j < p; ++j) CHECK(original(j) == doctest::Approx(oracle(j + 1)).epsilon(1e-9));
  CHECK(s.scaling.original_intercept(fit.beta_nonnaive) == doctest::Approx(oracle(0)).epsilon(1e-9));
}

TEST_CASE("cluster_view: blocks, bounds, and concatenation") {
  const auto d = parse_dataset(kTwoByThree);
  const auto c0 = cluster_view(d, 0);
  CHECK(c0.size == 3);
  CHECK(c0.X.rows() == 3);
  CHECK(c0.X.cols() == 4);
  CHECK_THROWS_AS(cluster_view(d, 2), std::out_of_range);
  CHECK_THROWS_AS(cluster_view(d, -1), std::out_of_range);

  MatrixXd stacked(d.num_observations(), d.num_covariates());
  VectorXd ys(d.num_observations());
  Index r = 0;
  for (Index i = 0; i < d.num_subjects(); ++i) {
    const auto c = cluster_view(d, i);
    stacked.middleRows(r, c.size) = c.X;
    ys.segment(r, c.size) = c.y;
    r += c.size;
  }
  CHECK(stacked == d.X());
  CHECK(ys == d.y());
}

TEST_CASE("csv round trip through to_csv") {
  const auto d = parse_dataset(kTwoByThree);
  const auto again = parse_dataset(to_csv(d));
  CHECK(again.X() == d.X());
  CHECK(again.y() == d.y());
  CHECK(again.subject_ids() == d.subject_ids());
}
