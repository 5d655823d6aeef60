#include "doctest.h"

#include "pgee/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace pgee;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

PenaltySpec spec(PenaltyFamily f, double l1, double l2, double a = 3.7) {
  return PenaltySpec{f, l1, l2, a};
}

// Composite Simpson rule, used as an independent route to the SCAD value.
template <class F>
double simpson(F f, double lo, double hi, int panels) {
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int k = 1; k < panels; ++k) s += f(lo + k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("penalty_value: fixtures") {
  CHECK(penalty_value(spec(PenaltyFamily::lasso, 1, 0), VectorXd{{1.0, -1.0}}) == 2.0);
  CHECK(penalty_value(spec(PenaltyFamily::ridge, 0, 1), VectorXd{{2.0}}) == 4.0);

  const PenaltySpec scad = spec(PenaltyFamily::scad, 1, 0);
  const double oracle = simpson([&](double t) { return penalty_derivative(scad, t); }, 0.0, 1.0, 2) +
                        simpson([&](double t) { return penalty_derivative(scad, t); }, 1.0, 3.7, 2) +
                        simpson([&](double t) { return penalty_derivative(scad, t); }, 3.7, 10.0, 2);
  CHECK(oracle == doctest::Approx(2.35).epsilon(1e-12));
  CHECK(penalty_value(scad, VectorXd{{10.0}}) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("penalty_derivative: fixtures and domain") {
  const PenaltySpec scad = spec(PenaltyFamily::scad, 1, 0);
  CHECK(penalty_derivative(scad, 0.5) == 1.0);
  CHECK(penalty_derivative(scad, 2.0) == doctest::Approx(1.7 / 2.7).epsilon(1e-14));
  CHECK(penalty_derivative(scad, 2.0) == doctest::Approx(0.6296).epsilon(1e-4));
  CHECK(penalty_derivative(scad, 4.0) == 0.0);
  CHECK_THROWS_AS(penalty_derivative(scad, -0.1), std::domain_error);
  CHECK(penalty_derivative(spec(PenaltyFamily::ridge, 0, 0.5), 3.0) == doctest::Approx(3.0));
  CHECK(penalty_derivative(spec(PenaltyFamily::en, 0.2, 0.5), 3.0) == doctest::Approx(3.2));
}

TEST_CASE("penalty_derivative matches central differences away from kinks") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> theta(0.0, 6.0);
  std::uniform_real_distribution<double> lam(0.1, 1.5);
  const std::vector<PenaltyFamily> fams{PenaltyFamily::lasso, PenaltyFamily::ridge,
                                        PenaltyFamily::en, PenaltyFamily::scad,
                                        PenaltyFamily::scad_l2};
  int checked = 0;
  while (checked < 100) {
    const auto f = fams[static_cast<std::size_t>(checked) % fams.size()];
    const double l1 = f == PenaltyFamily::ridge ? 0.0 : lam(rng);
    const double l2 =
        (f == PenaltyFamily::lasso || f == PenaltyFamily::scad) ? 0.0 : lam(rng);
    const PenaltySpec s = spec(f, l1, l2);
    const double t = theta(rng);
    const double h = 1e-6;
    if (t < 2 * h || std::abs(t - l1) < 1e-3 || std::abs(t - s.a * l1) < 1e-3) continue;
    const double fd = (penalty_value(s, t + h) - penalty_value(s, t - h)) / (2 * h);
    CHECK(penalty_derivative(s, t) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    ++checked;
  }
}

TEST_CASE("SCAD continuity at the branch points and flat tail") {
  for (double l1 : {0.3, 1.0, 2.5}) {
    const PenaltySpec s = spec(PenaltyFamily::scad, l1, 0);
    for (double k : {l1, s.a * l1}) {
      CHECK(std::abs(penalty_value(s, std::nextafter(k, 0.0)) -
                     penalty_value(s, std::nextafter(k, 100.0))) < 1e-12);
    }
    const double cap = l1 * l1 * (s.a + 1) / 2;
    CHECK(penalty_value(s, s.a * l1 + 1) == doctest::Approx(cap));
    CHECK(penalty_value(s, s.a * l1 + 50) == doctest::Approx(cap));
  }
}

TEST_CASE("penalty_value ignores sign and order") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 2.0);
  const PenaltySpec s = spec(PenaltyFamily::scad_l2, 0.7, 0.3);
  for (int rep = 0; rep < 50; ++rep) {
    VectorXd b(6);
    for (Index j = 0; j < 6; ++j) b(j) = z(rng);
    VectorXd flipped = b;
    flipped(rep % 6) = -flipped(rep % 6);
    VectorXd perm = b.reverse();
    CHECK(penalty_value(s, flipped) == doctest::Approx(penalty_value(s, b)).epsilon(1e-14));
    CHECK(penalty_value(s, perm) == doctest::Approx(penalty_value(s, b)).epsilon(1e-14));
  }
}

TEST_CASE("midpoint convexity for specs flagged convex") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (const PenaltySpec& s :
       {spec(PenaltyFamily::scad_l2, 1.0, 0.19), spec(PenaltyFamily::en, 1.0, 0.05),
        spec(PenaltyFamily::ridge, 0.0, 0.5)}) {
    REQUIRE(convexity_check(s));
    for (int rep = 0; rep < 1000; ++rep) {
      VectorXd x(3), y(3);
      for (Index j = 0; j < 3; ++j) {
        x(j) = u(rng);
        y(j) = u(rng);
      }
      const double mid = penalty_value(s, VectorXd(0.5 * (x + y)));
      CHECK(mid <= 0.5 * (penalty_value(s, x) + penalty_value(s, y)) + 1e-12);
    }
  }
}

TEST_CASE("lqa_weights: fixtures and masking") {
  std::vector<bool> none(2, false);
  auto w = lqa_weights(spec(PenaltyFamily::lasso, 1, 0), VectorXd{{2.0, -0.5}}, none);
  CHECK(w.sigma(0) == doctest::Approx(0.5));
  CHECK(w.sigma(1) == doctest::Approx(2.0));
  CHECK(w.u(0) == doctest::Approx(1.0));
  CHECK(w.u(1) == doctest::Approx(-1.0));

  auto r = lqa_weights(spec(PenaltyFamily::ridge, 0, 1), VectorXd{{3.0}}, {false});
  CHECK(r.sigma(0) == doctest::Approx(2.0));
  CHECK(r.u(0) == doctest::Approx(6.0));

  auto z = lqa_weights(spec(PenaltyFamily::none, 0, 0), VectorXd{{1.0, -3.0}}, none);
  CHECK(z.sigma.isZero());
  CHECK(z.u.isZero());

  CHECK_THROWS_AS(lqa_weights(spec(PenaltyFamily::lasso, 1, 0), VectorXd{{0.0, 1.0}}, none),
                  std::domain_error);
  auto masked = lqa_weights(spec(PenaltyFamily::lasso, 1, 0), VectorXd{{0.0, 1.0}}, {true, false});
  CHECK(masked.sigma(0) == 0.0);
  CHECK(masked.u(0) == 0.0);
}

TEST_CASE("reparametrize and from_lambda_alpha") {
  auto [a1, a2] = reparametrize(0.5, 1.0);
  CHECK(a1 == 0.5);
  CHECK(a2 == 0.0);
  auto [b1, b2] = reparametrize(0.5, 0.0);
  CHECK(b1 == 0.0);
  CHECK(b2 == 0.5);
  auto [c1, c2] = reparametrize(0.170, 0.643);
  CHECK(c1 == doctest::Approx(0.10931).epsilon(1e-10));
  CHECK(c2 == doctest::Approx(0.06069).epsilon(1e-10));
  CHECK_THROWS_AS(reparametrize(-1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(reparametrize(1.0, 1.5), std::invalid_argument);

  const auto s = PenaltySpec::from_lambda_alpha(PenaltyFamily::scad_l2, 0.170, 0.643);
  CHECK(s.lambda1 == doctest::Approx(0.10931));
  CHECK(s.lambda2 == doctest::Approx(0.06069));
}

TEST_CASE("convexity_check: fixtures") {
  CHECK(convexity_check(spec(PenaltyFamily::scad_l2, 1, 0.2)));
  CHECK_FALSE(convexity_check(spec(PenaltyFamily::scad_l2, 1, 0.1)));
  CHECK_FALSE(convexity_check(spec(PenaltyFamily::en, 1, 0)));
  CHECK(convexity_check(spec(PenaltyFamily::en, 1, 0.01)));
  CHECK_FALSE(convexity_check(spec(PenaltyFamily::lasso, 1, 0)));
  CHECK_FALSE(convexity_check(spec(PenaltyFamily::scad, 1, 0)));
  CHECK_FALSE(convexity_check(spec(PenaltyFamily::none, 0, 0)));
}

TEST_CASE("validate rejects family/parameter mismatches") {
  CHECK_THROWS_AS(spec(PenaltyFamily::lasso, 1, 0.1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec(PenaltyFamily::ridge, 0.1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec(PenaltyFamily::scad, 1, 0.1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec(PenaltyFamily::scad_l2, 1, 0.1, 2.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec(PenaltyFamily::en, -1, 0.1).validate(), std::invalid_argument);
  CHECK_NOTHROW(spec(PenaltyFamily::scad_l2, 1, 0.1, 2.5).validate());
  CHECK(penalty_family_from_string("gee") == PenaltyFamily::none);
  CHECK(penalty_family_from_string("scad_l2") == PenaltyFamily::scad_l2);
  CHECK_THROWS_AS(penalty_family_from_string("mcp"), std::invalid_argument);
}
