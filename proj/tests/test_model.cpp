#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "egmu/model.hpp"
#include "egmu/newton.hpp"
#include "support/test_support.hpp"

using namespace egmu;

TEST_CASE("validate_instance: clean instance passes") {
  std::mt19937_64 rng(3);
  auto inst = test::random_instance(20, 3, rng);
  auto res = validate_instance(inst);
  CHECK(res.ok());
  CHECK(res.warnings.empty());
}

TEST_CASE("validate_instance: rejects nonpositive and non-normalized priors") {
  auto inst = test::two_asset_instance();

  Instance zeroed = inst;
  zeroed.benchmark[0] = 0.0;
  zeroed.benchmark[1] = 1.0;
  CHECK(!validate_instance(zeroed).ok());

  Instance negative = inst;
  negative.benchmark[0] = -0.1;
  negative.benchmark[1] = 1.1;
  CHECK(!validate_instance(negative).ok());

  Instance off = inst;
  off.benchmark[0] = 0.7;  // sums to 1.2
  CHECK(!validate_instance(off).ok());

  Instance drift = inst;
  drift.benchmark[0] = 0.5 + 3e-9;  // within warn band
  auto res = validate_instance(drift);
  CHECK(res.ok());
  REQUIRE(res.warnings.size() == 1);
  CHECK(res.warnings[0].find("renormal") != std::string::npos);
}

TEST_CASE("validate_instance: dimension and finiteness checks") {
  auto inst = test::two_asset_instance();

  Instance bad_dim = inst;
  bad_dim.exposures = Eigen::MatrixXd::Zero(3, 1);
  CHECK(!validate_instance(bad_dim).ok());

  Instance wide = inst;  // K > N
  wide.exposures = Eigen::MatrixXd::Zero(2, 5);
  CHECK(!validate_instance(wide).ok());

  Instance nan_x = inst;
  nan_x.exposures(0, 0) = std::nan("");
  CHECK(!validate_instance(nan_x).ok());
}

TEST_CASE("renormalized divides by the sum exactly once") {
  Eigen::VectorXd b(3);
  b << 0.2, 0.3, 0.1;
  Instance inst{b, Eigen::MatrixXd::Zero(3, 1)};
  Instance fixed = renormalized(inst);
  CHECK(std::abs(fixed.benchmark.sum() - 1.0) < 1e-15);
  CHECK(fixed.benchmark[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("is_simplex_point") {
  Eigen::VectorXd w(2);
  w << 0.25, 0.75;
  CHECK(is_simplex_point(w));
  w << 0.5, 0.6;
  CHECK(!is_simplex_point(w));
  w << -0.1, 1.1;
  CHECK(!is_simplex_point(w));
}

TEST_CASE("feasibility_screen flags targets outside the exposure hull") {
  auto inst = test::two_asset_instance();
  Eigen::VectorXd t(1);

  t << 0.5;
  CHECK(feasibility_screen(inst, t) == FeasibilityVerdict::Unknown);

  t << 1.5;  // above max exposure
  CHECK(feasibility_screen(inst, t) == FeasibilityVerdict::Infeasible);

  t << -0.5;
  CHECK(feasibility_screen(inst, t) == FeasibilityVerdict::Infeasible);
}

TEST_CASE("shift_exposures: solutions and duals are invariant, targets move") {
  std::mt19937_64 rng(5);
  auto inst = test::random_instance(30, 3, rng);
  Eigen::VectorXd t = test::interior_target(inst, rng);
  Eigen::VectorXd d(3);
  d << 100.0, -40.0, 7.0;

  ShiftedProblem sp = shift_exposures(inst, t, d);
  CHECK((sp.target - (t - d)).norm() < 1e-12 * (1.0 + d.norm()));

  auto base = solve_equality(inst, t, {});
  auto shifted = solve_equality(sp.instance, sp.target, {});
  REQUIRE(base.status == SolveStatus::Converged);
  REQUIRE(shifted.status == SolveStatus::Converged);
  CHECK((base.weights - shifted.weights).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK((base.theta - shifted.theta).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("strip_intercept removes constant columns and checks consistency") {
  std::mt19937_64 rng(9);
  auto inst = test::random_instance(25, 2, rng);

  Eigen::MatrixXd aug(25, 3);
  aug.col(0) = inst.exposures.col(0);
  aug.col(1) = Eigen::VectorXd::Constant(25, 2.5);
  aug.col(2) = inst.exposures.col(1);
  Instance with_const{inst.benchmark, aug};

  Eigen::VectorXd t(3);
  t << 0.1, 2.5, -0.2;
  StrippedProblem sp = strip_intercept(with_const, t);
  CHECK(sp.instance.n_factors() == 2);
  REQUIRE(sp.removed_columns.size() == 1);
  CHECK(sp.removed_columns[0] == 1);
  CHECK(sp.removed_constants[0] == doctest::Approx(2.5));
  CHECK(sp.target.size() == 2);
  CHECK(sp.target[0] == doctest::Approx(0.1));
  CHECK(sp.target[1] == doctest::Approx(-0.2));

  t[1] = 2.6;  // cannot ask a constant column for a different mean
  CHECK_THROWS_AS(strip_intercept(with_const, t), InconsistentIntercept);
}

TEST_CASE("validate_constraints rejects intercept-like rows") {
  LinearConstraint ok{"cap", Eigen::VectorXd::Zero(4), 0.1};
  ok.coefficients[2] = 1.0;
  LinearConstraint flat{"budget", Eigen::VectorXd::Ones(4), 1.0};

  ConstraintSet good{{}, {ok}};
  CHECK(validate_constraints(good, 4).ok());

  ConstraintSet bad{{flat}, {}};
  CHECK(!validate_constraints(bad, 4).ok());

  LinearConstraint wrong_dim{"x", Eigen::VectorXd::Ones(3), 0.0};
  ConstraintSet mis{{}, {wrong_dim}};
  CHECK(!validate_constraints(mis, 4).ok());
}

TEST_CASE("effective_prior: closed form, endpoints, and normalization") {
  Eigen::VectorXd b(2), prev(2);
  b << 0.5, 0.5;
  prev << 0.9, 0.1;

  // gamma = 1 is the geometric mean, renormalized:
  // sqrt(.45)/(sqrt(.45)+sqrt(.05)) = 3/4.
  Eigen::VectorXd mid = effective_prior(b, prev, 1.0);
  CHECK(mid[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(mid[1] == doctest::Approx(0.25).epsilon(1e-14));

  Eigen::VectorXd g0 = effective_prior(b, prev, 0.0);
  CHECK((g0 - b).lpNorm<Eigen::Infinity>() == 0.0);

  Eigen::VectorXd ginf = effective_prior(b, prev, 1e12);
  CHECK((ginf - prev).lpNorm<Eigen::Infinity>() < 1e-9);

  std::mt19937_64 rng(21);
  auto bb = test::random_benchmark(15, rng);
  auto pp = test::random_benchmark(15, rng);
  for (double g : {0.3, 2.0, 17.0}) {
    Eigen::VectorXd e = effective_prior(bb, pp, g);
    CHECK(std::abs(e.sum() - 1.0) < 1e-12);
    CHECK(e.minCoeff() > 0.0);
  }

  CHECK_THROWS_AS(effective_prior(b, prev, -0.5), std::invalid_argument);

  Eigen::VectorXd dead(2);
  dead << 1.0, 0.0;
  CHECK_THROWS_AS(effective_prior(b, dead, 1.0), DegeneratePrior);
}

TEST_CASE("effective_prior: stable for tiny prior mass") {
  Eigen::VectorXd b(3), prev(3);
  b << 1e-300, 0.5, 0.5 - 1e-300;
  prev << 0.2, 0.3, 0.5;
  // The log-space blend must not underflow to an all-zero vector.
  Eigen::VectorXd e = effective_prior(b, prev, 1.0);
  CHECK(std::isfinite(e.sum()));
  CHECK(std::abs(e.sum() - 1.0) < 1e-12);
  CHECK(e.minCoeff() > 0.0);
}
