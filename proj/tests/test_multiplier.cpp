#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mdmm/multiplier.hpp"

using namespace mdmm;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

SolveConfig benchmark_config() {
  SolveConfig config;
  config.theta_step = 1e-2;
  config.max_steps = 1'000'000;
  config.residual_tol = 1e-6;
  return config;
}

}  // namespace

TEST_CASE("lagrangian_value matches the closed formula") {
  CHECK(lagrangian_value(1.0, 0.0, 7.0, 3.0) == doctest::Approx(1.0));
  CHECK(lagrangian_value(2.0, 0.1, 0.5, 1.0) == doctest::Approx(2.055));
  CHECK_THROWS_AS(lagrangian_value(std::numeric_limits<double>::quiet_NaN(), 0, 0, 0),
                  NonFiniteValue);
  CHECK_THROWS_AS(lagrangian_value(1.0, std::numeric_limits<double>::infinity(), 0, 0),
                  NonFiniteValue);
}

TEST_CASE("lagrangian_value at the quadratic KKT point equals the objective") {
  const Vector a = vec2(1, 1), b = vec2(1, 0);
  const auto problem = make_quadratic_problem(a, b, 0.0);
  const KktPoint kkt = quadratic_kkt_point(a, b, 0.0);
  const double f = problem.objective(kkt.theta);
  const double g = problem.constraint(kkt.theta);
  CHECK(g == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(lagrangian_value(f, g, kkt.lambda, 3.7) == doctest::Approx(f));
}

TEST_CASE("lambda_update recurrence and clamping") {
  ConstraintState s;
  s.lambda = 0.0;
  s.lambda_step = 0.1;
  CHECK(lambda_update(s, 0.10).lambda == doctest::Approx(0.01));

  s.lambda = 3.25;
  CHECK(lambda_update(s, 0.0).lambda == doctest::Approx(3.25));

  s.lambda = -0.5;
  s.lambda_step = 1.0;
  CHECK(lambda_update(s, -0.2).lambda == doctest::Approx(-0.7));
  s.mode = ConstraintMode::InequalityUpper;
  CHECK(lambda_update(s, -0.2).lambda == doctest::Approx(0.0));
}

TEST_CASE("lambda_update aborts past the divergence guard") {
  ConstraintState s;
  s.lambda = 1e6 - 0.5;
  s.lambda_step = 1.0;
  CHECK_THROWS_AS(lambda_update(s, 1.0), MultiplierDivergence);
  CHECK_THROWS_AS(lambda_update(s, std::numeric_limits<double>::quiet_NaN()), NonFiniteValue);
}

TEST_CASE("assemble_theta_gradient examples") {
  const Vector df = vec2(1, 0), dg = vec2(0, 2);
  const Vector out = assemble_theta_gradient(df, dg, 0.5, 0.1, 1.0);
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(1.2));

  Vector wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(assemble_theta_gradient(df, wrong, 0, 0, 0), DimensionMismatch);
}

TEST_CASE("assembled gradient reduces to dF bitwise when lambda = c = 0") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    Vector df(4), dg(4);
    for (int i = 0; i < 4; ++i) {
      df[i] = dist(rng);
      dg[i] = dist(rng);
    }
    const Vector out = assemble_theta_gradient(df, dg, 0.0, dist(rng), 0.0);
    for (int i = 0; i < 4; ++i) CHECK(out[i] == df[i]);  // bitwise
  }
}

TEST_CASE("assembled gradient vanishes at the KKT point for every damping") {
  const Vector a = vec2(1, 1), b = vec2(1, 0);
  const auto problem = make_quadratic_problem(a, b, 0.0);
  const KktPoint kkt = quadratic_kkt_point(a, b, 0.0);
  for (double c : {0.0, 0.5, 1.0, 10.0, 1e4}) {
    const Vector out =
        assemble_theta_gradient(problem.objective_grad(kkt.theta), problem.constraint_grad(kkt.theta),
                                kkt.lambda, problem.constraint(kkt.theta), c);
    CHECK(out.norm() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("exact recurrence and formula on randomized inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-3, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    ConstraintState s;
    s.lambda = dist(rng);
    s.lambda_step = std::abs(dist(rng)) + 1e-3;
    const double g = dist(rng);
    const ConstraintState next = lambda_update(s, g);
    CHECK(next.lambda - s.lambda == doctest::Approx(s.lambda_step * g).epsilon(1e-15));

    Vector df(3), dg(3);
    for (int i = 0; i < 3; ++i) {
      df[i] = dist(rng);
      dg[i] = dist(rng);
    }
    const double lambda = dist(rng), c = std::abs(dist(rng));
    const Vector out = assemble_theta_gradient(df, dg, lambda, g, c);
    for (int i = 0; i < 3; ++i) {
      CHECK(out[i] == doctest::Approx(df[i] + (lambda + c * g) * dg[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("penalty contribution to the Lagrangian is non-negative") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dist(-10, 10);
  for (int trial = 0; trial < 500; ++trial) {
    const double f = dist(rng), g = dist(rng), lambda = dist(rng);
    const double c = std::abs(dist(rng));
    const double with_penalty = lagrangian_value(f, g, lambda, c);
    const double without = lagrangian_value(f, g, lambda, 0.0);
    CHECK(with_penalty - without >= -1e-12);
  }
}

TEST_CASE("MDMM converges to the quadratic KKT point") {
  const Vector a = vec2(1, 1), b = vec2(1, 0);
  const auto problem = make_quadratic_problem(a, b, 0.0);
  const KktPoint kkt = quadratic_kkt_point(a, b, 0.0);
  CHECK(kkt.theta[0] == doctest::Approx(0.0));
  CHECK(kkt.theta[1] == doctest::Approx(1.0));
  CHECK(kkt.lambda == doctest::Approx(1.0));

  ConstraintState constraint;  // c = 1, lambda_step default 1e-2
  const SolveTrace trace = solve_constrained(problem, constraint, benchmark_config(), Vector::Zero(2));
  CHECK(trace.termination == Termination::Converged);
  CHECK((trace.theta_final - kkt.theta).norm() <= 1e-4);
  CHECK(std::abs(trace.lambda_final - kkt.lambda) <= 1e-4);
}

TEST_CASE("MDMM converges on the sphere benchmark") {
  const auto problem = make_sphere_problem();
  ConstraintState constraint;
  Vector theta0 = vec2(-0.5, 0.1);
  const SolveTrace trace = solve_constrained(problem, constraint, benchmark_config(), theta0);
  CHECK(trace.termination == Termination::Converged);
  CHECK((trace.theta_final - vec2(-1, 0)).norm() <= 1e-4);
  CHECK(std::abs(trace.lambda_final - 0.5) <= 1e-4);
}

TEST_CASE("pure constraint satisfaction drives theta to the target") {
  const auto problem = make_target_only_problem(0.25);
  ConstraintState constraint;
  SolveConfig config = benchmark_config();
  const SolveTrace trace = solve_constrained(problem, constraint, config, Vector::Zero(1));
  CHECK(trace.termination == Termination::Converged);
  CHECK(trace.theta_final[0] == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("trace bookkeeping invariants") {
  const auto problem = make_target_only_problem(0.1);
  ConstraintState constraint;
  SolveConfig config = benchmark_config();
  config.max_steps = 500;
  const SolveTrace trace = solve_constrained(problem, constraint, config, Vector::Zero(1));
  CHECK(trace.steps.size() <= 500);
  // recorded lambda follows the exact recurrence
  for (std::size_t t = 0; t + 1 < trace.steps.size(); ++t) {
    const double expected = trace.steps[t].lambda + constraint.lambda_step * trace.steps[t].residual;
    CHECK(trace.steps[t + 1].lambda == doctest::Approx(expected).epsilon(1e-15));
  }
  if (trace.termination == Termination::Converged) {
    CHECK(std::abs(trace.steps.back().residual) <= config.residual_tol);
  }
}

TEST_CASE("identical inputs give identical traces") {
  const auto problem = make_sphere_problem();
  ConstraintState constraint;
  SolveConfig config = benchmark_config();
  config.max_steps = 20'000;
  Vector theta0 = vec2(-0.5, 0.1);
  const SolveTrace t1 = solve_constrained(problem, constraint, config, theta0);
  const SolveTrace t2 = solve_constrained(problem, constraint, config, theta0);
  REQUIRE(t1.steps.size() == t2.steps.size());
  for (std::size_t i = 0; i < t1.steps.size(); ++i) {
    CHECK(t1.steps[i].residual == t2.steps[i].residual);
    CHECK(t1.steps[i].lambda == t2.steps[i].lambda);
  }
  CHECK(t1.theta_final == t2.theta_final);
}

TEST_CASE("BDMM forces damping to zero; penalty freezes lambda") {
  const auto problem = make_target_only_problem(0.25);
  SolveConfig config = benchmark_config();
  config.max_steps = 10'000;

  config.method = SolveMethod::Penalty;
  ConstraintState constraint;
  constraint.lambda = 5.0;  // must be ignored
  const SolveTrace penalty = solve_constrained(problem, constraint, config, Vector::Zero(1));
  for (const auto& s : penalty.steps) CHECK(s.lambda == 0.0);

  config.method = SolveMethod::BDMM;
  const SolveTrace bdmm = solve_constrained(problem, ConstraintState{}, config, Vector::Zero(1));
  // without damping the lagrangian carries no quadratic term
  for (const auto& s : bdmm.steps) {
    CHECK(s.lagrangian == doctest::Approx(s.lambda * s.residual).epsilon(1e-12));
  }
}

TEST_CASE("non-finite problem evaluations terminate as Diverged") {
  DifferentiableProblem p = make_target_only_problem(0.25);
  p.objective = [](const Vector&) { return std::numeric_limits<double>::quiet_NaN(); };
  const SolveTrace trace = solve_constrained(p, ConstraintState{}, benchmark_config(), Vector::Zero(1));
  CHECK(trace.termination == Termination::Diverged);
  CHECK(!trace.diagnostic.empty());
}
