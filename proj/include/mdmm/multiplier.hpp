#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mdmm/errors.hpp"

namespace mdmm {

using Vector = Eigen::VectorXd;

// Smooth scalar objective F with one scalar constraint function G over a
// flat parameter vector. Callables must return finite values on finite
// inputs; the solver turns any NaN/Inf into a Diverged termination.
struct DifferentiableProblem {
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> objective_grad;
  std::function<double(const Vector&)> constraint;
  std::function<Vector(const Vector&)> constraint_grad;
};

enum class ConstraintMode { Equality, InequalityUpper };

// One equality (or clamped upper-bound) constraint: target epsilon, live
// multiplier lambda, damping constant c and the multiplier ascent rate.
struct ConstraintState {
  double epsilon = 0.0;
  double lambda = 0.0;
  double damping = 1.0;
  double lambda_step = 1e-2;
  ConstraintMode mode = ConstraintMode::Equality;
};

enum class SolveMethod { MDMM, BDMM, Penalty };

struct SolveConfig {
  double theta_step = 1e-2;
  std::int64_t max_steps = 1'000'000;
  double residual_tol = 1e-6;
  // |G| <= residual_tol must hold this many consecutive steps before the
  // solve counts as converged; guards against declaring victory mid-oscillation.
  int convergence_window = 100;
  SolveMethod method = SolveMethod::MDMM;
};

enum class Termination { Converged, MaxSteps, Diverged };

struct SolveStep {
  std::int64_t step = 0;
  double objective = 0.0;
  double residual = 0.0;     // G(theta)
  double lambda = 0.0;
  double lagrangian = 0.0;
  double theta_norm = 0.0;
};

struct SolveTrace {
  std::vector<SolveStep> steps;
  Termination termination = Termination::MaxSteps;
  Vector theta_final;
  double lambda_final = 0.0;
  std::string diagnostic;  // set when termination == Diverged
};

const char* to_string(Termination t);
const char* to_string(SolveMethod m);

// L(F, G) = F + lambda*G + (c/2)*G^2
double lagrangian_value(double objective, double residual, double lambda, double damping);

// lambda' = lambda + lambda_step * G, clamped at zero in InequalityUpper mode.
// Throws MultiplierDivergence past |lambda'| > 1e6.
ConstraintState lambda_update(const ConstraintState& state, double residual);

// dF + (lambda + c*G) * dG, elementwise.
Vector assemble_theta_gradient(const Vector& objective_grad, const Vector& constraint_grad,
                               double lambda, double residual, double damping);

// Gradient descent on theta, ascent on lambda, from theta0. BDMM forces
// damping to 0; Penalty freezes lambda at 0.
SolveTrace solve_constrained(const DifferentiableProblem& problem, ConstraintState constraint,
                             const SolveConfig& config, const Vector& theta0);

// Closed-form KKT point for F = 0.5*||theta - a||^2 s.t. b.theta = d:
// lambda* = (b.a - d)/||b||^2, theta* = a - lambda* b.
struct KktPoint {
  Vector theta;
  double lambda;
};
KktPoint quadratic_kkt_point(const Vector& a, const Vector& b, double d);

// Named benchmark problems for tests and the CLI.
DifferentiableProblem make_quadratic_problem(const Vector& a, const Vector& b, double d);
DifferentiableProblem make_sphere_problem();                  // F = theta_1, G = ||theta||^2 - 1
DifferentiableProblem make_target_only_problem(double eps);   // F = 0, G = theta_1 - eps

}  // namespace mdmm
