#include "mdmm/multiplier.hpp"

#include <cmath>
#include <limits>

namespace mdmm {

namespace {
constexpr double kLambdaAbortThreshold = 1e6;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxSteps: return "MaxSteps";
    case Termination::Diverged: return "Diverged";
  }
  return "?";
}

const char* to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::MDMM: return "mdmm";
    case SolveMethod::BDMM: return "bdmm";
    case SolveMethod::Penalty: return "penalty";
  }
  return "?";
}

double lagrangian_value(double objective, double residual, double lambda, double damping) {
  if (!std::isfinite(objective) || !std::isfinite(residual) || !std::isfinite(lambda) ||
      !std::isfinite(damping)) {
    throw NonFiniteValue("lagrangian_value input");
  }
  return objective + lambda * residual + 0.5 * damping * residual * residual;
}

ConstraintState lambda_update(const ConstraintState& state, double residual) {
  if (!std::isfinite(residual)) throw NonFiniteValue("constraint residual");
  ConstraintState next = state;
  next.lambda = state.lambda + state.lambda_step * residual;
  if (state.mode == ConstraintMode::InequalityUpper && next.lambda < 0.0) next.lambda = 0.0;
  if (std::abs(next.lambda) > kLambdaAbortThreshold) {
    throw MultiplierDivergence("|lambda| = " + std::to_string(std::abs(next.lambda)) +
                               " exceeds 1e6 (residual " + std::to_string(residual) + ")");
  }
  return next;
}

Vector assemble_theta_gradient(const Vector& objective_grad, const Vector& constraint_grad,
                               double lambda, double residual, double damping) {
  if (objective_grad.size() != constraint_grad.size()) {
    throw DimensionMismatch("objective grad size " + std::to_string(objective_grad.size()) +
                            " vs constraint grad size " + std::to_string(constraint_grad.size()));
  }
  const double coeff = lambda + damping * residual;
  if (coeff == 0.0) return objective_grad;  // bitwise passthrough of dF
  return objective_grad + coeff * constraint_grad;
}

SolveTrace solve_constrained(const DifferentiableProblem& problem, ConstraintState constraint,
                             const SolveConfig& config, const Vector& theta0) {
  if (config.method == SolveMethod::BDMM) constraint.damping = 0.0;
  const bool lambda_frozen = (config.method == SolveMethod::Penalty);
  if (lambda_frozen) constraint.lambda = 0.0;

  Vector theta = theta0.size() > 0 ? theta0 : Vector::Zero(problem.dim);
  if (theta.size() != problem.dim) {
    throw DimensionMismatch("initial point size " + std::to_string(theta.size()) + " vs dim " +
                            std::to_string(problem.dim));
  }

  SolveTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(std::min<std::int64_t>(config.max_steps, 1 << 20)));
  int in_tolerance = 0;
  trace.termination = Termination::MaxSteps;

  for (std::int64_t step = 0; step < config.max_steps; ++step) {
    const double f = problem.objective(theta);
    const double g = problem.constraint(theta);
    if (!std::isfinite(f) || !std::isfinite(g)) {
      trace.termination = Termination::Diverged;
      trace.diagnostic = "non-finite objective/constraint at step " + std::to_string(step);
      break;
    }
    const Vector df = problem.objective_grad(theta);
    const Vector dg = problem.constraint_grad(theta);

    SolveStep rec;
    rec.step = step;
    rec.objective = f;
    rec.residual = g;
    rec.lambda = constraint.lambda;
    rec.lagrangian = lagrangian_value(f, g, constraint.lambda, constraint.damping);
    rec.theta_norm = theta.norm();
    trace.steps.push_back(rec);

    const Vector grad = assemble_theta_gradient(df, dg, constraint.lambda, g, constraint.damping);
    if (!grad.allFinite()) {
      trace.termination = Termination::Diverged;
      trace.diagnostic = "non-finite gradient at step " + std::to_string(step);
      break;
    }
    theta -= config.theta_step * grad;
    if (!lambda_frozen) {
      try {
        constraint = lambda_update(constraint, g);
      } catch (const MultiplierDivergence& e) {
        trace.termination = Termination::Diverged;
        trace.diagnostic = e.what();
        break;
      }
    }

    in_tolerance = (std::abs(g) <= config.residual_tol) ? in_tolerance + 1 : 0;
    if (in_tolerance >= config.convergence_window) {
      trace.termination = Termination::Converged;
      break;
    }
  }

  trace.theta_final = std::move(theta);
  trace.lambda_final = constraint.lambda;
  return trace;
}

KktPoint quadratic_kkt_point(const Vector& a, const Vector& b, double d) {
  KktPoint p;
  p.lambda = (b.dot(a) - d) / b.squaredNorm();
  p.theta = a - p.lambda * b;
  return p;
}

DifferentiableProblem make_quadratic_problem(const Vector& a, const Vector& b, double d) {
  DifferentiableProblem p;
  p.dim = a.size();
  p.objective = [a](const Vector& t) { return 0.5 * (t - a).squaredNorm(); };
  p.objective_grad = [a](const Vector& t) -> Vector { return t - a; };
  p.constraint = [b, d](const Vector& t) { return b.dot(t) - d; };
  p.constraint_grad = [b](const Vector&) -> Vector { return b; };
  return p;
}

DifferentiableProblem make_sphere_problem() {
  DifferentiableProblem p;
  p.dim = 2;
  p.objective = [](const Vector& t) { return t[0]; };
  p.objective_grad = [](const Vector& t) -> Vector {
    Vector g = Vector::Zero(t.size());
    g[0] = 1.0;
    return g;
  };
  p.constraint = [](const Vector& t) { return t.squaredNorm() - 1.0; };
  p.constraint_grad = [](const Vector& t) -> Vector { return 2.0 * t; };
  return p;
}

DifferentiableProblem make_target_only_problem(double eps) {
  DifferentiableProblem p;
  p.dim = 1;
  p.objective = [](const Vector&) { return 0.0; };
  p.objective_grad = [](const Vector& t) -> Vector { return Vector::Zero(t.size()); };
  p.constraint = [eps](const Vector& t) { return t[0] - eps; };
  p.constraint_grad = [](const Vector& t) -> Vector {
    Vector g = Vector::Zero(t.size());
    g[0] = 1.0;
    return g;
  };
  return p;
}

}  // namespace mdmm
