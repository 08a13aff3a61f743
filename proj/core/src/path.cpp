#include "egmu/path.hpp"

#include <cmath>

#include "egmu/numerics.hpp"

namespace egmu {

namespace {

// Velocity M(theta)^-1 delta of the solution curve, M = sigma or
// sigma + I/lambda_soft. Falls back to the Newton ridge rule when the
// equality-mode matrix cannot be factored; the caller logs the event.
VectorXd path_velocity(const Instance& inst, const VectorXd& theta,
                       const VectorXd& delta, const PathConfig& cfg,
                       double lambda, PathTrace& trace) {
  DualPoint dp = tilt(inst, theta);
  MatrixXd m = dp.sigma;
  if (cfg.lambda_soft) m.diagonal().array() += 1.0 / *cfg.lambda_soft;

  if (auto v = regularized_solve(m, delta, 0.0)) return *v;

  const double k = static_cast<double>(m.rows());
  const double tr = dp.sigma.trace();
  double ridge = std::max(1e-10, 1e-6 * tr / k);
  const double cap = 1e-2 * tr / k;
  for (;;) {
    if (auto v = regularized_solve(m, delta, ridge)) {
      trace.ridge_events.push_back(lambda);
      return *v;
    }
    if (ridge * 10.0 > cap)
      throw SingularAlongPath(
          "step system lost rank at lambda = " + std::to_string(lambda),
          lambda);
    ridge *= 10.0;
  }
}

}  // namespace

PathTrace trace_path(const Instance& inst, const VectorXd& t0,
                     const VectorXd& delta, const PathConfig& cfg) {
  if (!(cfg.h > 0.0) || cfg.h > 1.0)
    throw std::invalid_argument("trace_path: h must lie in (0, 1]");
  if (cfg.start_at_zero && !cfg.lambda_soft)
    throw std::invalid_argument(
        "trace_path: starting from theta = 0 is only sound in elastic mode");

  PathTrace trace;
  trace.h = cfg.h;
  trace.integrator = cfg.integrator;
  trace.corrected = cfg.correct;

  VectorXd theta;
  if (cfg.start_at_zero) {
    theta = VectorXd::Zero(inst.n_factors());
  } else {
    SolveReport start =
        cfg.lambda_soft
            ? solve_elastic(inst, t0, *cfg.lambda_soft, cfg.newton)
            : solve_equality(inst, t0, cfg.newton);
    if (start.status != SolveStatus::Converged)
      throw InfeasibleStart(std::string("initial solve ended ") +
                            to_string(start.status) +
                            "; cannot anchor the path at lambda = 0");
    theta = start.theta;
  }

  const auto record = [&](double lambda, const VectorXd& th) {
    DualPoint dp = tilt(inst, th);
    VectorXd target = t0 + lambda * delta;
    trace.samples.push_back({lambda, th, dp.w, target - dp.mu});
  };

  // Up to 3 Newton iterations pull a predicted node back onto the curve;
  // warm starts keep this cheap.
  const auto recenter = [&](double lambda, VectorXd th) {
    NewtonConfig c = cfg.newton;
    c.theta0 = std::move(th);
    c.max_iter = 3;
    const VectorXd target = t0 + lambda * delta;
    SolveReport r = cfg.lambda_soft
                        ? solve_elastic(inst, target, *cfg.lambda_soft, c)
                        : solve_equality(inst, target, c);
    return r.theta;
  };

  record(0.0, theta);
  double lambda = 0.0;
  while (lambda < 1.0 - 1e-12) {
    const double h = std::min(cfg.h, 1.0 - lambda);
    VectorXd step;
    if (cfg.integrator == Integrator::Euler) {
      step = h * path_velocity(inst, theta, delta, cfg, lambda, trace);
    } else {
      const VectorXd k1 = path_velocity(inst, theta, delta, cfg, lambda, trace);
      const VectorXd mid = theta + (0.5 * h) * k1;
      const VectorXd k2 =
          path_velocity(inst, mid, delta, cfg, lambda + 0.5 * h, trace);
      step = h * k2;
    }
    theta += step;
    lambda = std::min(1.0, lambda + h);
    if (cfg.correct) theta = recenter(lambda, std::move(theta));
    record(lambda, theta);
  }
  return trace;
}

}  // namespace egmu
