#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "egmu/model.hpp"
#include "egmu/newton.hpp"

namespace egmu {

struct InfeasibleStart : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularAlongPath : std::runtime_error {
  SingularAlongPath(const std::string& what, double at)
      : std::runtime_error(what), lambda(at) {}
  double lambda;  // path position where the step system lost rank
};

enum class Integrator { Euler, RK2 };

struct PathConfig {
  double h = 0.02;
  Integrator integrator = Integrator::RK2;
  bool correct = true;  // re-center with up to 3 Newton iterations per node
  std::optional<double> lambda_soft;  // elastic family when set
  bool start_at_zero = false;         // skip the initial solve; elastic only
  NewtonConfig newton;                // initial solve and correctors
};

struct PathSample {
  double lambda = 0.0;
  VectorXd theta;
  VectorXd weights;
  VectorXd residual;  // t(lambda) - X'w
};

struct PathTrace {
  std::vector<PathSample> samples;  // includes both endpoints
  double h = 0.0;
  Integrator integrator = Integrator::RK2;
  bool corrected = true;
  std::vector<double> ridge_events;  // lambdas where the step system needed a ridge
};

// Integrates dtheta/dlambda = M(theta)^-1 (t1 - t0) along the segment
// t(lambda) = t0 + lambda (t1 - t0), M = sigma (+ I/lambda_soft), from a
// converged solve at t0. Euler is first order, the midpoint rule second;
// the optional corrector snaps each node back onto the solution curve.
PathTrace trace_path(const Instance& inst, const VectorXd& t0,
                     const VectorXd& delta, const PathConfig& cfg = {});

}  // namespace egmu
