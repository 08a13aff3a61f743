#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

#include "egmu/model.hpp"
#include "egmu/numerics.hpp"
#include "egmu/report.hpp"

namespace egmu {

struct NewtonConfig {
  double tol = 1e-8;       // stop when the dual gradient norm falls below
  double armijo_c = 1e-4;  // sufficient-increase fraction
  double backtrack = 0.5;  // step shrink factor
  int max_iter = 200;
  VectorXd theta0;  // empty means start at zero
  // Infeasible targets make the dual unbounded; flag when theta blows past
  // this norm while the gradient stays large. Rescale for exotic units.
  double divergence_theta_norm = 1e3;
};

// Damped Newton ascent on the dual L(theta) = theta't - log Z(theta).
// Expects intercept columns stripped; see strip_intercept.
SolveReport solve_equality(const Instance& inst, const VectorXd& t,
                           const NewtonConfig& cfg = {});

// Soft-target variant, dual penalized by |theta|^2 / (2 lambda_soft). The
// objective is strongly concave, so this always terminates Converged or
// MaxIter; at the solution lambda_soft * (t - X'w) = theta.
SolveReport solve_elastic(const Instance& inst, const VectorXd& t,
                          double lambda_soft, const NewtonConfig& cfg = {});

struct SingularCovariance : std::runtime_error {
  explicit SingularCovariance(const std::string& what, MatrixXd basis)
      : std::runtime_error(what), null_space(std::move(basis)) {}
  MatrixXd null_space;  // columns spanning the degenerate directions
};

struct Sensitivity {
  MatrixXd dtheta_dt;  // K x K
  MatrixXd dw_dt;      // N x K, columns sum to zero
};

// Local derivatives of the solution with respect to the targets at a
// converged dual point: dtheta/dt = sigma^-1 (equality) or
// (sigma + I/lambda_soft)^-1 (elastic), and
// dw/dt = diag(w) (X - 1 mu') dtheta/dt.
// Throws SingularCovariance in equality mode when sigma is rank deficient.
Sensitivity sensitivity(const Instance& inst, const DualPoint& point,
                        std::optional<double> lambda_soft = std::nullopt);

}  // namespace egmu
