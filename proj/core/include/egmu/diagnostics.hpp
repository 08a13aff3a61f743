#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

#include "egmu/model.hpp"

namespace egmu {

// sum_i w_i log(w_i / b_i), with 0 log 0 = 0. Expects w on the simplex and
// b strictly positive.
double kl_divergence(const VectorXd& w, const VectorXd& b);

struct KktReport {
  VectorXd exposure_residual;  // t - X'w
  // Spread of log(w_i/b_i) - theta'x_i across assets. Zero exactly when w
  // is the tilt of b at theta; entries with w_i = 0 are skipped.
  double stationarity_spread = 0.0;
  double kl_value = 0.0;
  VectorXd inequality_slacks;  // bound - a'w per halfspace, negative = violated
};

KktReport kkt_check(const Instance& inst, const VectorXd& w,
                    const VectorXd& theta, const VectorXd& t,
                    const ConstraintSet& sets = {});

struct OracleNotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleConfig {
  enum class Method { Auto, ProjectedGradient, Grid };
  Method method = Method::Auto;  // Auto picks Grid for n_assets <= 4
  int grid_points = 200;         // simplex subdivisions per axis
  long max_iter = 1000000;
  double tol = 1e-10;
};

// Deliberately plain reference solver used to audit the dual machinery:
// projected gradient descent on KL(w||b) over the feasible polytope, with
// the projection done by Euclidean Dykstra over simplex, affine rows and
// halfspaces. Shares no tilt or moment code with the solvers. For
// n_assets <= 4 an exhaustive simplex grid search is available.
VectorXd brute_force_oracle(const Instance& inst, const VectorXd& t,
                            const ConstraintSet& sets = {},
                            const OracleConfig& cfg = {});

// Euclidean projection helpers backing the oracle; exposed so output
// audits can sample the feasible region independently of the solvers.
VectorXd project_simplex_euclid(const VectorXd& v);  // Duchi et al. 2008
VectorXd project_halfspace_euclid(const VectorXd& v, const VectorXd& a,
                                  double tau);

// Euclidean Dykstra onto simplex /\ {X't w = t} /\ equality rows /\
// halfspaces. Returns the projection after at most max_cycles passes.
VectorXd project_feasible_euclid(const VectorXd& v, const Instance& inst,
                                 const std::optional<VectorXd>& t,
                                 const ConstraintSet& sets, int max_cycles = 2000,
                                 double tol = 1e-12);

}  // namespace egmu
