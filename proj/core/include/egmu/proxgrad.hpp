#pragma once

#include <Eigen/Dense>

#include "egmu/model.hpp"
#include "egmu/report.hpp"

namespace egmu {

enum class RobustKind { L2Ball, LinfBox };

// Symmetric uncertainty set of radius rho around the target. The dual sees
// it through its support function: rho |theta|_2 for the ball and
// rho |theta|_1 for the box.
struct RobustSet {
  RobustKind kind = RobustKind::L2Ball;
  double rho = 0.0;
};

struct ProxConfig {
  double tol = 1e-8;  // distance from the gradient to the subdifferential
  int max_iter = 5000;
  double step0 = 0.0;  // 0 picks 1/R^2 from the centered exposure rows
};

// Euclidean projection onto the set.
VectorXd euclid_project(const RobustSet& set, const VectorXd& z);

// prox of eta * support(set) via the Moreau identity:
// prox(z) = z - eta * project(z / eta). Soft-thresholds coordinates for the
// box, shrinks the norm for the ball; exact zeros are produced, not
// approximated.
VectorXd prox_support(const RobustSet& set, const VectorXd& z, double eta);

double support_value(const RobustSet& set, const VectorXd& theta);

// Distance from g to the subdifferential of the support function at theta.
// This is the natural stationarity measure for the robust dual and is
// computable in closed form for both set kinds.
double subgradient_distance(const RobustSet& set, const VectorXd& theta,
                            const VectorXd& g);

// Proximal gradient ascent on the robust dual
//   L(theta) = theta't0 - log Z(theta) - support(theta):
// theta+ = prox(theta + eta (t0 - X'w(theta))). The step backtracks until
// the ascent quadratic bound holds, which keeps L non-decreasing along
// accepted iterates. rho = 0 reduces to the equality dual.
SolveReport solve_robust(const Instance& inst, const VectorXd& t0,
                         const RobustSet& set, const ProxConfig& cfg = {});

}  // namespace egmu
