#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "egmu/model.hpp"
#include "egmu/report.hpp"

namespace egmu {

struct TargetOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateDirection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProjectionResult {
  VectorXd weights;
  double multiplier = 0.0;  // exponent on the constraint direction
};

// I-projection of u onto {w : a'w = tau} within the simplex: the minimizer
// of KL(w||u) has the form w ~ u . exp(alpha a) with alpha solving the
// strictly monotone residual a'w(alpha) = tau. Requires tau strictly inside
// (min a_i, max a_i) unless u already satisfies the constraint.
ProjectionResult project_hyperplane(const VectorXd& u, const VectorXd& a,
                                    double tau, double hint = 0.0);

// I-projection onto {w : a'w <= tau}. Feasible u is returned unchanged
// with multiplier 0; otherwise the boundary projection applies with
// multiplier lambda > 0, and w ~ u . exp(-lambda a).
ProjectionResult project_halfspace(const VectorXd& u, const VectorXd& a,
                                   double tau, double hint = 0.0);

struct CycleConfig {
  double tol = 1e-8;  // max over per-constraint residuals
  int max_cycles = 10000;
};

// Builds the factor rows a_k = X e_k, tau_k = t_k used by the cyclic
// methods to express X'w = t.
std::vector<LinearConstraint> factor_constraints(const Instance& inst,
                                                 const VectorXd& t);

// Iterative proportional fitting: cycles 1-D hyperplane projections until
// every residual is within tol. Valid for equality constraints only; the
// returned theta accumulates the per-constraint exponents, so the weights
// retain the exact form b . exp(sum_k theta_k a_k) / Z.
SolveReport solve_ipf(const Instance& inst,
                      const std::vector<LinearConstraint>& constraints,
                      const CycleConfig& cfg = {});

// State of the Bregman form of Dykstra's scheme. Corrections live in log
// space so many cycles cannot underflow them; a vanished correction is a
// zero vector here.
struct DykstraState {
  VectorXd log_w;                          // current iterate, normalized
  std::vector<VectorXd> log_corrections;   // one per constraint set
  std::vector<double> multipliers;         // last exponent applied per set
  VectorXd violations;                     // per-set residuals, last cycle
  int cycle_count = 0;
};

DykstraState make_dykstra_state(const Instance& inst,
                                const ConstraintSet& sets);

// One full pass over equalities then halfspaces, in input order. Unlike
// plain cyclic projection, the correction terms make the iterate converge
// to the KL projection onto the intersection (Dykstra 1983; Bauschke and
// Lewis 2000 for the Bregman case).
void dykstra_cycle(DykstraState& state, const ConstraintSet& sets);

// Runs cycles until every equality residual and halfspace violation is
// within tol. Halfspace violations count only on the infeasible side.
// Reports EmptyIntersectionSuspected when the worst violation stops
// improving for 50 consecutive cycles while still above tol.
SolveReport solve_dykstra(const Instance& inst, const ConstraintSet& sets,
                          const CycleConfig& cfg = {});

}  // namespace egmu
