#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace egmu {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A portfolio tilting problem: strictly positive benchmark weights on the
// simplex and one exposure row per asset. Factor order is fixed by the
// column order of `exposures`.
struct Instance {
  VectorXd benchmark;  // N, strictly positive, sums to 1
  MatrixXd exposures;  // N x K

  Eigen::Index n_assets() const { return benchmark.size(); }
  Eigen::Index n_factors() const { return exposures.cols(); }
};

enum class TargetMode { Equality, Elastic, RobustL2, RobustLinf };

struct TargetSpec {
  VectorXd target;  // K, one entry per exposure column
  TargetMode mode = TargetMode::Equality;
  double lambda_soft = 0.0;  // Elastic only, > 0
  double rho = 0.0;          // Robust modes only, >= 0
};

// One linear restriction a'w (= or <=) bound. The budget constraint 1'w = 1
// is implicit everywhere and must never be stored as a row.
struct LinearConstraint {
  std::string name;
  VectorXd coefficients;
  double bound = 0.0;
};

struct ConstraintSet {
  std::vector<LinearConstraint> equalities;
  std::vector<LinearConstraint> halfspaces;  // a'w <= bound

  std::size_t size() const { return equalities.size() + halfspaces.size(); }
};

struct ValidationResult {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const { return violations.empty(); }
};

struct InconsistentIntercept : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegeneratePrior : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Nonnegative, sums to 1 within tol.
bool is_simplex_point(const VectorXd& w, double tol = 1e-12);

// Checks positivity, normalization, shape and finiteness. Benchmark sums
// within 1e-8 of 1 but further than 1e-12 produce a warning only; use
// renormalized() to repair those before solving.
ValidationResult validate_instance(const Instance& inst);

// Rejects constant-coefficient rows (they restate the budget or an
// intercept) and rows of mismatched length.
ValidationResult validate_constraints(const ConstraintSet& sets,
                                      Eigen::Index n_assets);

Instance renormalized(const Instance& inst);

enum class FeasibilityVerdict { Infeasible, Unknown };

// Necessary conditions only: a target outside a column's range cannot be
// reached by any simplex point. Unknown is not a feasibility certificate.
FeasibilityVerdict feasibility_screen(const Instance& inst, const VectorXd& t);

struct ShiftedProblem {
  Instance instance;
  VectorXd target;
};

// Translates every exposure column: X - 1 d', t - d. Solutions and dual
// variables are unchanged by this gauge; only log Z moves.
ShiftedProblem shift_exposures(const Instance& inst, const VectorXd& t,
                               const VectorXd& d);

struct StrippedProblem {
  Instance instance;
  VectorXd target;
  std::vector<Eigen::Index> removed_columns;
  std::vector<double> removed_constants;
};

// Removes columns that are constant across assets. Such a column pins its
// exposure to the constant for every simplex point, so it carries no
// information; a target that disagrees with the constant is unsatisfiable
// and raises InconsistentIntercept.
StrippedProblem strip_intercept(const Instance& inst, const VectorXd& t);

// Geometric blend of benchmark and previous holdings for turnover-aware
// runs: normalize(b^(1/(1+gamma)) . prev^(gamma/(1+gamma))), computed in
// log space. gamma = 0 returns b exactly; gamma -> inf approaches prev.
VectorXd effective_prior(const VectorXd& benchmark, const VectorXd& previous,
                         double gamma);

}  // namespace egmu
