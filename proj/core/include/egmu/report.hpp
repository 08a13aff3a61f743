#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace egmu {

enum class SolveStatus {
  Converged,
  MaxIter,  // iteration or cycle budget exhausted
  DivergedInfeasible,
  SingularSystem,
  EmptyIntersectionSuspected,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::DivergedInfeasible: return "DivergedInfeasible";
    case SolveStatus::SingularSystem: return "SingularSystem";
    case SolveStatus::EmptyIntersectionSuspected:
      return "EmptyIntersectionSuspected";
  }
  return "Unknown";
}

// One row per accepted iteration (Newton, proximal gradient) or per cycle
// (IPF, Dykstra). residual_norm is the solver's own stopping quantity.
// objective is the dual value for dual methods and KL(w||b) for the
// projection methods; log_z is 0 where no partition function is tracked.
struct TraceRow {
  double residual_norm = 0.0;
  double step = 0.0;
  double log_z = 0.0;
  double objective = 0.0;
};

struct SolveReport {
  Eigen::VectorXd weights;
  Eigen::VectorXd theta;     // dual variables, one per constraint
  Eigen::VectorXd residual;  // per-constraint residuals at the returned point
  int iterations = 0;
  std::vector<TraceRow> trace;
  SolveStatus status = SolveStatus::MaxIter;
  std::string message;
};

}  // namespace egmu
