#include "egmu/model.hpp"

#include <cmath>
#include <sstream>

namespace egmu {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

bool is_simplex_point(const VectorXd& w, double tol) {
  if (w.size() == 0) return false;
  if (!w.allFinite()) return false;
  if ((w.array() < -tol).any()) return false;
  return std::abs(w.sum() - 1.0) <= tol;
}

ValidationResult validate_instance(const Instance& inst) {
  ValidationResult res;
  const auto n = inst.benchmark.size();
  const auto k = inst.exposures.cols();

  if (n < 1) res.violations.push_back("benchmark is empty");
  if (inst.exposures.rows() != n)
    res.violations.push_back("exposure rows (" +
                             std::to_string(inst.exposures.rows()) +
                             ") do not match benchmark length (" +
                             std::to_string(n) + ")");
  if (k < 1) res.violations.push_back("no exposure columns");
  if (k > n && n >= 1)
    res.violations.push_back("more factors (" + std::to_string(k) +
                             ") than assets (" + std::to_string(n) + ")");
  if (!inst.benchmark.allFinite())
    res.violations.push_back("benchmark has non-finite entries");
  if (!inst.exposures.allFinite())
    res.violations.push_back("exposures have non-finite entries");

  if (res.violations.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (inst.benchmark[i] <= 0.0) {
        res.violations.push_back("benchmark weight " + std::to_string(i) +
                                 " is not strictly positive (" +
                                 fmt(inst.benchmark[i]) + ")");
        break;
      }
    }
    const double gap = std::abs(inst.benchmark.sum() - 1.0);
    if (gap > 1e-8) {
      res.violations.push_back("benchmark does not sum to 1 (|sum-1| = " +
                               fmt(gap) + ")");
    } else if (gap > 1e-12) {
      res.warnings.push_back("benchmark renormalized (|sum-1| = " + fmt(gap) +
                             ")");
    }
  }
  return res;
}

ValidationResult validate_constraints(const ConstraintSet& sets,
                                      Eigen::Index n_assets) {
  ValidationResult res;
  auto check = [&](const LinearConstraint& c, const char* kind) {
    if (c.coefficients.size() != n_assets) {
      res.violations.push_back(std::string(kind) + " row '" + c.name +
                               "' has " + std::to_string(c.coefficients.size()) +
                               " coefficients, expected " +
                               std::to_string(n_assets));
      return;
    }
    if (!c.coefficients.allFinite() || !std::isfinite(c.bound)) {
      res.violations.push_back(std::string(kind) + " row '" + c.name +
                               "' has non-finite entries");
      return;
    }
    const double span =
        c.coefficients.maxCoeff() - c.coefficients.minCoeff();
    const double mag = c.coefficients.cwiseAbs().maxCoeff();
    if (span <= 1e-14 * std::max(1.0, mag))
      res.violations.push_back(
          std::string(kind) + " row '" + c.name +
          "' is constant across assets; the budget is implicit and "
          "intercept-like rows must not be stored");
  };
  for (const auto& c : sets.equalities) check(c, "equality");
  for (const auto& c : sets.halfspaces) check(c, "halfspace");
  return res;
}

Instance renormalized(const Instance& inst) {
  Instance out = inst;
  out.benchmark /= out.benchmark.sum();
  return out;
}

FeasibilityVerdict feasibility_screen(const Instance& inst,
                                      const VectorXd& t) {
  // X'w is a convex combination of exposure rows, so each coordinate is
  // confined to its column range.
  for (Eigen::Index k = 0; k < inst.exposures.cols(); ++k) {
    const double lo = inst.exposures.col(k).minCoeff();
    const double hi = inst.exposures.col(k).maxCoeff();
    if (t[k] < lo || t[k] > hi) return FeasibilityVerdict::Infeasible;
  }
  return FeasibilityVerdict::Unknown;
}

ShiftedProblem shift_exposures(const Instance& inst, const VectorXd& t,
                               const VectorXd& d) {
  ShiftedProblem out;
  out.instance.benchmark = inst.benchmark;
  out.instance.exposures = inst.exposures.rowwise() - d.transpose();
  out.target = t - d;
  return out;
}

StrippedProblem strip_intercept(const Instance& inst, const VectorXd& t) {
  const auto n = inst.exposures.rows();
  const auto k = inst.exposures.cols();
  std::vector<Eigen::Index> keep;
  StrippedProblem out;

  for (Eigen::Index j = 0; j < k; ++j) {
    const auto col = inst.exposures.col(j);
    const double c = col.mean();
    const double dev = (col.array() - c).abs().maxCoeff();
    const double scale = std::max(1.0, col.cwiseAbs().maxCoeff());
    if (dev <= 1e-12 * scale) {
      // Constant column: 1'w = 1 pins its exposure to c for every w.
      if (std::abs(t[j] - c) > 1e-9 * std::max(1.0, std::abs(c)))
        throw InconsistentIntercept(
            "target for constant column " + std::to_string(j) + " is " +
            fmt(t[j]) + " but the column forces " + fmt(c));
      out.removed_columns.push_back(j);
      out.removed_constants.push_back(c);
    } else {
      keep.push_back(j);
    }
  }

  out.instance.benchmark = inst.benchmark;
  out.instance.exposures.resize(n, static_cast<Eigen::Index>(keep.size()));
  out.target.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.instance.exposures.col(static_cast<Eigen::Index>(j)) =
        inst.exposures.col(keep[j]);
    out.target[static_cast<Eigen::Index>(j)] = t[keep[j]];
  }
  return out;
}

VectorXd effective_prior(const VectorXd& benchmark, const VectorXd& previous,
                         double gamma) {
  if (gamma < 0.0)
    throw std::invalid_argument("effective_prior: gamma must be nonnegative");
  if (gamma == 0.0) return benchmark;
  if (previous.size() != benchmark.size())
    throw DegeneratePrior("previous holdings length " +
                          std::to_string(previous.size()) +
                          " does not match benchmark length " +
                          std::to_string(benchmark.size()));
  for (Eigen::Index i = 0; i < previous.size(); ++i)
    if (!(previous[i] > 0.0) || !std::isfinite(previous[i]))
      throw DegeneratePrior("previous holding " + std::to_string(i) +
                            " is not strictly positive (" + fmt(previous[i]) +
                            ")");

  // Geometric blend in log space; a max shift keeps the exponentials tame
  // for extreme gamma.
  const double wb = 1.0 / (1.0 + gamma);
  const double wp = gamma / (1.0 + gamma);
  VectorXd log_blend =
      wb * benchmark.array().log() + wp * previous.array().log();
  log_blend.array() -= log_blend.maxCoeff();
  VectorXd blend = log_blend.array().exp();
  return blend / blend.sum();
}

}  // namespace egmu
