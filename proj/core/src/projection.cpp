#include "egmu/projection.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "egmu/diagnostics.hpp"
#include "egmu/numerics.hpp"

namespace egmu {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double constraint_scale(const VectorXd& a, double tau) {
  return std::max({1.0, std::abs(tau), a.cwiseAbs().maxCoeff()});
}

// Normalized weights u . exp(alpha a) through one LogSumExp pass.
VectorXd tilted(const VectorXd& log_u, const VectorXd& a, double alpha) {
  VectorXd s = log_u + alpha * a;
  const double m = s.maxCoeff();
  VectorXd w = (s.array() - m).exp();
  w /= w.sum();
  return w;
}

}  // namespace

ProjectionResult project_hyperplane(const VectorXd& u, const VectorXd& a,
                                    double tau, double hint) {
  const double scale = constraint_scale(a, tau);
  const double r0 = a.dot(u) - tau;
  if (std::abs(r0) <= 1e-12 * scale) return {u, 0.0};

  const double lo = a.minCoeff(), hi = a.maxCoeff();
  if (hi - lo <= 1e-14 * std::max(1.0, std::abs(hi)))
    throw DegenerateDirection(
        "projection direction is constant across the support (value " +
        fmt(lo) + "); every weight vector already has a'w = " + fmt(lo));
  if (!(tau > lo && tau < hi))
    throw TargetOutOfRange("bound " + fmt(tau) +
                           " is outside the attainable range (" + fmt(lo) +
                           ", " + fmt(hi) + ")");

  const VectorXd log_u = u.array().log();
  // a'w(alpha) is strictly increasing in alpha: its derivative is the
  // variance of a under w(alpha), positive since a is not constant.
  const auto residual = [&](double alpha) {
    return a.dot(tilted(log_u, a, alpha)) - tau;
  };
  RootOptions opt;
  opt.hint = hint;
  opt.scale = scale;
  double alpha = 0.0;
  try {
    alpha = find_root_monotone(residual, opt);
  } catch (const NoSignChange&) {
    throw TargetOutOfRange("bound " + fmt(tau) +
                           " is numerically unattainable on the support");
  }
  return {tilted(log_u, a, alpha), alpha};
}

ProjectionResult project_halfspace(const VectorXd& u, const VectorXd& a,
                                   double tau, double hint) {
  const double scale = constraint_scale(a, tau);
  if (a.dot(u) - tau <= 1e-15 * scale) return {u, 0.0};

  const double lo = a.minCoeff();
  if (tau < lo)
    throw TargetOutOfRange("bound " + fmt(tau) +
                           " lies below the smallest coefficient " + fmt(lo) +
                           "; the half-space misses the simplex support");

  // Infeasible input: project onto the boundary hyperplane. The multiplier
  // is the positive exponent on -a, so reuse the hyperplane solve with the
  // sign flipped.
  ProjectionResult res = project_hyperplane(u, a, tau, -hint);
  res.multiplier = -res.multiplier;
  return res;
}

std::vector<LinearConstraint> factor_constraints(const Instance& inst,
                                                 const VectorXd& t) {
  std::vector<LinearConstraint> rows;
  rows.reserve(static_cast<std::size_t>(inst.n_factors()));
  for (Eigen::Index k = 0; k < inst.n_factors(); ++k)
    rows.push_back({"factor_" + std::to_string(k), inst.exposures.col(k),
                    t[k]});
  return rows;
}

SolveReport solve_ipf(const Instance& inst,
                      const std::vector<LinearConstraint>& constraints,
                      const CycleConfig& cfg) {
  const Eigen::Index n = inst.n_assets();
  const auto j = constraints.size();
  SolveReport rep;
  rep.theta = VectorXd::Zero(static_cast<Eigen::Index>(j));
  rep.residual = VectorXd::Zero(static_cast<Eigen::Index>(j));

  // Every projection multiplies the weights by exp(alpha a_k); tracking the
  // accumulated scores keeps the iterate in closed exponential form and
  // avoids compounding normalization error across cycles.
  VectorXd scores = VectorXd::Zero(n);
  const VectorXd log_b = inst.benchmark.array().log();
  std::vector<double> hints(j, 0.0);

  auto weights_now = [&]() {
    VectorXd s = log_b + scores;
    const double m = s.maxCoeff();
    VectorXd w = (s.array() - m).exp();
    w /= w.sum();
    return w;
  };

  VectorXd w = inst.benchmark;
  for (int cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
    double largest_step = 0.0;
    for (std::size_t k = 0; k < j; ++k) {
      ProjectionResult pr =
          project_hyperplane(w, constraints[k].coefficients,
                             constraints[k].bound, hints[k]);
      scores += pr.multiplier * constraints[k].coefficients;
      rep.theta[static_cast<Eigen::Index>(k)] += pr.multiplier;
      hints[k] = pr.multiplier;
      largest_step = std::max(largest_step, std::abs(pr.multiplier));
      w = std::move(pr.weights);
    }
    w = weights_now();

    double worst = 0.0;
    for (std::size_t k = 0; k < j; ++k) {
      const double r = constraints[k].coefficients.dot(w) -
                       constraints[k].bound;
      rep.residual[static_cast<Eigen::Index>(k)] = r;
      worst = std::max(worst, std::abs(r));
    }
    rep.iterations = cycle;
    rep.trace.push_back({worst, largest_step,
                         log_weighted_sum_exp(scores, inst.benchmark),
                         kl_divergence(w, inst.benchmark)});
    if (worst <= cfg.tol) {
      rep.status = SolveStatus::Converged;
      rep.weights = w;
      return rep;
    }
  }
  rep.status = SolveStatus::MaxIter;
  rep.weights = w;
  rep.message = "cycle budget exhausted with residual " +
                std::to_string(rep.residual.cwiseAbs().maxCoeff());
  return rep;
}

DykstraState make_dykstra_state(const Instance& inst,
                                const ConstraintSet& sets) {
  DykstraState st;
  st.log_w = inst.benchmark.array().log();
  st.log_corrections.assign(sets.size(), VectorXd::Zero(inst.n_assets()));
  st.multipliers.assign(sets.size(), 0.0);
  st.violations = VectorXd::Zero(static_cast<Eigen::Index>(sets.size()));
  return st;
}

void dykstra_cycle(DykstraState& state, const ConstraintSet& sets) {
  const auto apply = [&](const LinearConstraint& c, std::size_t idx,
                         bool equality) {
    // y = normalize(w . q), in logs to survive long runs.
    VectorXd log_y = state.log_w + state.log_corrections[idx];
    const double m = log_y.maxCoeff();
    VectorXd y = (log_y.array() - m).exp();
    y /= y.sum();

    ProjectionResult pr =
        equality
            ? project_hyperplane(y, c.coefficients, c.bound,
                                 state.multipliers[idx])
            : project_halfspace(y, c.coefficients, c.bound,
                                state.multipliers[idx]);
    state.multipliers[idx] = pr.multiplier;

    VectorXd log_z = pr.weights.array().log();
    // q <- (w . q) / z, shifted so the largest correction exponent is 0;
    // the scheme is invariant to a common factor on each correction.
    VectorXd log_q = state.log_w + state.log_corrections[idx] - log_z;
    log_q.array() -= log_q.maxCoeff();
    state.log_corrections[idx] = std::move(log_q);
    state.log_w = std::move(log_z);
  };

  std::size_t idx = 0;
  for (const auto& c : sets.equalities) apply(c, idx++, true);
  for (const auto& c : sets.halfspaces) apply(c, idx++, false);

  const VectorXd w = state.log_w.array().exp();
  idx = 0;
  for (const auto& c : sets.equalities)
    state.violations[static_cast<Eigen::Index>(idx++)] =
        std::abs(c.coefficients.dot(w) - c.bound);
  for (const auto& c : sets.halfspaces)
    state.violations[static_cast<Eigen::Index>(idx++)] =
        std::max(0.0, c.coefficients.dot(w) - c.bound);
  ++state.cycle_count;
}

SolveReport solve_dykstra(const Instance& inst, const ConstraintSet& sets,
                          const CycleConfig& cfg) {
  DykstraState st = make_dykstra_state(inst, sets);
  SolveReport rep;
  rep.theta = VectorXd::Zero(static_cast<Eigen::Index>(sets.size()));
  rep.residual = VectorXd::Zero(static_cast<Eigen::Index>(sets.size()));

  double best = std::numeric_limits<double>::infinity();
  int stalled_cycles = 0;

  for (int cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
    dykstra_cycle(st, sets);
    const double worst =
        st.violations.size() > 0 ? st.violations.maxCoeff() : 0.0;
    const VectorXd w = st.log_w.array().exp();
    rep.iterations = cycle;
    rep.trace.push_back({worst, 0.0, 0.0, kl_divergence(w, inst.benchmark)});

    if (worst <= cfg.tol) {
      rep.status = SolveStatus::Converged;
      break;
    }
    // A feasible intersection keeps improving geometrically; a persistent
    // plateau above tol is the signature of an empty one.
    if (worst < best * (1.0 - 1e-9)) {
      best = worst;
      stalled_cycles = 0;
    } else if (++stalled_cycles >= 50) {
      rep.status = SolveStatus::EmptyIntersectionSuspected;
      rep.message = "violation stuck near " + std::to_string(worst) +
                    " for 50 cycles; the constraint sets may not intersect";
      break;
    }
    if (cycle == cfg.max_cycles) {
      rep.status = SolveStatus::MaxIter;
      rep.message = "cycle budget exhausted with violation " +
                    std::to_string(worst);
    }
  }

  rep.weights = st.log_w.array().exp();
  for (std::size_t k = 0; k < sets.size(); ++k)
    rep.theta[static_cast<Eigen::Index>(k)] = st.multipliers[k];
  rep.residual = st.violations;
  return rep;
}

}  // namespace egmu
