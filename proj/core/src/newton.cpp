#include "egmu/newton.hpp"

#include <cmath>
#include <cstdio>
#include <deque>

namespace egmu {

namespace {

struct Mode {
  bool elastic = false;
  double lambda_soft = 0.0;
};

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double dual_value(const Instance& inst, const VectorXd& t,
                  const VectorXd& theta, double log_z, const Mode& mode) {
  double v = theta.dot(t) - log_z;
  if (mode.elastic) v -= theta.squaredNorm() / (2.0 * mode.lambda_soft);
  return v;
}

// Newton direction with ridge escalation. The ridge starts at
// max(1e-10, 1e-6 tr(sigma)/K) and grows tenfold up to 1e-2 tr(sigma)/K;
// every attempt must produce an ascent direction.
std::optional<VectorXd> ascent_direction(const MatrixXd& h, const VectorXd& g,
                                         double trace_sigma) {
  const double k = static_cast<double>(g.size());
  const double floor = std::max(1e-10, 1e-6 * trace_sigma / k);
  const double cap = 1e-2 * trace_sigma / k;

  double delta = 0.0;
  for (;;) {
    auto d = regularized_solve(h, g, delta);
    if (d && g.dot(*d) > 0.0) return d;
    if (delta == 0.0)
      delta = floor;
    else if (delta * 10.0 <= cap)
      delta *= 10.0;
    else
      return std::nullopt;
  }
}

SolveReport solve_dual(const Instance& inst, const VectorXd& t,
                       const NewtonConfig& cfg, const Mode& mode) {
  SolveReport rep;
  const Eigen::Index k = inst.n_factors();
  VectorXd theta =
      cfg.theta0.size() == k && cfg.theta0.size() > 0
          ? cfg.theta0
          : VectorXd::Zero(k);

  bool used_gradient_fallback = false;
  std::deque<double> theta_norms;   // divergence heuristic window
  constexpr int kWindow = 10;

  DualPoint dp = tilt(inst, theta);
  for (int iter = 0;; ++iter) {
    VectorXd g = t - dp.mu;
    if (mode.elastic) g -= theta / mode.lambda_soft;
    const double gnorm = g.norm();
    const double value = dual_value(inst, t, theta, dp.log_z, mode);
    rep.trace.push_back({gnorm, 0.0, dp.log_z, value});

    if (gnorm <= cfg.tol) {
      rep.status = SolveStatus::Converged;
      rep.iterations = iter;
      break;
    }
    if (iter >= cfg.max_iter) {
      rep.status = SolveStatus::MaxIter;
      rep.iterations = iter;
      rep.message = "gradient norm " + short_num(gnorm) + " after " +
                    std::to_string(iter) + " iterations";
      break;
    }
    if (!mode.elastic) {
      // Infeasible targets push theta out along a recession direction while
      // the gradient stays bounded away from zero. The norm-doubling test
      // distinguishes that blow-up from a legitimately large solution.
      theta_norms.push_back(theta.norm());
      if (theta_norms.size() > kWindow + 1) theta_norms.pop_front();
      if (theta.norm() > cfg.divergence_theta_norm &&
          gnorm > 1e3 * cfg.tol && theta_norms.size() == kWindow + 1 &&
          theta_norms.back() >= 2.0 * theta_norms.front()) {
        rep.status = SolveStatus::DivergedInfeasible;
        rep.iterations = iter;
        rep.message = "theta norm " + short_num(theta.norm()) +
                      " with gradient norm " + short_num(gnorm) +
                      "; targets likely outside the attainable hull";
        break;
      }
    }

    MatrixXd h = dp.sigma;
    if (mode.elastic) h.diagonal().array() += 1.0 / mode.lambda_soft;
    auto dir = ascent_direction(h, g, dp.sigma.trace());
    if (!dir) {
      rep.status = SolveStatus::SingularSystem;
      rep.iterations = iter;
      rep.message = "curvature matrix unusable even with maximal ridge";
      break;
    }

    // Backtracking line search on the dual itself, sharing the LogSumExp
    // path with the gradient so accepted steps are genuinely monotone.
    // Near the optimum the required Armijo gain falls below the rounding
    // noise of the dual value; demanding it there rejects perfectly good
    // Newton steps, so the test degrades to "did not get worse than noise".
    const double noise = 1e-14 * (1.0 + std::abs(value));
    bool accepted = false;
    for (;;) {
      double gtd = g.dot(*dir);
      double step = 1.0;
      while (step >= 1e-12) {
        const VectorXd cand = theta + step * *dir;
        const double cand_log_z = log_partition(inst, cand);
        const double cand_value =
            dual_value(inst, t, cand, cand_log_z, mode);
        const double needed = cfg.armijo_c * step * gtd;
        if (cand_value >= value + needed ||
            (needed <= noise && cand_value >= value - noise)) {
          theta = cand;
          rep.trace.back().step = step;
          accepted = true;
          break;
        }
        step *= cfg.backtrack;
      }
      if (accepted) break;
      if (!used_gradient_fallback) {
        // Stalled Newton step; try plain ascent once before giving up.
        used_gradient_fallback = true;
        dir = g;
        continue;
      }
      break;
    }
    if (!accepted) {
      rep.status = SolveStatus::MaxIter;
      rep.iterations = iter;
      rep.message = "line search stalled below minimum step";
      break;
    }
    dp = tilt(inst, theta);
  }

  rep.theta = theta;
  rep.weights = dp.w;
  rep.residual = t - dp.mu;
  if (mode.elastic) rep.residual -= theta / mode.lambda_soft;
  return rep;
}

}  // namespace

SolveReport solve_equality(const Instance& inst, const VectorXd& t,
                           const NewtonConfig& cfg) {
  return solve_dual(inst, t, cfg, {});
}

SolveReport solve_elastic(const Instance& inst, const VectorXd& t,
                          double lambda_soft, const NewtonConfig& cfg) {
  if (!(lambda_soft > 0.0))
    throw std::invalid_argument("solve_elastic: lambda_soft must be > 0");
  return solve_dual(inst, t, cfg, {true, lambda_soft});
}

Sensitivity sensitivity(const Instance& inst, const DualPoint& point,
                        std::optional<double> lambda_soft) {
  const Eigen::Index k = point.sigma.rows();
  MatrixXd m = point.sigma;
  if (lambda_soft) m.diagonal().array() += 1.0 / *lambda_soft;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  const double lead = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  const double cutoff = 1e-12 * std::max(1.0, lead);
  if (eig.eigenvalues().minCoeff() <= cutoff) {
    std::vector<Eigen::Index> null_cols;
    for (Eigen::Index j = 0; j < k; ++j)
      if (eig.eigenvalues()[j] <= cutoff) null_cols.push_back(j);
    MatrixXd basis(k, static_cast<Eigen::Index>(null_cols.size()));
    for (std::size_t j = 0; j < null_cols.size(); ++j)
      basis.col(static_cast<Eigen::Index>(j)) =
          eig.eigenvectors().col(null_cols[j]);
    throw SingularCovariance(
        "exposure covariance is rank deficient; sensitivities are not "
        "defined along the returned null directions",
        std::move(basis));
  }

  Sensitivity out;
  out.dtheta_dt = m.llt().solve(MatrixXd::Identity(k, k));
  const MatrixXd centered =
      inst.exposures.rowwise() - point.mu.transpose();
  out.dw_dt = point.w.asDiagonal() * (centered * out.dtheta_dt);
  return out;
}

}  // namespace egmu
