#include "egmu/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace egmu {

double kl_divergence(const VectorXd& w, const VectorXd& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) acc += w[i] * std::log(w[i] / b[i]);
  }
  return acc;
}

KktReport kkt_check(const Instance& inst, const VectorXd& w,
                    const VectorXd& theta, const VectorXd& t,
                    const ConstraintSet& sets) {
  KktReport rep;
  rep.exposure_residual = t - inst.exposures.transpose() * w;
  rep.kl_value = kl_divergence(w, inst.benchmark);

  // At an exact tilt, log(w_i/b_i) - theta'x_i is -log Z for every asset;
  // any spread measures departure from stationarity. Zero weights carry no
  // stationarity information and are skipped.
  const VectorXd scores = inst.exposures * theta;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    const double c = std::log(w[i] / inst.benchmark[i]) - scores[i];
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  rep.stationarity_spread = (hi >= lo) ? hi - lo : 0.0;

  rep.inequality_slacks.resize(
      static_cast<Eigen::Index>(sets.halfspaces.size()));
  for (std::size_t j = 0; j < sets.halfspaces.size(); ++j)
    rep.inequality_slacks[static_cast<Eigen::Index>(j)] =
        sets.halfspaces[j].bound - sets.halfspaces[j].coefficients.dot(w);
  return rep;
}

VectorXd project_simplex_euclid(const VectorXd& v) {
  // Sort-based threshold method (Duchi et al. 2008).
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    css += u[static_cast<std::size_t>(i)];
    const double cand = (css - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] > cand) {
      tau = cand;
      rho = static_cast<int>(i) + 1;
    }
  }
  (void)rho;
  return (v.array() - tau).max(0.0);
}

VectorXd project_halfspace_euclid(const VectorXd& v, const VectorXd& a,
                                  double tau) {
  const double excess = a.dot(v) - tau;
  if (excess <= 0.0) return v;
  return v - (excess / a.squaredNorm()) * a;
}

namespace {

struct AffineBlock {
  MatrixXd a;    // N x m stacked constraint directions
  VectorXd rhs;  // m
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> gram;  // of a'a

  bool empty() const { return a.cols() == 0; }

  VectorXd project(const VectorXd& v) const {
    if (empty()) return v;
    const VectorXd r = a.transpose() * v - rhs;
    return v - a * gram.solve(r);
  }
};

AffineBlock build_affine(const Instance& inst,
                         const std::optional<VectorXd>& t,
                         const ConstraintSet& sets) {
  AffineBlock blk;
  const Eigen::Index n = inst.n_assets();
  const Eigen::Index m =
      (t ? inst.n_factors() : 0) +
      static_cast<Eigen::Index>(sets.equalities.size());
  blk.a.resize(n, m);
  blk.rhs.resize(m);
  Eigen::Index c = 0;
  if (t) {
    for (Eigen::Index k = 0; k < inst.n_factors(); ++k, ++c) {
      blk.a.col(c) = inst.exposures.col(k);
      blk.rhs[c] = (*t)[k];
    }
  }
  for (const auto& row : sets.equalities) {
    blk.a.col(c) = row.coefficients;
    blk.rhs[c] = row.bound;
    ++c;
  }
  if (m > 0) blk.gram.compute(blk.a.transpose() * blk.a);
  return blk;
}

}  // namespace

VectorXd project_feasible_euclid(const VectorXd& v, const Instance& inst,
                                 const std::optional<VectorXd>& t,
                                 const ConstraintSet& sets, int max_cycles,
                                 double tol) {
  const AffineBlock affine = build_affine(inst, t, sets);
  const std::size_t n_half = sets.halfspaces.size();
  const std::size_t n_sets = 2 + n_half;  // affine, halfspaces..., simplex

  // Dykstra with per-set increments (Boyle and Dykstra 1986); plain cyclic
  // projection would land in the intersection but not at the nearest point.
  VectorXd x = v;
  std::vector<VectorXd> incr(n_sets, VectorXd::Zero(v.size()));
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    const VectorXd before = x;
    std::size_t s = 0;
    auto pass = [&](auto&& proj) {
      const VectorXd y = x + incr[s];
      VectorXd z = proj(y);
      incr[s] = y - z;
      x = std::move(z);
      ++s;
    };
    pass([&](const VectorXd& y) { return affine.project(y); });
    for (std::size_t jj = 0; jj < n_half; ++jj)
      pass([&](const VectorXd& y) {
        return project_halfspace_euclid(y, sets.halfspaces[jj].coefficients,
                                        sets.halfspaces[jj].bound);
      });
    pass([&](const VectorXd& y) { return project_simplex_euclid(y); });

    // The iterate can sit still for a few cycles while the corrections
    // keep moving, so small displacement alone is not convergence; demand
    // feasibility of everything the simplex pass does not enforce.
    double viol = 0.0;
    if (!affine.empty())
      viol = (affine.a.transpose() * x - affine.rhs).lpNorm<Eigen::Infinity>();
    for (const auto& hs : sets.halfspaces)
      viol = std::max(viol, hs.coefficients.dot(x) - hs.bound);
    if ((x - before).lpNorm<Eigen::Infinity>() <= tol &&
        viol <= std::max(tol, 1e-11))
      break;
  }
  return x;
}

namespace {

double kl_clamped(const VectorXd& w, const VectorXd& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double wi = std::max(w[i], 0.0);
    if (wi > 0.0) acc += wi * std::log(wi / b[i]);
  }
  return acc;
}

VectorXd oracle_pgd(const Instance& inst, const std::optional<VectorXd>& t,
                    const ConstraintSet& sets, const OracleConfig& cfg) {
  const double floor = 1e-300;
  auto grad = [&](const VectorXd& w) {
    return ((w.cwiseMax(floor).array() / inst.benchmark.array()).log() + 1.0)
        .matrix();
  };

  VectorXd w = project_feasible_euclid(inst.benchmark, inst, t, sets);
  double f = kl_clamped(w, inst.benchmark);
  double eta = 1.0;
  int stalled = 0;

  for (long iter = 0; iter < cfg.max_iter; ++iter) {
    const VectorXd g = grad(w);
    // The feasibility projection carries ~1e-13 of jitter; differences
    // below this floor say nothing about descent, only about rounding.
    const double noise = 1e-12 * (1.0 + std::abs(f));
    VectorXd cand;
    double fc = 0.0, d2 = 0.0;
    // Armijo on the projected step; the quadratic upper bound is the
    // classic acceptance test for projected gradient. Once the promised
    // descent sinks under the noise floor the test is uninformative and
    // "no worse than noise" keeps the step size from collapsing on it.
    for (;;) {
      cand = project_feasible_euclid(w - eta * g, inst, t, sets);
      const VectorXd d = cand - w;
      d2 = d.squaredNorm();
      fc = kl_clamped(cand, inst.benchmark);
      const double bound = g.dot(d) + d2 / (2.0 * eta);
      if (fc <= f + bound || (bound >= -noise && fc <= f + noise)) break;
      eta *= 0.5;
      if (eta < 1e-18)
        throw OracleNotConverged("oracle line search collapsed");
    }
    const double mapping = std::sqrt(d2) / eta;
    const double improve = f - fc;
    w = cand;
    f = fc;
    if (mapping <= cfg.tol) {
      // A huge step can fake a small mapping; confirm at unit step.
      if (eta <= 1.0) return w;
      const VectorXd chk = project_feasible_euclid(w - grad(w), inst, t, sets);
      if ((chk - w).norm() <= cfg.tol) return w;
    }
    if (improve <= noise) {
      // Progress at the jitter floor; accept once the gradient mapping is
      // small even if the nominal tol was stricter.
      if (++stalled >= 200 && mapping <= 1e-7) return w;
    } else {
      stalled = 0;
    }
    eta = std::min(eta * 1.25, 1e6);
  }
  throw OracleNotConverged(
      "projected gradient oracle exhausted its iteration budget");
}

void enumerate_compositions(int n, int total, std::vector<int>& parts,
                            const std::function<void()>& emit) {
  if (n == 1) {
    parts.back() = total;
    emit();
    return;
  }
  for (int i = 0; i <= total; ++i) {
    parts[parts.size() - static_cast<std::size_t>(n)] = i;
    enumerate_compositions(n - 1, total - i, parts, emit);
  }
}

VectorXd oracle_grid(const Instance& inst, const std::optional<VectorXd>& t,
                     const ConstraintSet& sets, const OracleConfig& cfg) {
  const int n = static_cast<int>(inst.n_assets());
  const int g = cfg.grid_points;

  // Feasibility slack scales with the grid pitch: a grid point cannot be
  // expected to satisfy the targets any better than the pitch allows.
  VectorXd feas_tol = VectorXd::Zero(inst.n_factors());
  for (Eigen::Index k = 0; k < inst.n_factors(); ++k) {
    const double range = inst.exposures.col(k).maxCoeff() -
                         inst.exposures.col(k).minCoeff();
    feas_tol[k] = std::max(range, 1.0) * static_cast<double>(n) / g;
  }

  double best = std::numeric_limits<double>::infinity();
  VectorXd best_w;
  std::vector<int> parts(static_cast<std::size_t>(n), 0);
  VectorXd w(n);
  enumerate_compositions(n, g, parts, [&]() {
    for (int i = 0; i < n; ++i)
      w[i] = static_cast<double>(parts[static_cast<std::size_t>(i)]) / g;
    if (t) {
      const VectorXd r = inst.exposures.transpose() * w - *t;
      for (Eigen::Index k = 0; k < r.size(); ++k)
        if (std::abs(r[k]) > feas_tol[k]) return;
    }
    for (const auto& hs : sets.halfspaces)
      if (hs.coefficients.dot(w) > hs.bound + 1e-12) return;
    for (const auto& eq : sets.equalities)
      if (std::abs(eq.coefficients.dot(w) - eq.bound) > 1e-2) return;
    const double v = kl_clamped(w, inst.benchmark);
    if (v < best) {
      best = v;
      best_w = w;
    }
  });
  if (best_w.size() == 0)
    throw OracleNotConverged("no grid point met the feasibility slack");
  return best_w;
}

}  // namespace

VectorXd brute_force_oracle(const Instance& inst, const VectorXd& t,
                            const ConstraintSet& sets,
                            const OracleConfig& cfg) {
  const std::optional<VectorXd> targets =
      t.size() > 0 ? std::optional<VectorXd>(t) : std::nullopt;
  const bool use_grid =
      cfg.method == OracleConfig::Method::Grid ||
      (cfg.method == OracleConfig::Method::Auto && inst.n_assets() <= 4);
  if (!targets && sets.size() == 0) return inst.benchmark;
  return use_grid ? oracle_grid(inst, targets, sets, cfg)
                  : oracle_pgd(inst, targets, sets, cfg);
}

}  // namespace egmu
