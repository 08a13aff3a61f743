#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include "egmu/model.hpp"

namespace egmu {

// Exponential tilt of the benchmark at dual point theta, with the moments
// the solvers need. All quantities come out of one LogSumExp pass, so they
// stay finite for arbitrarily large scores theta'x_i.
struct DualPoint {
  VectorXd theta;
  double log_z = 0.0;
  VectorXd w;      // tilted weights, normalized
  VectorXd mu;     // X'w
  MatrixXd sigma;  // weighted covariance of exposure rows, PSD
};

struct TiltMoments {
  double log_z = 0.0;
  VectorXd w;
  VectorXd mu;
};

// log sum_i b_i exp(s_i), shifted by max s_i. Exact under any additive
// shift of the scores up to the shift itself.
double log_weighted_sum_exp(const VectorXd& scores, const VectorXd& b);

// log Z(theta) = log sum_i b_i exp(theta'x_i).
double log_partition(const Instance& inst, const VectorXd& theta);

// Full moment evaluation. Covariance uses the centered two-pass form
// sum_i w_i (x_i - mu)(x_i - mu)', which keeps it PSD in floating point.
DualPoint tilt(const Instance& inst, const VectorXd& theta);

// Same without the covariance; first-order methods should prefer this.
TiltMoments tilt_moments(const Instance& inst, const VectorXd& theta);

// Solves (sigma + delta I) d = g by Cholesky. Returns nullopt when the
// factorization reports a non-positive pivot; callers escalate delta.
std::optional<VectorXd> regularized_solve(const MatrixXd& sigma,
                                          const VectorXd& g, double delta);

struct NoSignChange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RootOptions {
  double hint = 0.0;        // expansion starts at hint +- 1
  double f_tol = 1e-12;     // accept when |phi| <= f_tol * scale
  double scale = 1.0;       // magnitude of the constraint phi encodes
  int max_doublings = 100;  // bracket expansion bound
};

namespace detail {

// Brent's method on a bracket with phi(lo), phi(hi) of opposite sign.
// Classic inverse-quadratic / secant / bisection scheme (Brent 1973).
template <class F>
double brent_on_bracket(F&& phi, double a, double b, double fa, double fb,
                        double f_tol) {
  if (std::abs(fa) < std::abs(fb)) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  double c = a, fc = fa;
  double d = b - a, e = d;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int it = 0; it < 200; ++it) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * eps * std::abs(b) + 0.5 * eps;
    const double xm = 0.5 * (c - b);
    if (std::abs(fb) <= f_tol || std::abs(xm) <= tol1) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      const double s = fb / fa;
      double p, q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc, r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q),
                             std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = phi(b);
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
  }
  return b;
}

}  // namespace detail

// Root of a strictly monotone phi. Brackets by doubling an interval around
// opt.hint, then refines with Brent. Throws NoSignChange when no sign
// change appears within max_doublings expansions.
template <class F>
double find_root_monotone(F&& phi, const RootOptions& opt = {}) {
  const double f_tol = opt.f_tol * opt.scale;
  const auto eval = [&](double x) {
    const double v = phi(x);
    if (std::isnan(v))
      throw std::invalid_argument("find_root_monotone: phi returned NaN at " +
                                  std::to_string(x));
    return v;
  };
  double f0 = eval(opt.hint);
  if (std::abs(f0) <= f_tol) return opt.hint;

  double r = 1.0;
  double lo = opt.hint - r, hi = opt.hint + r;
  double flo = eval(lo), fhi = eval(hi);
  for (int k = 0;; ++k) {
    if (std::abs(flo) <= f_tol) return lo;
    if (std::abs(fhi) <= f_tol) return hi;
    if ((flo < 0.0) != (fhi < 0.0)) break;
    if (k >= opt.max_doublings)
      throw NoSignChange(
          "find_root_monotone: no sign change within expansion bound");
    r *= 2.0;
    lo = opt.hint - r;
    hi = opt.hint + r;
    flo = eval(lo);
    fhi = eval(hi);
  }
  return detail::brent_on_bracket(eval, lo, hi, flo, fhi, f_tol);
}

}  // namespace egmu
