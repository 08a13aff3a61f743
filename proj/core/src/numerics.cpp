#include "egmu/numerics.hpp"

#include <cmath>

namespace egmu {

double log_weighted_sum_exp(const VectorXd& scores, const VectorXd& b) {
  const double m = scores.maxCoeff();
  // b_i <= 1 and s_i - m <= 0, so no term can overflow.
  const double z = (b.array() * (scores.array() - m).exp()).sum();
  return std::log(z) + m;
}

double log_partition(const Instance& inst, const VectorXd& theta) {
  if (inst.n_factors() == 0) return std::log(inst.benchmark.sum());
  const VectorXd scores = inst.exposures * theta;
  return log_weighted_sum_exp(scores, inst.benchmark);
}

TiltMoments tilt_moments(const Instance& inst, const VectorXd& theta) {
  TiltMoments out;
  const VectorXd scores = inst.n_factors() == 0
                              ? VectorXd::Zero(inst.n_assets())
                              : VectorXd(inst.exposures * theta);
  const double m = scores.maxCoeff();
  out.w = inst.benchmark.array() * (scores.array() - m).exp();
  const double z = out.w.sum();
  out.log_z = std::log(z) + m;
  out.w /= z;
  out.mu = inst.exposures.transpose() * out.w;
  return out;
}

DualPoint tilt(const Instance& inst, const VectorXd& theta) {
  TiltMoments m = tilt_moments(inst, theta);
  DualPoint out;
  out.theta = theta;
  out.log_z = m.log_z;
  out.w = std::move(m.w);
  out.mu = std::move(m.mu);

  // Centered two-pass covariance: PSD by construction, unlike
  // E[xx'] - mu mu' which can go slightly indefinite in floating point.
  const MatrixXd centered = inst.exposures.rowwise() - out.mu.transpose();
  out.sigma = centered.transpose() *
              (centered.array().colwise() * out.w.array()).matrix();
  out.sigma = (0.5 * (out.sigma + out.sigma.transpose())).eval();
  return out;
}

std::optional<VectorXd> regularized_solve(const MatrixXd& sigma,
                                          const VectorXd& g, double delta) {
  MatrixXd h = sigma;
  if (delta != 0.0) h.diagonal().array() += delta;
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) return std::nullopt;
  VectorXd d = llt.solve(g);
  if (!d.allFinite()) return std::nullopt;
  // A Cholesky of a nearly singular matrix can succeed yet return noise;
  // the residual test turns that into a clean failure the callers' ridge
  // escalation knows how to handle.
  if ((h * d - g).norm() > 1e-8 * g.norm() + 1e-300) return std::nullopt;
  return d;
}

}  // namespace egmu
