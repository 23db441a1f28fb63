#include "svem/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svem {

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: requires x > 0");
  double acc = 0.0;
  // Recurrence psi(x) = psi(x+1) - 1/x until the asymptotic series is accurate.
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  static constexpr double coeff[6] = {
      -1.0 / 12.0, 1.0 / 120.0, -1.0 / 252.0, 1.0 / 240.0, -1.0 / 132.0, 691.0 / 32760.0,
  };
  double series = std::log(x) - 0.5 * inv;
  double p = inv2;
  for (double c : coeff) {
    series += c * p;
    p *= inv2;
  }
  return acc + series;
}

double expected_log_v(const BetaState& s) { return digamma(s.alpha) - digamma(s.alpha + s.beta); }

double expected_log_1mv(const BetaState& s) { return digamma(s.beta) - digamma(s.alpha + s.beta); }

double gaussian_log_density(const Point2& residual, const MixtureParams& p) {
  const double s2 = p.sigma * p.sigma;
  return -residual.squaredNorm() / (2.0 * s2) - 0.5 * p.dim * std::log(2.0 * M_PI * s2);
}

double uniform_log_density(const MixtureParams& p) { return -std::log(p.e_max); }

EStepWeights e_step_weights(const Point2& residual, const MixtureParams& p, const BetaState& s) {
  const double ls = expected_log_v(s) + gaussian_log_density(residual, p);
  const double lc = expected_log_1mv(s) + uniform_log_density(p);
  const double m = std::max(ls, lc);
  const double es = std::exp(ls - m);
  const double ec = std::exp(lc - m);
  const double w_static = es / (es + ec);
  return {w_static, 1.0 - w_static};
}

EStepWeights snap_weights(const EStepWeights& w, double tol) {
  if (w.w_changed < tol) return {1.0, 0.0};
  if (w.w_static < tol) return {0.0, 1.0};
  return w;
}

double elbo_landmark(const Point2& residual, const MixtureParams& p, const EStepWeights& w) {
  return w.w_static * gaussian_log_density(residual, p) + w.w_changed * uniform_log_density(p);
}

namespace {
BetaState capped(double alpha, double beta, double cap) {
  const double total = alpha + beta;
  if (total > cap) {
    const double f = cap / total;
    alpha *= f;
    beta *= f;
  }
  return {alpha, beta};
}
}  // namespace

BetaState beta_update(const BetaState& s, double responsibility, double cap) {
  return capped(s.alpha + responsibility, s.beta + (1.0 - responsibility), cap);
}

BetaState apply_pseudo_change(const BetaState& s, double delta, double cap) {
  return capped(s.alpha, s.beta + delta, cap);
}

double update_change_magnitude(double l_est, double residual_norm, double rate) {
  return (1.0 - rate) * l_est + rate * residual_norm;
}

}  // namespace svem
