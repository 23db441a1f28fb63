#pragma once

#include "svem/geometry.hpp"

namespace svem {

// Beta-distributed object consistency state. alpha counts "unchanged"
// evidence, beta counts "changed" evidence.
struct BetaState {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
};

// Parameters of the Gaussian-Uniform bimodal landmark measurement model.
struct MixtureParams {
  double sigma = 0.05;  // isotropic std of the Gaussian (unchanged) mode [m]
  double e_max = 5.0;   // support bound of the uniform (changed) mode [m]
  int dim = 2;          // residual dimension
};

// Posterior mode probabilities of a single landmark measurement.
struct EStepWeights {
  double w_static = 1.0;   // E[pi]
  double w_changed = 0.0;  // E[1-pi]
};

inline constexpr double kDefaultCountCap = 50.0;

// Weights closer to 0/1 than this are rounded so that a near-certain
// static landmark behaves exactly like a plain Gaussian factor.
inline constexpr double kWeightSnap = 1e-3;

double digamma(double x);  // throws std::domain_error for x <= 0

// E[log v] = psi(alpha) - psi(alpha + beta) for v ~ Beta(alpha, beta).
double expected_log_v(const BetaState& s);
// E[log(1 - v)] = psi(beta) - psi(alpha + beta).
double expected_log_1mv(const BetaState& s);

double gaussian_log_density(const Point2& residual, const MixtureParams& p);
// Constant density 1/e_max on the residual norm.
double uniform_log_density(const MixtureParams& p);

// Mean-field posterior over the per-measurement changed/unchanged indicator,
// computed in log space.
EStepWeights e_step_weights(const Point2& residual, const MixtureParams& p, const BetaState& s);

EStepWeights snap_weights(const EStepWeights& w, double tol = kWeightSnap);

// Variational lower bound of one landmark measurement, additive constant dropped.
double elbo_landmark(const Point2& residual, const MixtureParams& p, const EStepWeights& w);

// Conjugate pseudo-count update; counts rescaled proportionally when their
// sum exceeds the cap so the state stays revisable.
BetaState beta_update(const BetaState& s, double responsibility, double cap = kDefaultCountCap);

// Penalize an in-view object that produced no associated observation.
BetaState apply_pseudo_change(const BetaState& s, double delta, double cap = kDefaultCountCap);

// Exponentially weighted estimate of the object-level change magnitude.
double update_change_magnitude(double l_est, double residual_norm, double rate);

}  // namespace svem
