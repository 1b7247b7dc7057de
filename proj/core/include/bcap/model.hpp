#pragma once

#include <string>
#include <vector>

#include "bcap/linalg.hpp"

namespace bcap {

// Per-subject multivariate time series plus covariates. q counts the
// intercept column when present (the model-ready convention is
// x_i = (1, covariates...)).
struct TimeSeriesDataset {
  int p = 0;
  int q = 0;
  std::vector<std::string> ids;      // size n
  std::vector<Matrix> signals;       // Y_i: T_i x p
  std::vector<Vector> covariates;    // x_i: length q

  int n() const { return static_cast<int>(signals.size()); }
  int T(int i) const { return static_cast<int>(signals[static_cast<size_t>(i)].rows()); }
  Matrix covariate_matrix() const;   // n x q

  // T_i >= 2, q >= 1, consistent shapes, finite entries, and (for n >= 1)
  // full-column-rank covariates. Throws ValidationError.
  void validate() const;
};

// Mean-removed, Sigma*^{-1/2}-whitened signals with the reference point and
// per-subject second moments cached.
struct WhitenedDataset {
  TimeSeriesDataset base;             // mean-removed originals
  SpdMatrix sigma_star;               // pooled second moment (+ jitter)
  Matrix sigma_star_inv_sqrt;
  std::vector<Matrix> ystar;          // Y*_i: T_i x p
  std::vector<Matrix> second_moment;  // Shat_i = (1/T_i) Y*_i' Y*_i, p x p

  int n() const { return static_cast<int>(ystar.size()); }
  int p() const { return sigma_star.dim(); }
  int q() const { return base.q; }
  int T(int i) const { return static_cast<int>(ystar[static_cast<size_t>(i)].rows()); }
};

// Remove subject means, pool second moments into Sigma*, whiten. jitter*I is
// added to Sigma* before inversion; with jitter = 0 a rank-deficient pooled
// moment raises DegenerateError advising a jitter. n = 0 yields Sigma* = I.
WhitenedDataset whiten(const TimeSeriesDataset& data, double jitter = 0.0);

// Unconstrained sampler state: U (p x d), lambda (n x d log-variances),
// B (d x q), tau = log sigma^2.
struct ExpandedState {
  Matrix u;
  Matrix lambda;
  Matrix b;
  double tau = 0.0;
};

struct Hyperparameters {
  SpdMatrix psi;          // MACG row covariance, default I_p
  Matrix psi_inv;         // cached
  double b_sd = 2.5;      // elementwise Gaussian sd on B
  double sigma2_rate = 1.0;  // Exp rate on sigma^2 (mean 1/rate)

  static Hyperparameters defaults(int p);
  static Hyperparameters with_psi(SpdMatrix psi, double b_sd = 2.5,
                                  double sigma2_rate = 1.0);
};

// Log posterior density of the expanded state, up to an additive constant:
//   sum_{i,l,k} [ -lambda_ik/2 - c_ilk^2 exp(-lambda_ik)/2 ],  c_il = Gamma_U' y*_il
// + sum_i [ -(d/2) tau - exp(-tau)/2 ||lambda_i - B x_i||^2 ]
// - tr(U' Psi^{-1} U)/2
// - ||B||_F^2 / (2 b_sd^2)
// - sigma2_rate * exp(tau) + tau
// Throws NumericError naming the term that went non-finite.
double log_posterior(const ExpandedState& state, const WhitenedDataset& data,
                     const Hyperparameters& hyper);

// Exact gradient of log_posterior in the same shape as the state.
ExpandedState grad_log_posterior(const ExpandedState& state,
                                 const WhitenedDataset& data,
                                 const Hyperparameters& hyper);

// Combined evaluation used by the sampler hot loop; grad may be null.
double log_posterior_grad(const ExpandedState& state,
                          const WhitenedDataset& data,
                          const Hyperparameters& hyper, ExpandedState* grad);

}  // namespace bcap
