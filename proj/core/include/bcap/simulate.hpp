#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bcap/model.hpp"

namespace bcap {

// Ground truth attached to a synthetic dataset. The two covariate-linked
// components are gamma_true's columns; b_true rows are their regression
// coefficients on (1, x1, x2).
struct SimTruth {
  Matrix gamma_true;       // p x 2
  Matrix b_true;           // 2 x 3: (1, 0.5, -0.5), (1, -0.3, 0.3)
  double sigma_true = 0.5;
  int d_true = 2;

  // per-subject detail (not serialized to truth JSON)
  Matrix x;                        // n x 3 incl. intercept
  Matrix u_tilde;                  // n x p random effects
  std::vector<Matrix> sigma_i;     // p x p true covariances
};

// The fixed 5x5 population eigenbasis: first column 1/sqrt(5) * ones, the
// rest Householder-like columns, re-orthonormalized; columns 2 and 3 are the
// covariate-linked gamma^(1), gamma^(2).
Matrix p5_population_basis();
// The 5x3 log-variance coefficient matrix: rows (1,0,0), (1,0.5,-0.5),
// (1,-0.3,0.3), (1,0,0), (1,0,0).
Matrix p5_effect_matrix();

// p=5 generator: x_i1 ~ Bernoulli(1/2), x_i2 ~ N(0,1),
// lambda~_i = B~ x_i + u~_i with u~_ik ~ N(0, 0.5^2); subject eigenbasis
// rotates the three non-covariate columns by a Haar 3x3; Sigma_i is the
// spectral form; Y_il ~ N(0, Sigma_i) iid. Dataset covariates carry the
// leading intercept column (q = 3).
std::pair<TimeSeriesDataset, SimTruth> simulate_p5(int n, int T,
                                                   std::uint64_t seed);

// General p >= 5: Haar p x p population basis with columns 2-3
// covariate-linked, effect rows (1,0,0) everywhere else, per-subject Haar
// rotation of the complementary p-2 columns.
std::pair<TimeSeriesDataset, SimTruth> simulate_general(int p, int n, int T,
                                                        std::uint64_t seed);

// Intercepts the whitened-space model actually estimates:
// beta0_k + log(gamma^(k)' Sigma*^{-1} gamma^(k)) for k = 1, 2.
Vector true_tangent_intercept(const SimTruth& truth,
                              const SpdMatrix& sigma_star);

void write_truth_json(const SimTruth& truth, const std::string& path);
SimTruth read_truth_json(const std::string& path);  // per-subject fields empty

}  // namespace bcap
