#pragma once

#include <string>
#include <vector>

#include "bcap/sampler.hpp"

namespace bcap {

// (1/n) sum_i T_i (log|Diag(L_i)| - log|L_i|): nonnegative by Hadamard's
// inequality, 0 iff every L_i is diagonal. DomainError on non-PD input.
double log_dfd(const std::vector<Matrix>& lambda_hats,
               const std::vector<int>& t_counts);

// Average of log_dfd over draws, with L_i^(t) = Gamma_t' Shat_i Gamma_t.
// DomainError naming the subject when a projected moment is not PD.
double posterior_mean_dfd(const PosteriorDraws& draws,
                          const WhitenedDataset& data);

struct DfdCandidate {
  int d = 0;
  double dfd_mean = 0.0;
};

struct DfdReport {
  std::vector<DfdCandidate> candidates;
  double cutoff = 1.5;
  int chosen_d = 1;

  std::string to_json() const;
};

// Fit every candidate d = 1..d_max (fresh sampler run each, shared
// whitening) and choose the largest d whose posterior-mean DfD is <= cutoff
// (ties accept; d=1 always qualifies).
DfdReport select_d(const WhitenedDataset& data, int d_max, double cutoff,
                   const Hyperparameters& hyper, const HmcConfig& config,
                   int jobs = 1);

}  // namespace bcap
