#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bcap/rng.hpp"

namespace bcap {

struct HmcConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  int leapfrog_steps = 32;
  double target_accept = 0.8;
  std::uint64_t seed = 0;

  void validate() const;  // ValidationError on nonsense
};

// A differentiable log density: returns log pi(x); fills *grad when non-null.
// May throw NumericError, which the sampler treats as a divergent point.
using LogDensity =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct HmcChainResult {
  std::vector<Eigen::VectorXd> draws;  // post-warmup states
  std::vector<double> lp;
  std::vector<std::uint8_t> divergent;
  double mean_accept = 0.0;  // post-warmup mean acceptance probability
  double step_size = 0.0;    // adapted
  int divergences = 0;       // post-warmup count
};

// One chain: dual-averaging step-size adaptation during warmup (target
// acceptance from config, fixed leapfrog step count, unit diagonal mass),
// then `draws` recorded iterations at the adapted step size.
// |Delta H| > kDivergenceThreshold or a non-finite trajectory marks the
// transition divergent. Throws InitializationError when the initial point
// has non-finite log density.
HmcChainResult run_hmc_chain(const LogDensity& target,
                             const Eigen::VectorXd& init,
                             const HmcConfig& config, int chain_index);

inline constexpr double kDivergenceThreshold = 1000.0;

// -- pieces exposed for tests --------------------------------------------

// Fixed-step leapfrog integration from (x, rho). ok = false when the
// trajectory left the region where the target is finite.
struct LeapfrogResult {
  Eigen::VectorXd x;
  Eigen::VectorXd rho;
  double lp = 0.0;
  bool ok = false;
};
LeapfrogResult leapfrog(const LogDensity& target, Eigen::VectorXd x,
                        Eigen::VectorXd rho, double step, int n_steps);

// Heuristic initial step size: doubles/halves until the acceptance
// probability of an n_steps leapfrog trajectory crosses 1/2.  Probing with
// the same trajectory length the sampler will use keeps the estimate honest
// even when the initial point sits near a mode, where a single step sees
// almost no energy error at any step size.
double find_initial_step_size(const LogDensity& target,
                              const Eigen::VectorXd& init, Rng& rng,
                              int n_steps);

}  // namespace bcap
