#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bcap/hmc.hpp"
#include "bcap/model.hpp"

namespace bcap {

// One posterior draw. u/tau are the raw chain state; gamma is the polar
// projection of u. After align(), gamma/lambda/b live in the aligned,
// ordered indexing while u stays raw (the CSV record).
struct Draw {
  Matrix u;       // p x d
  Matrix gamma;   // p x d, orthonormal
  Matrix lambda;  // n x d
  Matrix b;       // d x q
  double tau = 0.0;
  double lp = 0.0;
  bool divergent = false;

  double sigma() const { return std::exp(tau / 2.0); }
};

struct ChainDraws {
  std::vector<Draw> draws;
  double mean_accept = 0.0;
  double step_size = 0.0;
  int divergences = 0;
};

struct AlignmentReference {
  int chain = -1;  // provenance when the reference is a stored draw
  int draw = -1;
  Matrix gamma;
};

struct PosteriorDraws {
  int p = 0, d = 0, n = 0, q = 0;
  std::vector<ChainDraws> chains;

  bool aligned = false;
  AlignmentReference reference;

  bool ordered = false;
  std::vector<int> component_order;  // order[k] = pre-ordering column index
  Vector v_between;                  // V^(k), post-ordering

  int total_draws() const;
  int total_divergences() const;
  // flat iteration in (chain, draw) order
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& c : chains)
      for (const auto& dr : c.draws) f(dr);
  }
};

// Signed permutation: aligned column k = sign[k] * source column perm[k].
struct SignedPerm {
  std::vector<int> perm;
  std::vector<int> sign;
};

// Greedy assignment maximizing sum_k |<ref_k, cols_{perm[k]}>|: repeatedly
// take the largest remaining |inner product|; ties broken by lowest index.
SignedPerm greedy_match(const Matrix& cols, const Matrix& reference);

// Multi-chain HMC over the expanded state. Draws are recorded post-warmup,
// each U polar-projected to Gamma, then all chains aligned to the
// max-posterior draw and merged into one PosteriorDraws.
// jobs > 1 runs chains in parallel (per-chain RNG streams; result identical).
PosteriorDraws fit(const WhitenedDataset& data, int d,
                   const Hyperparameters& hyper, const HmcConfig& config,
                   int jobs = 1);

// Sign/permutation alignment of every draw to a reference orthonormal
// matrix (default: the draw with the highest log posterior). lambda columns
// and B rows are permuted together with gamma's columns; signs only touch
// gamma. Idempotent.
PosteriorDraws align(PosteriorDraws draws,
                     std::optional<Matrix> reference = std::nullopt);

// Reindex components so the between-subject variability of the posterior
// mean log-variances, V^(1) >= ... >= V^(d), is decreasing; ties keep the
// original order.
PosteriorDraws order_components(PosteriorDraws draws);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PosteriorSummary {
  int p = 0, d = 0, n = 0, q = 0;
  double level = 0.95;
  bool bonferroni = false;

  std::vector<ParameterSummary> params;  // gamma_*, B_*, lambda_*, sigma

  // structured posterior means/medians for downstream metric code
  Matrix gamma_mean, gamma_median;  // p x d
  Matrix b_mean, b_median;          // d x q
  double sigma_mean = 0.0, sigma_median = 0.0;

  std::vector<int> component_order;
  Vector v_between;
  int divergences = 0;
  std::vector<double> accept_rates;
  std::vector<double> step_sizes;
  AlignmentReference reference;

  const ParameterSummary& find(const std::string& name) const;  // ArgumentError if absent
};

// Equal-tailed quantile summaries per scalar. Loading (gamma) intervals use
// the Bonferroni endpoints 0.025/p and 1 - 0.025/p when the flag is set;
// all other intervals use (1 +- level)/2.
PosteriorSummary summarize(const PosteriorDraws& draws, double level = 0.95,
                           bool bonferroni = false);

// Chain CSVs: one file per chain named <prefix>chain_<c>.csv, one row per
// draw, header naming every scalar (U_r_c, lambda_i_k, B_k_j, tau, lp,
// divergent), 1-based indices, 17 significant digits. States are written as
// stored (alignment rotates U consistently with gamma, so reading back and
// re-projecting reproduces the aligned gammas).
std::vector<std::string> write_draws_csv(const PosteriorDraws& draws,
                                         const std::string& prefix);
PosteriorDraws read_draws_csv(const std::vector<std::string>& chain_files);

}  // namespace bcap
