#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bcap/sampler.hpp"
#include "bcap/simulate.hpp"

namespace bcap {

// Point-estimate metrics for one fitted replication, after matching the
// estimated components to the true ones by maximal |inner product| and
// sign-aligning gamma-hat.
struct ComponentMetric {
  int component = 0;             // true-component index (1-based)
  int matched_column = 0;        // estimated column it matched (1-based)
  double gamma_abs_inner = 0.0;  // |<gamma-hat, gamma>|
  double beta_mse = 0.0;         // ||beta-hat - beta||^2 / n_slopes
  double intercept_sq_err = 0.0; // (b0-hat - b0*)^2
};

struct ReplicationMetrics {
  std::vector<ComponentMetric> components;
  double sigma_abs_err = 0.0;  // |sigma-hat - sigma|
};

ReplicationMetrics component_metrics(const PosteriorSummary& summary,
                                     const SimTruth& truth,
                                     const SpdMatrix& sigma_star);

// Per-replication coverage indicators: parameter name -> interval contains
// truth. Gamma entries are checked after aligning draws to the truth, so the
// summary passed here must come from truth-aligned draws; beta0 rows compare
// against the whitened-space intercepts beta0_star.
std::vector<std::pair<std::string, bool>> interval_covers(
    const PosteriorSummary& summary, const SimTruth& truth,
    const Vector& beta0_star);

// long-format experiment record
struct MetricRow {
  std::string scenario;
  int replication = 0;
  std::string metric;
  double value = 0.0;
};
void write_metric_rows_csv(const std::vector<MetricRow>& rows,
                           const std::string& path);

struct ExperimentScenario {
  int p = 5;
  int n = 100;
  int T = 20;
  int d = 2;             // fitted d
  double level = 0.95;
  int replications = 10;
  std::string name() const;  // "p5_n100_T20"
};

// Simulate -> whiten -> fit -> align-to-truth -> summarize, per seed.
// Failed replications are recorded and excluded.
struct RecoveryResult {
  Vector mean_gamma_inner;   // length d_true
  Vector mean_beta_mse;      // length d_true
  Vector mean_intercept_se;  // length d_true
  double mean_sigma_err = 0.0;
  int completed = 0;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<MetricRow> rows;
};
RecoveryResult recovery_experiment(const ExperimentScenario& scenario,
                                   const std::vector<std::uint64_t>& seeds,
                                   const HmcConfig& hmc, int jobs = 1);

struct CoverageResult {
  // parameter -> fraction of completed replications covering truth
  std::vector<std::pair<std::string, double>> coverage;
  int completed = 0;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<MetricRow> rows;

  double find(const std::string& parameter) const;  // ArgumentError if absent
};
CoverageResult coverage_experiment(const ExperimentScenario& scenario,
                                   const std::vector<std::uint64_t>& seeds,
                                   const HmcConfig& hmc, int jobs = 1);

struct DfdScenario {
  int p = 5;
  int n = 400;
  int T = 40;
  int d_max = 3;
  double cutoff = 1.5;
  std::string name() const;
};

struct DfdAccuracyResult {
  double proportion_correct = 0.0;
  std::vector<int> chosen;  // per completed replication
  int completed = 0;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<MetricRow> rows;
};
DfdAccuracyResult dfd_accuracy_experiment(const DfdScenario& scenario,
                                          const std::vector<std::uint64_t>& seeds,
                                          const HmcConfig& hmc, int jobs = 1);

}  // namespace bcap
