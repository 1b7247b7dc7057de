#pragma once

#include <vector>

namespace bcap {

double mean(const std::vector<double>& x);
// sample variance (n-1 denominator)
double variance(const std::vector<double>& x);

// Type-7 (linear interpolation) quantile of a pre-sorted vector, q in [0,1].
double quantile_sorted(const std::vector<double>& sorted, double q);
// convenience: copies and sorts
double quantile(std::vector<double> x, double q);

// Integrated autocorrelation time tau = 1 + 2*sum_t rho_t, with the sum
// truncated at the first nonpositive sample autocorrelation.
// Throws DegenerateError on a zero-variance series.
double integrated_autocorr_time(const double* x, int n);

// n / tau for one series (real-valued; callers floor/min as needed)
double ess_real(const double* x, int n);

}  // namespace bcap
