#include "bcap/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bcap/errors.hpp"

namespace bcap {

double mean(const std::vector<double>& x) {
  if (x.empty()) throw DegenerateError("mean: empty vector");
  double s = 0;
  for (double v : x) s += v;
  return s / double(x.size());
}

double variance(const std::vector<double>& x) {
  if (x.size() < 2) throw DegenerateError("variance: need at least 2 values");
  const double m = mean(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / double(x.size() - 1);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DegenerateError("quantile: empty vector");
  if (!(q >= 0.0 && q <= 1.0))
    throw ArgumentError("quantile: q must lie in [0, 1], got " + std::to_string(q));
  const double h = q * double(sorted.size() - 1);
  const size_t lo = size_t(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - double(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  return quantile_sorted(x, q);
}

double integrated_autocorr_time(const double* x, int n) {
  if (n < 2) throw DegenerateError("autocorr time: need at least 2 samples");
  double m = 0;
  for (int i = 0; i < n; ++i) m += x[i];
  m /= n;
  double c0 = 0;
  for (int i = 0; i < n; ++i) c0 += (x[i] - m) * (x[i] - m);
  c0 /= n;
  if (!(c0 > 0.0))
    throw DegenerateError("autocorr time: series has zero variance");
  double tau = 1.0;
  for (int t = 1; t < n; ++t) {
    double ct = 0;
    for (int i = 0; i + t < n; ++i) ct += (x[i] - m) * (x[i + t] - m);
    ct /= n;
    const double rho = ct / c0;
    if (rho <= 0.0) break;  // truncate at the first nonpositive autocorrelation
    tau += 2.0 * rho;
  }
  return tau;
}

double ess_real(const double* x, int n) {
  return double(n) / integrated_autocorr_time(x, n);
}

}  // namespace bcap
