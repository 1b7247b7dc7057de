#include "bcap/selection.hpp"

#include <cmath>
#include <string>

#include <json.hpp>

#include "bcap/parallel.hpp"

namespace bcap {

double log_dfd(const std::vector<Matrix>& lambda_hats,
               const std::vector<int>& t_counts) {
  if (lambda_hats.size() != t_counts.size())
    throw ArgumentError("log_dfd: matrix and count lists differ in length");
  if (lambda_hats.empty())
    throw ArgumentError("log_dfd: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < lambda_hats.size(); ++i) {
    const Matrix& l = lambda_hats[i];
    if (t_counts[i] < 1)
      throw ArgumentError("log_dfd: nonpositive count at subject " +
                          std::to_string(i + 1));
    double diag_logdet = 0.0;
    for (Eigen::Index k = 0; k < l.rows(); ++k) {
      if (!(l(k, k) > 0.0))
        throw DomainError("log_dfd: matrix " + std::to_string(i + 1) +
                          " has a nonpositive diagonal entry");
      diag_logdet += std::log(l(k, k));
    }
    // an exactly diagonal matrix contributes exactly zero (its determinant
    // is the product of the diagonal); skipping the eigensolve keeps the
    // identity free of summation-order rounding
    bool diagonal = true;
    for (Eigen::Index r = 0; r < l.rows() && diagonal; ++r)
      for (Eigen::Index c = 0; c < l.cols() && diagonal; ++c)
        if (r != c && l(r, c) != 0.0) diagonal = false;
    if (!diagonal) acc += double(t_counts[i]) * (diag_logdet - log_det(l));
  }
  return acc / double(lambda_hats.size());
}

double posterior_mean_dfd(const PosteriorDraws& draws,
                          const WhitenedDataset& data) {
  if (draws.total_draws() == 0)
    throw ValidationError("posterior_mean_dfd: no draws");
  if (draws.p != data.p() || draws.n != data.n())
    throw ArgumentError("posterior_mean_dfd: draws and data dimensions disagree");
  const int n = data.n();
  std::vector<int> t_counts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) t_counts[size_t(i)] = data.T(i);

  double acc = 0.0;
  int count = 0;
  std::vector<Matrix> lhat(static_cast<size_t>(n));
  draws.for_each([&](const Draw& dr) {
    for (int i = 0; i < n; ++i) {
      Matrix m = dr.gamma.transpose() * data.second_moment[size_t(i)] * dr.gamma;
      lhat[size_t(i)] = 0.5 * (m + m.transpose()).eval();
    }
    try {
      acc += log_dfd(lhat, t_counts);
    } catch (const DomainError& e) {
      throw DomainError(std::string("posterior_mean_dfd: projected second "
                                    "moment is not positive definite "
                                    "(T_i < d?): ") + e.what());
    }
    ++count;
  });
  return acc / double(count);
}

std::string DfdReport::to_json() const {
  nlohmann::json j;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates)
    j["candidates"].push_back({{"d", c.d}, {"dfd_mean", c.dfd_mean}});
  j["cutoff"] = cutoff;
  j["chosen_d"] = chosen_d;
  return j.dump(2);
}

DfdReport select_d(const WhitenedDataset& data, int d_max, double cutoff,
                   const Hyperparameters& hyper, const HmcConfig& config,
                   int jobs) {
  if (d_max < 1 || d_max > data.p())
    throw ArgumentError("select_d: need 1 <= d_max <= p");

  DfdReport report;
  report.cutoff = cutoff;
  report.candidates.resize(size_t(d_max));

  parallel_for(d_max, jobs, [&](int idx) {
    const int d = idx + 1;
    try {
      // chains within a candidate run serially; candidates are the jobs
      PosteriorDraws draws = fit(data, d, hyper, config, 1);
      report.candidates[size_t(idx)] =
          DfdCandidate{d, posterior_mean_dfd(draws, data)};
    } catch (const Error& e) {
      throw Error("select_d: candidate d=" + std::to_string(d) + ": " +
                  e.what());
    }
  });

  report.chosen_d = 1;
  for (const auto& c : report.candidates)
    if (c.dfd_mean <= cutoff) report.chosen_d = std::max(report.chosen_d, c.d);
  return report;
}

}  // namespace bcap
