#include "bcap/simulate.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <utility>

#include <json.hpp>

namespace bcap {

namespace {

// shared generator once the population basis and effect matrix are fixed:
// columns 2-3 (1-based) of `basis` are the covariate-linked components, the
// complementary columns get a fresh Haar rotation per subject
std::pair<TimeSeriesDataset, SimTruth> generate(const Matrix& basis,
                                                const Matrix& btilde, int n,
                                                int T, Rng& rng) {
  const int p = static_cast<int>(basis.rows());
  const int m = p - 2;

  Matrix omega(p, m);  // complementary population columns, original order
  omega.col(0) = basis.col(0);
  for (int j = 3; j < p; ++j) omega.col(j - 2) = basis.col(j);

  TimeSeriesDataset ds;
  ds.p = p;
  ds.q = 3;

  SimTruth truth;
  truth.gamma_true = basis.middleCols(1, 2);
  truth.b_true = btilde.middleRows(1, 2);
  truth.x = Matrix(n, 3);
  truth.u_tilde = Matrix(n, p);
  truth.sigma_i.reserve(static_cast<size_t>(n));

  std::bernoulli_distribution bern(0.5);
  for (int i = 0; i < n; ++i) {
    Vector x(3);
    x << 1.0, bern(rng) ? 1.0 : 0.0, draw_normal(rng);
    Vector u(p);
    for (int k = 0; k < p; ++k) u(k) = truth.sigma_true * draw_normal(rng);
    const Vector lambda = btilde * x + u;

    const Matrix rotated = omega * sample_haar_orthonormal(m, m, rng).mat();
    Matrix gi(p, p);
    gi.col(0) = rotated.col(0);
    gi.col(1) = basis.col(1);
    gi.col(2) = basis.col(2);
    for (int j = 3; j < p; ++j) gi.col(j) = rotated.col(j - 2);

    const Vector ev = lambda.array().exp();
    if (!ev.allFinite() || (ev.array() <= 0.0).any())
      throw NumericError("simulate: generated covariance is not positive definite");
    Matrix sigma = gi * ev.asDiagonal() * gi.transpose();
    sigma = 0.5 * (sigma + sigma.transpose());

    const Vector scale = (0.5 * lambda).array().exp();
    Matrix y(T, p);
    for (int l = 0; l < T; ++l) {
      Vector z(p);
      for (int k = 0; k < p; ++k) z(k) = scale(k) * draw_normal(rng);
      y.row(l) = (gi * z).transpose();
    }

    ds.ids.push_back("sim" + std::to_string(i + 1));
    ds.signals.push_back(std::move(y));
    ds.covariates.push_back(x);
    truth.x.row(i) = x.transpose();
    truth.u_tilde.row(i) = u.transpose();
    truth.sigma_i.push_back(std::move(sigma));
  }
  return {std::move(ds), std::move(truth)};
}

Matrix effect_matrix(int p) {
  Matrix b = Matrix::Zero(p, 3);
  b.col(0).setOnes();
  b.row(1) << 1.0, 0.5, -0.5;
  b.row(2) << 1.0, -0.3, 0.3;
  return b;
}

}  // namespace

Matrix p5_population_basis() {
  // first column a*1; column k >= 2 has a in row 1, -(a + 3 delta) in row k
  // and delta elsewhere, with delta = (1 - a)/4: exactly orthonormal, and
  // equal to the 3-decimal constants 0.447/-0.862/0.138 after rounding
  const double a = 1.0 / std::sqrt(5.0);
  const double delta = (1.0 - a) / 4.0;
  const double beta = -(a + 3.0 * delta);
  Matrix g(5, 5);
  g.col(0).setConstant(a);
  for (int k = 1; k < 5; ++k) {
    g(0, k) = a;
    for (int r = 1; r < 5; ++r) g(r, k) = (r == k) ? beta : delta;
  }
  // polar projection clears the last ~1e-16 of rounding drift
  return polar_factor(g).gamma.mat();
}

Matrix p5_effect_matrix() { return effect_matrix(5); }

std::pair<TimeSeriesDataset, SimTruth> simulate_p5(int n, int T,
                                                   std::uint64_t seed) {
  if (n < 2 || T < 2)
    throw ArgumentError("simulate_p5: need n >= 2 and T >= 2");
  Rng rng = substream(seed, stream::kSimulate);
  return generate(p5_population_basis(), p5_effect_matrix(), n, T, rng);
}

std::pair<TimeSeriesDataset, SimTruth> simulate_general(int p, int n, int T,
                                                        std::uint64_t seed) {
  if (p < 5) throw ArgumentError("simulate_general: need p >= 5");
  if (n < 2 || T < 2)
    throw ArgumentError("simulate_general: need n >= 2 and T >= 2");
  Rng rng = substream(seed, stream::kSimulate);
  const Matrix basis = sample_haar_orthonormal(p, p, rng).mat();
  return generate(basis, effect_matrix(p), n, T, rng);
}

Vector true_tangent_intercept(const SimTruth& truth,
                              const SpdMatrix& sigma_star) {
  if (truth.gamma_true.rows() != sigma_star.dim())
    throw ArgumentError("true_tangent_intercept: dimension mismatch");
  const Matrix inv = spd_function(sigma_star, SpdFn::Inverse);
  Vector out(truth.gamma_true.cols());
  for (int k = 0; k < truth.gamma_true.cols(); ++k) {
    const Vector g = truth.gamma_true.col(k);
    out(k) = truth.b_true(k, 0) + std::log(g.dot(inv * g));
  }
  return out;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty())
    throw ParseError(std::string("truth json: ") + what +
                     " must be a non-empty array of rows");
  const size_t cols = rows[0].size();
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != cols)
      throw ParseError(std::string("truth json: ragged rows in ") + what);
    for (size_t j = 0; j < cols; ++j)
      m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

void write_truth_json(const SimTruth& truth, const std::string& path) {
  nlohmann::json j;
  j["gamma_true"] = matrix_to_json(truth.gamma_true);
  j["b_true"] = matrix_to_json(truth.b_true);
  j["sigma_true"] = truth.sigma_true;
  j["d_true"] = truth.d_true;
  std::ofstream out(path);
  if (!out) throw Error("write_truth_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

SimTruth read_truth_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_truth_json: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SimTruth truth;
  try {
    truth.gamma_true = matrix_from_json(j.at("gamma_true"), "gamma_true");
    truth.b_true = matrix_from_json(j.at("b_true"), "b_true");
    truth.sigma_true = j.at("sigma_true").get<double>();
    truth.d_true = j.at("d_true").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return truth;
}

}  // namespace bcap
