#include "bcap/linalg.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace bcap {

namespace {

void check_square_finite(const Matrix& a, const char* who) {
  if (a.rows() == 0 || a.rows() != a.cols())
    throw ValidationError(std::string(who) + ": need a nonempty square matrix, got " +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  if (!a.allFinite())
    throw ValidationError(std::string(who) + ": matrix has non-finite entries");
}

// eigenvalues below kPdRatio * lambda_max (or <= 0) break PD-only functions
void check_pd(const Vector& descending, const char* who) {
  const double lo = descending(descending.size() - 1);
  const double hi = descending(0);
  if (!(lo > 0.0) || lo <= kPdRatio * hi)
    throw DomainError(std::string(who) + ": matrix is not positive definite "
                      "(smallest eigenvalue " + std::to_string(lo) + ")");
}

Matrix apply_spectral(const SymEigen& eig, SpdFn f, const char* who) {
  if (f != SpdFn::Exp) check_pd(eig.values, who);
  Vector fv(eig.values.size());
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    const double v = eig.values(k);
    switch (f) {
      case SpdFn::Log: fv(k) = std::log(v); break;
      case SpdFn::Exp: fv(k) = std::exp(v); break;
      case SpdFn::Sqrt: fv(k) = std::sqrt(v); break;
      case SpdFn::InvSqrt: fv(k) = 1.0 / std::sqrt(v); break;
      case SpdFn::Inverse: fv(k) = 1.0 / v; break;
    }
  }
  Matrix r = eig.vectors * fv.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());  // kill asymmetric roundoff
}

}  // namespace

SymEigen sym_eigen(const Matrix& a) {
  check_square_finite(a, "sym_eigen");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol * scale)
    throw ValidationError("sym_eigen: matrix is not symmetric (max asymmetry " +
                          std::to_string(asym) + ")");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (a + a.transpose()));
  if (solver.info() != Eigen::Success)
    throw NumericError("sym_eigen: eigendecomposition failed to converge");
  SymEigen out;
  const Eigen::Index n = a.rows();
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {  // ascending -> descending
    out.values(k) = solver.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  return out;
}

SpdMatrix::SpdMatrix(Matrix m) : m_(std::move(m)), eig_(sym_eigen(m_)) {
  check_pd(eig_.values, "SpdMatrix");
}

SpdMatrix SpdMatrix::identity(int dim) {
  return SpdMatrix(Matrix::Identity(dim, dim));
}

OrthonormalMatrix::OrthonormalMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.cols() == 0 || m_.rows() < m_.cols())
    throw ValidationError("OrthonormalMatrix: need p x d with p >= d >= 1, got " +
                          std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
  if (!m_.allFinite())
    throw ValidationError("OrthonormalMatrix: non-finite entries");
  const Matrix gram = m_.transpose() * m_;
  const double err = (gram - Matrix::Identity(m_.cols(), m_.cols())).norm();
  if (err > kOrthoTol)
    throw ValidationError("OrthonormalMatrix: columns are not orthonormal "
                          "(Frobenius deviation " + std::to_string(err) + ")");
}

Matrix spd_function(const Matrix& a, SpdFn f) {
  return apply_spectral(sym_eigen(a), f, "spd_function");
}

Matrix spd_function(const SpdMatrix& a, SpdFn f) {
  return apply_spectral(a.eigen(), f, "spd_function");
}

double log_det(const Matrix& a) {
  const SymEigen eig = sym_eigen(a);
  check_pd(eig.values, "log_det");
  return eig.values.array().log().sum();
}

double log_det(const SpdMatrix& a) {
  return a.eigen().values.array().log().sum();
}

PolarFactors polar_factor(const Matrix& u) {
  if (u.rows() == 0 || u.cols() == 0 || u.rows() < u.cols())
    throw ValidationError("polar_factor: need p x d with p >= d >= 1, got " +
                          std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
  if (!u.allFinite())
    throw ValidationError("polar_factor: non-finite entries");
  const SymEigen eig = sym_eigen(u.transpose() * u);
  const double lo = eig.values(eig.values.size() - 1);
  const double hi = eig.values(0);
  if (!(lo > 0.0) || lo <= kPdRatio * hi)
    throw DegenerateError("polar_factor: columns are numerically collinear "
                          "(Gram eigenvalue " + std::to_string(lo) + ")");
  const Matrix w = eig.vectors *
                   eig.values.array().rsqrt().matrix().asDiagonal() *
                   eig.vectors.transpose();
  Matrix gamma = u * w;
  // one Newton-Schulz sweep tightens orthonormality to near machine precision
  gamma = 0.5 * gamma * (3.0 * Matrix::Identity(gamma.cols(), gamma.cols()) -
                         gamma.transpose() * gamma);
  Matrix stretch = eig.vectors *
                   eig.values.array().sqrt().matrix().asDiagonal() *
                   eig.vectors.transpose();
  return PolarFactors{OrthonormalMatrix(std::move(gamma)),
                      0.5 * (stretch + stretch.transpose())};
}

Matrix tangent_map(const SpdMatrix& sigma_i, const Matrix& sigma_star_inv_sqrt) {
  Matrix prod = sigma_star_inv_sqrt * sigma_i.mat() * sigma_star_inv_sqrt;
  prod = 0.5 * (prod + prod.transpose());
  return spd_function(prod, SpdFn::Log);
}

double macg_log_density(const OrthonormalMatrix& gamma, const SpdMatrix& psi) {
  const int p = gamma.rows();
  const int d = gamma.cols();
  if (psi.dim() != p)
    throw ArgumentError("macg_log_density: Psi is " + std::to_string(psi.dim()) +
                        "-dimensional but Gamma has " + std::to_string(p) + " rows");
  const Matrix psi_inv = spd_function(psi, SpdFn::Inverse);
  Matrix inner = gamma.mat().transpose() * psi_inv * gamma.mat();
  inner = 0.5 * (inner + inner.transpose());
  return -0.5 * d * log_det(psi) - 0.5 * p * log_det(inner);
}

OrthonormalMatrix sample_haar_orthonormal(int p, int d, Rng& rng) {
  if (p < 1 || d < 1 || d > p)
    throw ArgumentError("sample_haar_orthonormal: need p >= d >= 1, got p=" +
                        std::to_string(p) + " d=" + std::to_string(d));
  for (int attempt = 0; attempt < 100; ++attempt) {
    Matrix g = gaussian_matrix(p, d, rng);
    try {
      return polar_factor(g).gamma;
    } catch (const DegenerateError&) {
      // astronomically unlikely; redraw
    }
  }
  throw NumericError("sample_haar_orthonormal: repeated degenerate draws");
}

}  // namespace bcap
