#pragma once

#include <Eigen/Dense>

#include "bcap/errors.hpp"
#include "bcap/rng.hpp"

namespace bcap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// shared numerical tolerances
inline constexpr double kSymmetryTol = 1e-12;  // relative, max-abs
inline constexpr double kOrthoTol = 1e-10;     // Frobenius
inline constexpr double kPdRatio = 1e-12;      // lambda_min > kPdRatio * lambda_max

// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
// Every matrix function in this library routes through this one
// decomposition so tolerances are uniform.
struct SymEigen {
  Vector values;   // descending
  Matrix vectors;  // columns match values
};
SymEigen sym_eigen(const Matrix& a);  // ValidationError if not symmetric

// Dense symmetric positive-definite matrix. Symmetry and positive
// definiteness are checked on construction; the eigendecomposition computed
// for the check is cached for reuse by the matrix functions below.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m);
  static SpdMatrix identity(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  const SymEigen& eigen() const { return eig_; }

 private:
  Matrix m_;
  SymEigen eig_;
};

// Matrix with orthonormal columns (a Stiefel point). Gamma' Gamma = I is
// checked on construction to kOrthoTol (Frobenius).
class OrthonormalMatrix {
 public:
  explicit OrthonormalMatrix(Matrix m);

  int rows() const { return static_cast<int>(m_.rows()); }
  int cols() const { return static_cast<int>(m_.cols()); }
  const Matrix& mat() const { return m_; }

 private:
  Matrix m_;
};

enum class SpdFn { Log, Exp, Sqrt, InvSqrt, Inverse };

// Q f(D) Q' via sym_eigen. Log/Sqrt/InvSqrt/Inverse require PD input
// (DomainError naming the offending eigenvalue); Exp accepts any symmetric.
Matrix spd_function(const Matrix& a, SpdFn f);
Matrix spd_function(const SpdMatrix& a, SpdFn f);  // reuses the cached decomposition

// Sum of log eigenvalues. DomainError if not PD.
double log_det(const Matrix& a);
double log_det(const SpdMatrix& a);

// Polar decomposition U = Gamma * S with Gamma = U (U'U)^{-1/2} orthonormal
// and S = (U'U)^{1/2} symmetric PSD. DegenerateError when U'U is singular
// (smallest eigenvalue <= kPdRatio * largest).
struct PolarFactors {
  OrthonormalMatrix gamma;
  Matrix stretch;  // S, d x d
};
PolarFactors polar_factor(const Matrix& u);

// log(S*^{-1/2} Sigma_i S*^{-1/2}): the whitening-transport map to the
// tangent space at the reference point. DomainError if the product is not PD.
Matrix tangent_map(const SpdMatrix& sigma_i, const Matrix& sigma_star_inv_sqrt);

// Matrix angular central Gaussian log density, without the Stiefel-measure
// normalizing constant: -(d/2) log|Psi| - (p/2) log|Gamma' Psi^{-1} Gamma|.
double macg_log_density(const OrthonormalMatrix& gamma, const SpdMatrix& psi);

// Invariant-uniform orthonormal p x d matrix: polar factor of an iid
// standard Gaussian matrix.
OrthonormalMatrix sample_haar_orthonormal(int p, int d, Rng& rng);

}  // namespace bcap
