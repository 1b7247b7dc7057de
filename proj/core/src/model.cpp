#include "bcap/model.hpp"

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/QR>

namespace bcap {

Matrix TimeSeriesDataset::covariate_matrix() const {
  Matrix x(n(), q);
  for (int i = 0; i < n(); ++i) x.row(i) = covariates[size_t(i)].transpose();
  return x;
}

void TimeSeriesDataset::validate() const {
  if (p < 1) throw ValidationError("dataset: need p >= 1 signal dimensions");
  if (q < 1) throw ValidationError("dataset: need q >= 1 covariate columns");
  if (signals.size() != covariates.size() || signals.size() != ids.size())
    throw ValidationError("dataset: ids/signals/covariates sizes disagree");
  for (int i = 0; i < n(); ++i) {
    const Matrix& y = signals[size_t(i)];
    if (y.rows() < 2)
      throw ValidationError("dataset: subject " + ids[size_t(i)] +
                            " has fewer than 2 time points");
    if (y.cols() != p)
      throw ValidationError("dataset: subject " + ids[size_t(i)] + " has " +
                            std::to_string(y.cols()) + " columns, expected " +
                            std::to_string(p));
    if (!y.allFinite())
      throw ValidationError("dataset: subject " + ids[size_t(i)] +
                            " has non-finite signal values");
    const Vector& x = covariates[size_t(i)];
    if (x.size() != q)
      throw ValidationError("dataset: subject " + ids[size_t(i)] +
                            " has a covariate vector of length " +
                            std::to_string(x.size()) + ", expected " +
                            std::to_string(q));
    if (!x.allFinite())
      throw ValidationError("dataset: subject " + ids[size_t(i)] +
                            " has non-finite covariates");
  }
  if (n() >= 1) {
    Eigen::ColPivHouseholderQR<Matrix> qr(covariate_matrix());
    if (qr.rank() < q)
      throw ValidationError("dataset: covariate matrix is rank deficient (rank " +
                            std::to_string(qr.rank()) + " < " + std::to_string(q) +
                            "); drop redundant columns");
  }
}

WhitenedDataset whiten(const TimeSeriesDataset& data, double jitter) {
  data.validate();
  if (jitter < 0.0) throw ArgumentError("whiten: jitter must be >= 0");
  const int p = data.p;

  TimeSeriesDataset centered = data;
  for (auto& y : centered.signals) y.rowwise() -= y.colwise().mean();

  Matrix pooled;
  if (data.n() == 0) {
    pooled = Matrix::Identity(p, p);
  } else {
    pooled = Matrix::Zero(p, p);
    for (int i = 0; i < centered.n(); ++i) {
      const Matrix& y = centered.signals[size_t(i)];
      pooled += (y.transpose() * y) / double(y.rows());
    }
    pooled /= double(centered.n());
    pooled += jitter * Matrix::Identity(p, p);
    pooled = 0.5 * (pooled + pooled.transpose()).eval();
  }

  WhitenedDataset out{TimeSeriesDataset{}, SpdMatrix::identity(p),
                      Matrix::Identity(p, p), {}, {}};
  try {
    out.sigma_star = SpdMatrix(std::move(pooled));
  } catch (const DomainError&) {
    throw DegenerateError(
        "whiten: pooled second moment is numerically singular; "
        "pass a positive jitter to regularize");
  }
  out.base = std::move(centered);
  out.sigma_star_inv_sqrt = spd_function(out.sigma_star, SpdFn::InvSqrt);
  for (int i = 0; i < out.base.n(); ++i) {
    Matrix ystar = out.base.signals[size_t(i)] * out.sigma_star_inv_sqrt;
    Matrix shat = (ystar.transpose() * ystar) / double(ystar.rows());
    out.second_moment.push_back(0.5 * (shat + shat.transpose()).eval());
    out.ystar.push_back(std::move(ystar));
  }
  return out;
}

Hyperparameters Hyperparameters::defaults(int p) {
  return with_psi(SpdMatrix::identity(p));
}

Hyperparameters Hyperparameters::with_psi(SpdMatrix psi, double b_sd,
                                          double sigma2_rate) {
  if (!(b_sd > 0.0))
    throw ArgumentError("hyperparameters: b_sd must be positive");
  if (!(sigma2_rate > 0.0))
    throw ArgumentError("hyperparameters: sigma2_rate must be positive");
  Matrix inv = spd_function(psi, SpdFn::Inverse);
  return Hyperparameters{std::move(psi), std::move(inv), b_sd, sigma2_rate};
}

namespace {

void check_shapes(const ExpandedState& s, const WhitenedDataset& w,
                  const Hyperparameters& h) {
  const int p = w.p();
  const int d = int(s.u.cols());
  if (s.u.rows() != p)
    throw ArgumentError("log_posterior: U has " + std::to_string(s.u.rows()) +
                        " rows, data dimension is " + std::to_string(p));
  if (d < 1 || d > p)
    throw ArgumentError("log_posterior: need 1 <= d <= p, got d=" +
                        std::to_string(d));
  if (s.lambda.rows() != w.n() || s.lambda.cols() != d)
    throw ArgumentError("log_posterior: lambda must be n x d");
  if (s.b.rows() != d || s.b.cols() != w.q())
    throw ArgumentError("log_posterior: B must be d x q");
  if (h.psi.dim() != p)
    throw ArgumentError("log_posterior: Psi dimension disagrees with data");
}

[[noreturn]] void bad_term(const char* term) {
  throw NumericError(std::string("log posterior: ") + term +
                     " term is not finite");
}

}  // namespace

double log_posterior_grad(const ExpandedState& s, const WhitenedDataset& w,
                          const Hyperparameters& h, ExpandedState* grad) {
  check_shapes(s, w, h);
  const int p = w.p();
  const int d = int(s.u.cols());
  const int n = w.n();

  // polar factor Gamma = U (U'U)^{-1/2}, kept in eigenbasis form for the
  // chain rule below
  const SymEigen meig = sym_eigen(s.u.transpose() * s.u);
  const double mlo = meig.values(d - 1);
  const double mhi = meig.values(0);
  if (!(mlo > 0.0) || mlo <= kPdRatio * mhi)
    throw NumericError("log posterior: projection columns are numerically "
                       "collinear (degenerate polar factor)");
  const Vector dinv_sqrt = meig.values.array().rsqrt();
  const Matrix wmat = meig.vectors * dinv_sqrt.asDiagonal() *
                      meig.vectors.transpose();
  const Matrix gamma = s.u * wmat;

  if (grad) {
    grad->u = Matrix::Zero(p, d);
    grad->lambda = Matrix::Zero(n, d);
    grad->b = Matrix::Zero(d, w.q());
    grad->tau = 0.0;
  }

  // likelihood: sum_l c_ilk^2 = T_i (Gamma' Shat_i Gamma)_kk
  double lik = 0.0;
  Matrix gbar = Matrix::Zero(p, d);  // d lik / d Gamma
  for (int i = 0; i < n; ++i) {
    const double ti = double(w.T(i));
    const Matrix proj = w.second_moment[size_t(i)] * gamma;        // p x d
    const Vector a =
        (gamma.cwiseProduct(proj)).colwise().sum().transpose();    // (G'SG)_kk
    for (int k = 0; k < d; ++k) {
      const double e = std::exp(-s.lambda(i, k));
      lik += -0.5 * ti * s.lambda(i, k) - 0.5 * ti * a(k) * e;
      if (grad) {
        grad->lambda(i, k) = -0.5 * ti + 0.5 * ti * a(k) * e;
        gbar.col(k) -= ti * e * proj.col(k);
      }
    }
  }
  if (!std::isfinite(lik)) bad_term("likelihood");

  // Gaussian log-variance prior around B x_i with variance exp(tau)
  const double e_neg_tau = std::exp(-s.tau);
  double lam_prior = 0.0;
  double resid2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector& x = w.base.covariates[size_t(i)];
    const Vector r = s.lambda.row(i).transpose() - s.b * x;
    resid2 += r.squaredNorm();
    if (grad) {
      grad->lambda.row(i) -= e_neg_tau * r.transpose();
      grad->b += e_neg_tau * r * x.transpose();
    }
  }
  lam_prior = -0.5 * d * n * s.tau - 0.5 * e_neg_tau * resid2;
  if (!std::isfinite(lam_prior)) bad_term("log-variance prior");

  // MACG prior on the expanded projection
  const double u_prior = -0.5 * (s.u.transpose() * h.psi_inv * s.u).trace();
  if (!std::isfinite(u_prior)) bad_term("projection prior");

  const double b_prior = -s.b.squaredNorm() / (2.0 * h.b_sd * h.b_sd);
  if (!std::isfinite(b_prior)) bad_term("coefficient prior");

  const double s_prior = -h.sigma2_rate * std::exp(s.tau) + s.tau;
  if (!std::isfinite(s_prior)) bad_term("noise-scale prior");

  if (grad) {
    // chain rule through Gamma = U W, W = (U'U)^{-1/2}: with M = Q D Q',
    // A = gbar' U, the W-differential solves a Sylvester system that is
    // diagonal in the eigenbasis, giving
    //   dL/dU = gbar W + U (V + V'),
    //   V = -Q [ D^{-1/2} ((Q' A' Q) / Phi) D^{-1/2} ] Q',  Phi_kj = sqrt(D_k)+sqrt(D_j)
    const Matrix a_mat = gbar.transpose() * s.u;  // d x d
    const Matrix atil = meig.vectors.transpose() * a_mat.transpose() *
                        meig.vectors;
    const Vector droot = meig.values.array().sqrt();
    Matrix vtil(d, d);
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < d; ++j)
        vtil(k, j) = -dinv_sqrt(k) * atil(k, j) * dinv_sqrt(j) /
                     (droot(k) + droot(j));
    const Matrix v = meig.vectors * vtil * meig.vectors.transpose();
    grad->u = gbar * wmat + s.u * (v + v.transpose()) - h.psi_inv * s.u;

    grad->b -= s.b / (h.b_sd * h.b_sd);
    grad->tau = -0.5 * d * n + 0.5 * e_neg_tau * resid2 -
                h.sigma2_rate * std::exp(s.tau) + 1.0;

    if (!grad->u.allFinite() || !grad->lambda.allFinite() ||
        !grad->b.allFinite() || !std::isfinite(grad->tau))
      throw NumericError("log posterior: gradient is not finite");
  }

  return lik + lam_prior + u_prior + b_prior + s_prior;
}

double log_posterior(const ExpandedState& s, const WhitenedDataset& w,
                     const Hyperparameters& h) {
  return log_posterior_grad(s, w, h, nullptr);
}

ExpandedState grad_log_posterior(const ExpandedState& s,
                                 const WhitenedDataset& w,
                                 const Hyperparameters& h) {
  ExpandedState g;
  log_posterior_grad(s, w, h, &g);
  return g;
}

}  // namespace bcap
