#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "pppbayes/errors.hpp"

namespace pppbayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline bool is_symmetric(const Matrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

// Lower Cholesky factor of an SPD matrix; throws SpdViolation otherwise.
inline Matrix cholesky_lower(const Matrix& m, const std::string& what = "matrix") {
  if (m.rows() != m.cols() || m.rows() == 0) throw SpdViolation(what + " is not square");
  if (!m.allFinite()) throw SpdViolation(what + " has non-finite entries");
  if (!is_symmetric(m, 1e-10)) throw SpdViolation(what + " is not symmetric");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw SpdViolation(what + " is not positive definite");
  Matrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw SpdViolation(what + " is not positive definite");
  }
  return l;
}

// Cached factorization of N(mean, cov) for repeated log-density evaluation.
class GaussianFactor {
 public:
  GaussianFactor() = default;
  GaussianFactor(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), chol_(cholesky_lower(cov, "covariance")) {
    if (chol_.rows() != mean_.size()) throw InvalidArgument("mean/covariance size mismatch");
    log_norm_ = -0.5 * static_cast<double>(mean_.size()) * kLog2Pi -
                chol_.diagonal().array().log().sum();
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& chol() const { return chol_; }

  // Squared Mahalanobis distance (x-m)^T C^{-1} (x-m).
  double mahalanobis2(const Vector& x) const {
    Vector z = x - mean_;
    chol_.triangularView<Eigen::Lower>().solveInPlace(z);
    return z.squaredNorm();
  }

  double log_density(const Vector& x) const { return log_norm_ - 0.5 * mahalanobis2(x); }
  double log_mode_density() const { return log_norm_; }

  // mean + L z for a standard-normal z.
  Vector transform(const Vector& z) const { return mean_ + chol_ * z; }

 private:
  Vector mean_;
  Matrix chol_;
  double log_norm_ = 0.0;
};

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double smallest_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace pppbayes
