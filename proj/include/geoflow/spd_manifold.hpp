/// @file spd_manifold.hpp
/// @brief Geometry of the cone of symmetric positive-definite matrices.
///
/// The metric on the tangent space at G is tr(G^{-1} X G^{-1} Y). Its
/// Levi-Civita connection has Christoffel map
///
///     Gamma_G(X, Y) = -1/2 (X G^{-1} Y + Y G^{-1} X),
///
/// so geodesics satisfy G'' + Gamma_G(G', G') = 0, i.e. G'' = G' G^{-1} G'.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace geoflow::spd {

using Matrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline double asymmetry(const Matrix& m) {
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

// Relative asymmetry above this is treated as a caller error rather than
// rounding noise; anything below is symmetrized away.
inline constexpr double kMaxAsymmetry = 1e-8;

}  // namespace detail

/// A point of the SPD cone. Entries are exactly symmetric after construction
/// and the Cholesky factor is cached, so inverse applications are cheap.
class SPDMatrix {
 public:
  explicit SPDMatrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw DimensionError("SPDMatrix: matrix must be square and non-empty");
    }
    if (!m.allFinite()) throw NotPositiveDefinite("SPDMatrix: non-finite entries");
    if (detail::asymmetry(m) > detail::kMaxAsymmetry) {
      throw NotPositiveDefinite("SPDMatrix: matrix is not symmetric");
    }
    entries_ = 0.5 * (m + m.transpose());
    llt_.compute(entries_);
    if (llt_.info() != Eigen::Success) {
      throw NotPositiveDefinite("SPDMatrix: Cholesky factorization failed");
    }
  }

  static SPDMatrix identity(int n) { return SPDMatrix(Matrix::Identity(n, n)); }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

  /// G^{-1} M
  Matrix solve(const Matrix& m) const { return llt_.solve(m); }
  Matrix inverse() const { return llt_.solve(Matrix::Identity(dim(), dim())); }

  double determinant() const {
    const auto& l = llt_.matrixLLT();
    double d = 1.0;
    for (int i = 0; i < dim(); ++i) d *= l(i, i);
    return d * d;
  }

 private:
  Matrix entries_;
  Eigen::LLT<Matrix> llt_;
};

/// Symmetric matrix viewed as a tangent vector to the SPD cone.
class TangentVector {
 public:
  explicit TangentVector(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("TangentVector: matrix must be square");
    if (m.size() > 0 && detail::asymmetry(m) > detail::kMaxAsymmetry) {
      throw std::invalid_argument("TangentVector: matrix is not symmetric");
    }
    entries_ = 0.5 * (m + m.transpose());
  }

  /// Tangent vector to the unit-determinant slice at `base`: requires
  /// tr(G^{-1} X) = 0 to within 1e-12 (relative to |X|).
  static TangentVector trace_free_at(const SPDMatrix& base, const Matrix& m) {
    TangentVector v(m);
    if (base.dim() != v.dim()) throw DimensionError("TangentVector: dimension mismatch");
    const double tr = base.solve(v.entries_).trace();
    const double scale = std::max(1.0, base.solve(v.entries_).cwiseAbs().maxCoeff());
    if (std::abs(tr) > 1e-12 * scale) {
      throw std::invalid_argument("TangentVector: not trace-free at base point");
    }
    v.trace_free_ = true;
    return v;
  }

  static TangentVector zero(int n) { return TangentVector(Matrix::Zero(n, n)); }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  bool trace_free() const { return trace_free_; }

 private:
  Matrix entries_;
  bool trace_free_ = false;
};

namespace detail {

inline void check_dims(const SPDMatrix& g, const TangentVector& x, const TangentVector& y) {
  if (g.dim() != x.dim() || g.dim() != y.dim()) {
    throw DimensionError("spd: dimension mismatch between base point and tangent vectors");
  }
}

}  // namespace detail

/// tr(G^{-1} X G^{-1} Y)
inline double metric_at(const SPDMatrix& g, const TangentVector& x, const TangentVector& y) {
  detail::check_dims(g, x, y);
  const Matrix gx = g.solve(x.entries());
  const Matrix gy = g.solve(y.entries());
  // tr(P Q) without forming the product
  return (gx.transpose().cwiseProduct(gy)).sum();
}

/// Raw form used by grid kernels that already hold G^{-1}.
inline Matrix christoffel_raw(const Matrix& g_inv, const Matrix& x, const Matrix& y) {
  return -0.5 * (x * g_inv * y + y * g_inv * x);
}

inline TangentVector christoffel(const SPDMatrix& g, const TangentVector& x,
                                 const TangentVector& y) {
  detail::check_dims(g, x, y);
  const Matrix xgy = x.entries() * g.solve(y.entries());
  return TangentVector(-0.5 * (xgy + xgy.transpose()));
}

/// G / det(G)^{1/N}
inline SPDMatrix project_unit_det(const SPDMatrix& g) {
  const double det = g.determinant();
  return SPDMatrix(g.entries() / std::pow(det, 1.0 / g.dim()));
}

/// Eigenvalue-based symmetric matrix function f(S) for symmetric S.
template <class F>
Matrix symmetric_function(const Matrix& s, F&& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  const Eigen::VectorXd d = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Deterministic random SPD matrix: Q diag(lambda) Q^T with Q orthogonal from a
/// Gaussian QR and eigenvalues log-uniform in [1, cond_max].
inline SPDMatrix random_spd(std::uint64_t seed, int n, double cond_max) {
  if (n < 1) throw std::invalid_argument("random_spd: N must be >= 1");
  if (!(cond_max >= 1.0)) throw std::invalid_argument("random_spd: cond_max must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix z(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(z);
  const Matrix q = qr.householderQ();
  Eigen::VectorXd lambda(n);
  const double log_cond = std::log(cond_max);
  for (int i = 0; i < n; ++i) lambda(i) = std::exp(unit(rng) * log_cond);
  return SPDMatrix(q * lambda.asDiagonal() * q.transpose());
}

/// Deterministic random symmetric matrix with entries of order `scale`.
inline Matrix random_symmetric(std::uint64_t seed, int n, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix z(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z(i, j) = normal(rng);
  return 0.5 * (z + z.transpose());
}

}  // namespace geoflow::spd
