#include "geoflow/spd_manifold.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace geoflow::spd;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// G(u) = G0^{1/2} exp(u G0^{-1/2} X G0^{-1/2}) G0^{1/2}
Matrix geodesic(const Matrix& g0, const Matrix& x, double u) {
  const Matrix h = symmetric_function(g0, [](double v) { return std::sqrt(v); });
  const Matrix hi = symmetric_function(g0, [](double v) { return 1.0 / std::sqrt(v); });
  const Matrix m = hi * x * hi;
  return h * symmetric_function(u * m, [](double v) { return std::exp(v); }) * h;
}

}  // namespace

TEST(SpdManifold, MetricAtIdentityIsTraceOfSquare) {
  const auto g = SPDMatrix::identity(2);
  const TangentVector x(diag2(1, -1));
  EXPECT_DOUBLE_EQ(metric_at(g, x, x), 2.0);
}

TEST(SpdManifold, MetricAtDiagonalBasePoint) {
  const SPDMatrix g(diag2(2.0, 0.5));
  const TangentVector x(diag2(1, -1));
  EXPECT_NEAR(metric_at(g, x, x), 17.0 / 4.0, 1e-14);
}

TEST(SpdManifold, MetricAtZeroVector) {
  const auto g = random_spd(3, 3, 10.0);
  EXPECT_EQ(metric_at(g, TangentVector::zero(3), TangentVector::zero(3)), 0.0);
}

TEST(SpdManifold, MetricErrors) {
  const auto g = SPDMatrix::identity(2);
  EXPECT_THROW(metric_at(g, TangentVector::zero(3), TangentVector::zero(2)), DimensionError);
  EXPECT_THROW(SPDMatrix(diag2(1.0, -1.0)), NotPositiveDefinite);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.5;
  EXPECT_THROW(SPDMatrix{asym}, NotPositiveDefinite);
}

TEST(SpdManifold, MetricSymmetricAndPositiveOnRandomTriples) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const int n = 1 + static_cast<int>(seed % 5);
    const auto g = random_spd(seed, n, 50.0);
    const TangentVector x(random_symmetric(seed + 1000, n));
    const TangentVector y(random_symmetric(seed + 2000, n));
    const double xy = metric_at(g, x, y), yx = metric_at(g, y, x);
    EXPECT_NEAR(xy, yx, 1e-13 * std::max(1.0, std::abs(xy))) << "seed " << seed;
    EXPECT_GT(metric_at(g, x, x), 0.0) << "seed " << seed;
  }
}

TEST(SpdManifold, ChristoffelExamples) {
  const auto g = SPDMatrix::identity(3);
  const TangentVector id(Matrix::Identity(3, 3));
  EXPECT_TRUE(christoffel(g, id, id).entries().isApprox(-Matrix::Identity(3, 3)));
  const auto g2 = random_spd(7, 3, 5.0);
  const TangentVector y(random_symmetric(8, 3));
  EXPECT_EQ(christoffel(g2, TangentVector::zero(3), y).entries().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(christoffel(g2, TangentVector::zero(2), y), DimensionError);
}

TEST(SpdManifold, ChristoffelSymmetricBilinear) {
  const auto g = random_spd(11, 4, 20.0);
  const TangentVector x(random_symmetric(12, 4)), y(random_symmetric(13, 4)), z(random_symmetric(14, 4));
  const Matrix gxy = christoffel(g, x, y).entries();
  EXPECT_LT((gxy - christoffel(g, y, x).entries()).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((gxy - gxy.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  const TangentVector xz(2.0 * x.entries() + z.entries());
  const Matrix lin = 2.0 * gxy + christoffel(g, z, y).entries();
  EXPECT_LT((christoffel(g, xz, y).entries() - lin).cwiseAbs().maxCoeff(), 1e-12);
}

// Geodesics of the trace metric satisfy G'' + Gamma(G', G') = 0.
TEST(SpdManifold, GeodesicResidualUnderFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const int n = 2 + static_cast<int>(seed % 3);
    const Matrix g0 = random_spd(seed, n, 8.0).entries();
    const Matrix x = random_symmetric(seed + 50, n, 0.5);
    for (double u0 : {0.0, 0.3}) {
      const double d = 2e-3;
      const Matrix m2 = geodesic(g0, x, u0 - 2 * d), m1 = geodesic(g0, x, u0 - d), c = geodesic(g0, x, u0),
                   p1 = geodesic(g0, x, u0 + d), p2 = geodesic(g0, x, u0 + 2 * d);
      const Matrix first = ((m2 - p2) + 8.0 * (p1 - m1)) / (12 * d);
      const Matrix second = (16.0 * (m1 + p1) - (m2 + p2) - 30.0 * c) / (12 * d * d);
      const SPDMatrix base(c);
      const Matrix res = second + christoffel(base, TangentVector(first), TangentVector(first)).entries();
      EXPECT_LT(res.cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed << " u " << u0;
    }
  }
}

TEST(SpdManifold, GeodesicOracleRejectsWrongSign) {
  const Matrix g0 = random_spd(3, 2, 8.0).entries();
  const Matrix x = random_symmetric(4, 2, 0.5);
  const double d = 2e-3;
  const Matrix m1 = geodesic(g0, x, -d), c = geodesic(g0, x, 0), p1 = geodesic(g0, x, d);
  const Matrix first = (p1 - m1) / (2 * d);
  const Matrix second = (p1 - 2.0 * c + m1) / (d * d);
  const SPDMatrix base(c);
  const Matrix wrong = second - christoffel(base, TangentVector(first), TangentVector(first)).entries();
  EXPECT_GT(wrong.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(SpdManifold, ProjectUnitDet) {
  EXPECT_TRUE(project_unit_det(SPDMatrix::identity(3)).entries().isApprox(Matrix::Identity(3, 3)));
  const auto p = project_unit_det(SPDMatrix(diag2(4.0, 1.0)));
  EXPECT_NEAR(p(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(p(1, 1), 0.5, 1e-15);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_spd(seed, 1 + seed % 6, 100.0);
    const auto once = project_unit_det(g);
    EXPECT_NEAR(once.entries().determinant(), 1.0, 1e-12);
    const auto twice = project_unit_det(once);
    EXPECT_LT((twice.entries() - once.entries()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SpdManifold, RandomSpdDeterministicAndConditioned) {
  const auto a = random_spd(42, 5, 30.0);
  const auto b = random_spd(42, 5, 30.0);
  EXPECT_EQ(a.entries(), b.entries());
  EXPECT_NE(random_spd(43, 5, 30.0).entries(), a.entries());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = random_spd(seed, 4, 30.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.entries());
    EXPECT_GT(es.eigenvalues()(0), 0.0);
    EXPECT_LE(es.eigenvalues()(3) / es.eigenvalues()(0), 30.0 * (1 + 1e-12));
    EXPECT_EQ(g.entries(), g.entries().transpose());
  }
  EXPECT_THROW(random_spd(1, 0, 2.0), std::invalid_argument);
  EXPECT_THROW(random_spd(1, 2, 0.5), std::invalid_argument);
}

TEST(SpdManifold, TraceFreeTangentVectors) {
  const SPDMatrix g(diag2(2.0, 0.5));
  // tr(G^-1 X) = 1/2 * 2 + 2 * (-0.5) = 0
  EXPECT_TRUE(TangentVector::trace_free_at(g, diag2(2.0, -0.5)).trace_free());
  EXPECT_THROW(TangentVector::trace_free_at(g, diag2(1.0, 1.0)), std::invalid_argument);
  EXPECT_FALSE(TangentVector(diag2(1.0, 1.0)).trace_free());
}
