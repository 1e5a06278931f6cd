/// @file rrfs.hpp
/// @brief Rescaled locally R^N-invariant Ricci flow on flat periodic bases.
///
/// The total-space metric is g_ab dx^a dx^b + G_ij (dx^i + A_a^i dx^a)(dx^j + A_b^j dx^b)
/// over a base torus with coordinates x^a (a = 1..n). The fields evolve by
///
///   dg_ab/dt = -2 R_ab + 1/2 tr(G^-1 d_a G G^-1 d_b G) + g^cd G_ij dA^i_ac dA^j_bd - s g_ab
///   dA_a^i/dt = -(delta dA)_a^i + g^bc G^ij d_c G_jk dA^k_ba - (1+c)/2 s A_a^i
///   dG_ij/dt = Lap G_ij - g^ab (d_a G G^-1 d_b G)_ij
///              - 1/2 g^ac g^bd G_ik G_jl dA^k_ab dA^l_cd + c s G_ij
///
/// with (dA)_ab = d_a A_b - d_b A_a, (delta dA)_a = -g^bc nabla_c (dA)_ba and
/// Lap G = g^ab (d_a d_b G - Gamma^c_ab d_c G). Sums run over all index values.
#pragma once

#include "geoflow/ode.hpp"
#include "geoflow/periodic_grid.hpp"
#include "geoflow/spd_manifold.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace geoflow::rrfs {

using grid::d2_central;
using grid::d_central;
using grid::Matrix;
using grid::MatrixField;
using grid::PeriodicGrid;
using grid::ScalarField;

class RRFSError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Node-major fields: g (n x n), A (n x N, row a holds A_a^i), G (N x N).
/// Also used for time derivatives of a state, in which case the SPD
/// invariants do not apply.
struct RRFSState {
  int n = 1;
  int N = 1;
  MatrixField g;
  MatrixField A;
  MatrixField G;

  int nodes() const { return static_cast<int>(g.size()); }

  static RRFSState constant(const PeriodicGrid& grid, int N, const Matrix& g0, const Matrix& G0) {
    RRFSState s;
    s.n = grid.n_base();
    s.N = N;
    s.g.assign(grid.nodes(), g0);
    s.A.assign(grid.nodes(), Matrix::Zero(s.n, N));
    s.G.assign(grid.nodes(), G0);
    return s;
  }

  static RRFSState flat(const PeriodicGrid& grid, int N) {
    return constant(grid, N, Matrix::Identity(grid.n_base(), grid.n_base()), Matrix::Identity(N, N));
  }

  /// Returns the first node where g or G fails to be SPD.
  std::optional<std::string> spd_violation() const {
    for (int k = 0; k < nodes(); ++k) {
      if (!g[k].allFinite() || Eigen::LLT<Matrix>(g[k]).info() != Eigen::Success) {
        return "base metric g not SPD at node " + std::to_string(k);
      }
      if (!G[k].allFinite() || Eigen::LLT<Matrix>(G[k]).info() != Eigen::Success) {
        return "fiber metric G not SPD at node " + std::to_string(k);
      }
    }
    return std::nullopt;
  }

  void validate(const PeriodicGrid& grid) const {
    if (n != grid.n_base()) throw std::invalid_argument("RRFSState: base dimension does not match grid");
    if (N < 1) throw std::invalid_argument("RRFSState: fiber dimension must be >= 1");
    if (nodes() != grid.nodes() || static_cast<int>(A.size()) != grid.nodes() ||
        static_cast<int>(G.size()) != grid.nodes()) {
      throw std::invalid_argument("RRFSState: field sizes do not match grid");
    }
    for (int k = 0; k < nodes(); ++k) {
      if (g[k].rows() != n || g[k].cols() != n || A[k].rows() != n || A[k].cols() != N || G[k].rows() != N ||
          G[k].cols() != N) {
        throw std::invalid_argument("RRFSState: matrix shape mismatch at node " + std::to_string(k));
      }
    }
    if (auto v = spd_violation()) throw spd::NotPositiveDefinite("RRFSState: " + *v);
  }
};

struct RescalingSpec {
  enum class Mode { off, constant, volume };
  Mode mode = Mode::off;
  double s0 = 0.0;
  /// The constant c coupling s into the A and G equations.
  double c = 0.0;
};

/// Derivative data shared by every operator at one state.
struct Geometry {
  int n = 1, N = 1;
  MatrixField g_inv;
  ScalarField sqrt_det_g;
  std::vector<MatrixField> dg;       // [a][node]
  std::vector<MatrixField> Gamma;    // [c][node], Gamma[c](a,b) = Gamma^c_ab
  MatrixField G_inv;
  std::vector<MatrixField> dG;       // [a][node]
  std::vector<std::vector<MatrixField>> d2G;  // [a][b][node]
  std::vector<MatrixField> dA;       // [i][node], n x n antisymmetric
};

namespace detail {

inline MatrixField component_field(const MatrixField& A, int i) {
  MatrixField out(A.size());
  for (std::size_t k = 0; k < A.size(); ++k) out[k] = A[k].col(i);  // n x 1
  return out;
}

}  // namespace detail

/// (dA)^i_ab = d_a A_b^i - d_b A_a^i for each fiber index i.
inline std::vector<MatrixField> dA_field(const RRFSState& s, const PeriodicGrid& grid) {
  const int n = s.n;
  std::vector<MatrixField> out(s.N, MatrixField(grid.nodes(), Matrix::Zero(n, n)));
  std::vector<MatrixField> dAdx(n);  // [a][node] = d_a A (n x N)
  for (int a = 0; a < n; ++a) dAdx[a] = d_central(s.A, a, grid);
  for (int k = 0; k < grid.nodes(); ++k) {
    for (int i = 0; i < s.N; ++i) {
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) out[i][k](a, b) = dAdx[a][k](b, i) - dAdx[b][k](a, i);
      }
    }
  }
  return out;
}

/// Gamma^c_ab = 1/2 g^cd (d_a g_bd + d_b g_ad - d_d g_ab), as fields [c][node].
inline std::vector<MatrixField> christoffels_of_g(const RRFSState& s, const PeriodicGrid& grid,
                                                  const MatrixField* g_inv_in = nullptr,
                                                  const std::vector<MatrixField>* dg_in = nullptr) {
  const int n = s.n;
  std::vector<MatrixField> dg_local;
  if (!dg_in) {
    dg_local.resize(n);
    for (int a = 0; a < n; ++a) dg_local[a] = d_central(s.g, a, grid);
    dg_in = &dg_local;
  }
  const auto& dg = *dg_in;
  std::vector<MatrixField> gamma(n, MatrixField(grid.nodes(), Matrix::Zero(n, n)));
  for (int k = 0; k < grid.nodes(); ++k) {
    Matrix g_inv;
    if (g_inv_in) {
      g_inv = (*g_inv_in)[k];
    } else {
      Eigen::LLT<Matrix> llt(s.g[k]);
      if (llt.info() != Eigen::Success) throw spd::NotPositiveDefinite("christoffels_of_g: g not SPD at node " + std::to_string(k));
      g_inv = llt.solve(Matrix::Identity(n, n));
    }
    // lowered[d](a,b) = 1/2 (d_a g_bd + d_b g_ad - d_d g_ab)
    std::vector<Matrix> lowered(n, Matrix::Zero(n, n));
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          lowered[d](a, b) = 0.5 * (dg[a][k](b, d) + dg[b][k](a, d) - dg[d][k](a, b));
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
          double v = 0.0;
          for (int d = 0; d < n; ++d) v += g_inv(c, d) * lowered[d](a, b);
          gamma[c][k](a, b) = v;
          gamma[c][k](b, a) = v;
        }
  }
  return gamma;
}

inline Geometry compute_geometry(const RRFSState& s, const PeriodicGrid& grid) {
  Geometry geo;
  geo.n = s.n;
  geo.N = s.N;
  const int n = s.n, nodes = grid.nodes();
  geo.g_inv.resize(nodes);
  geo.sqrt_det_g.resize(nodes);
  geo.G_inv.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    Eigen::LLT<Matrix> lg(s.g[k]);
    if (lg.info() != Eigen::Success) throw spd::NotPositiveDefinite("g not SPD at node " + std::to_string(k));
    geo.g_inv[k] = lg.solve(Matrix::Identity(n, n));
    double d = 1.0;
    for (int a = 0; a < n; ++a) d *= lg.matrixLLT()(a, a);
    geo.sqrt_det_g[k] = d;
    Eigen::LLT<Matrix> lG(s.G[k]);
    if (lG.info() != Eigen::Success) throw spd::NotPositiveDefinite("G not SPD at node " + std::to_string(k));
    geo.G_inv[k] = lG.solve(Matrix::Identity(s.N, s.N));
  }
  geo.dg.resize(n);
  geo.dG.resize(n);
  geo.d2G.assign(n, std::vector<MatrixField>(n));
  for (int a = 0; a < n; ++a) {
    geo.dg[a] = d_central(s.g, a, grid);
    geo.dG[a] = d_central(s.G, a, grid);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      geo.d2G[a][b] = d2_central(s.G, a, b, grid);
      if (b != a) geo.d2G[b][a] = geo.d2G[a][b];
    }
  geo.Gamma = christoffels_of_g(s, grid, &geo.g_inv, &geo.dg);
  geo.dA = dA_field(s, grid);
  return geo;
}

/// -(delta dA)_a^i = g^bc nabla_c (dA)^i_ba, with the Levi-Civita correction
/// nabla_c F_ba = d_c F_ba - Gamma^l_cb F_la - Gamma^l_ca F_bl. Returned as
/// (delta dA) per node (n x N).
inline MatrixField delta_dA(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo) {
  const int n = s.n, N = s.N, nodes = grid.nodes();
  MatrixField out(nodes, Matrix::Zero(n, N));
  if (n == 1) return out;
  for (int i = 0; i < N; ++i) {
    std::vector<MatrixField> ddA(n);
    for (int c = 0; c < n; ++c) ddA[c] = d_central(geo.dA[i], c, grid);
    for (int k = 0; k < nodes; ++k) {
      const Matrix& F = geo.dA[i][k];
      for (int a = 0; a < n; ++a) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) {
            double cov = ddA[c][k](b, a);
            for (int l = 0; l < n; ++l) cov -= geo.Gamma[l][k](c, b) * F(l, a) + geo.Gamma[l][k](c, a) * F(b, l);
            acc += geo.g_inv[k](b, c) * cov;
          }
        out[k](a, i) = -acc;
      }
    }
  }
  return out;
}

inline MatrixField delta_dA(const RRFSState& s, const PeriodicGrid& grid) {
  return delta_dA(s, grid, compute_geometry(s, grid));
}

/// g^ab (d_a d_b G - Gamma^c_ab d_c G)
inline MatrixField laplacian_G(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo) {
  const int n = s.n, nodes = grid.nodes();
  MatrixField out(nodes, Matrix::Zero(s.N, s.N));
  for (int k = 0; k < nodes; ++k) {
    Matrix acc = Matrix::Zero(s.N, s.N);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Matrix hess = geo.d2G[a][b][k];
        for (int c = 0; c < n; ++c) hess -= geo.Gamma[c][k](a, b) * geo.dG[c][k];
        acc += geo.g_inv[k](a, b) * hess;
      }
    out[k] = acc;
  }
  return out;
}

inline MatrixField laplacian_G(const RRFSState& s, const PeriodicGrid& grid) {
  return laplacian_G(s, grid, compute_geometry(s, grid));
}

/// Lap G - g^ab d_a G G^-1 d_b G
inline MatrixField tension_G_simplified(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo) {
  MatrixField out = laplacian_G(s, grid, geo);
  for (int k = 0; k < grid.nodes(); ++k) {
    for (int a = 0; a < s.n; ++a)
      for (int b = 0; b < s.n; ++b) out[k] -= geo.g_inv[k](a, b) * (geo.dG[a][k] * geo.G_inv[k] * geo.dG[b][k]);
  }
  return out;
}

inline MatrixField tension_G_simplified(const RRFSState& s, const PeriodicGrid& grid) {
  return tension_G_simplified(s, grid, compute_geometry(s, grid));
}

/// Christoffel map of the target, (G^-1, X, Y) -> Gamma_G(X, Y).
using TargetChristoffel = std::function<Matrix(const Matrix& G_inv, const Matrix& X, const Matrix& Y)>;

inline Matrix spd_christoffel(const Matrix& G_inv, const Matrix& X, const Matrix& Y) {
  return spd::christoffel_raw(G_inv, X, Y);
}

/// Trace over g of the second fundamental form of G: B -> SPD cone,
/// g^ab (d_a d_b G - Gamma^c_ab d_c G + Gamma_G(d_a G, d_b G)).
inline MatrixField tension_G_general(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo,
                                     const TargetChristoffel& target = spd_christoffel) {
  MatrixField out = laplacian_G(s, grid, geo);
  for (int k = 0; k < grid.nodes(); ++k) {
    for (int a = 0; a < s.n; ++a)
      for (int b = 0; b < s.n; ++b)
        out[k] += geo.g_inv[k](a, b) * target(geo.G_inv[k], geo.dG[a][k], geo.dG[b][k]);
  }
  return out;
}

inline MatrixField tension_G_general(const RRFSState& s, const PeriodicGrid& grid,
                                     const TargetChristoffel& target = spd_christoffel) {
  return tension_G_general(s, grid, compute_geometry(s, grid), target);
}

/// g^ab tr(G^-1 d_a G G^-1 d_b G) per node.
inline ScalarField grad_G_norm2(const RRFSState& s, const Geometry& geo) {
  ScalarField out(s.nodes(), 0.0);
  for (int k = 0; k < s.nodes(); ++k) {
    std::vector<Matrix> m(s.n);
    for (int a = 0; a < s.n; ++a) m[a] = geo.G_inv[k] * geo.dG[a][k];
    double acc = 0.0;
    for (int a = 0; a < s.n; ++a)
      for (int b = 0; b < s.n; ++b) acc += geo.g_inv[k](a, b) * (m[a].transpose().cwiseProduct(m[b])).sum();
    out[k] = acc;
  }
  return out;
}

/// g^ac g^bd G_ij dA^i_ab dA^j_cd per node.
inline ScalarField dA_norm2(const RRFSState& s, const Geometry& geo) {
  ScalarField out(s.nodes(), 0.0);
  if (s.n == 1) return out;
  for (int k = 0; k < s.nodes(); ++k) {
    double acc = 0.0;
    for (int i = 0; i < s.N; ++i)
      for (int j = 0; j < s.N; ++j) {
        // raised(c,d) = g^ac g^bd dA^i_ab
        const Matrix raised = geo.g_inv[k] * geo.dA[i][k] * geo.g_inv[k];
        acc += s.G[k](i, j) * (raised.cwiseProduct(geo.dA[j][k])).sum();
      }
    out[k] = acc;
  }
  return out;
}

/// E(G) = 1/2 sum_nodes g^ab tr(G^-1 d_a G G^-1 d_b G) sqrt(det g) prod h.
inline double energy_G(const RRFSState& s, const PeriodicGrid& grid) {
  const Geometry geo = compute_geometry(s, grid);
  const ScalarField e = grad_G_norm2(s, geo);
  double acc = 0.0;
  for (int k = 0; k < s.nodes(); ++k) acc += e[k] * geo.sqrt_det_g[k];
  return 0.5 * acc * grid.cell_volume();
}

/// Ricci tensor of g per node,
/// R_bd = d_c Gamma^c_bd - d_d Gamma^c_bc + Gamma^c_cl Gamma^l_bd - Gamma^c_dl Gamma^l_bc.
inline MatrixField ricci_of_g(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo) {
  const int n = s.n, nodes = grid.nodes();
  MatrixField out(nodes, Matrix::Zero(n, n));
  if (n == 1) return out;
  // dGamma[e][c][node] = d_e Gamma^c
  std::vector<std::vector<MatrixField>> dGamma(n, std::vector<MatrixField>(n));
  for (int e = 0; e < n; ++e)
    for (int c = 0; c < n; ++c) dGamma[e][c] = d_central(geo.Gamma[c], e, grid);
  for (int k = 0; k < nodes; ++k) {
    for (int b = 0; b < n; ++b)
      for (int d = b; d < n; ++d) {
        double r = 0.0;
        for (int c = 0; c < n; ++c) {
          r += dGamma[c][c][k](b, d) - dGamma[d][c][k](b, c);
          for (int l = 0; l < n; ++l) {
            r += geo.Gamma[c][k](c, l) * geo.Gamma[l][k](b, d) - geo.Gamma[c][k](d, l) * geo.Gamma[l][k](b, c);
          }
        }
        out[k](b, d) = r;
        out[k](d, b) = r;
      }
  }
  return out;
}

inline ScalarField scalar_curvature(const RRFSState& s, const PeriodicGrid& grid, const Geometry& geo) {
  ScalarField out(grid.nodes(), 0.0);
  if (s.n == 1) return out;
  const MatrixField ric = ricci_of_g(s, grid, geo);
  for (int k = 0; k < grid.nodes(); ++k) out[k] = (geo.g_inv[k].cwiseProduct(ric[k])).sum();
  return out;
}

inline ScalarField scalar_curvature(const RRFSState& s, const PeriodicGrid& grid) {
  return scalar_curvature(s, grid, compute_geometry(s, grid));
}

/// Discrete base volume sum sqrt(det g) prod h.
inline double volume(const RRFSState& s, const PeriodicGrid& grid) {
  double acc = 0.0;
  for (int k = 0; k < s.nodes(); ++k) acc += std::sqrt(s.g[k].determinant());
  return acc * grid.cell_volume();
}

namespace detail {

inline double s_volume_from(const RRFSState& s, const Geometry& geo, const ScalarField& R) {
  const ScalarField grad = grad_G_norm2(s, geo);
  const ScalarField da = dA_norm2(s, geo);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < s.nodes(); ++k) {
    const double r = R[k] - 0.25 * grad[k] - 0.5 * da[k];
    num += r * geo.sqrt_det_g[k];
    den += geo.sqrt_det_g[k];
  }
  return -(2.0 / s.n) * num / den;
}

}  // namespace detail

/// s = -(2/n) <r>, r = R - 1/4 |grad G|^2 - 1/2 |dA|^2, averaged against sqrt(det g).
inline double s_volume(const RRFSState& s, const PeriodicGrid& grid) {
  const Geometry geo = compute_geometry(s, grid);
  return detail::s_volume_from(s, geo, scalar_curvature(s, grid, geo));
}

/// Each term of the right-hand side, kept separately for inspection.
struct RRFSTerms {
  double s = 0.0;
  MatrixField g_ricci, g_grad_G, g_dA, g_rescale;
  MatrixField A_delta_dA, A_coupling, A_rescale;
  MatrixField G_tension, G_dA, G_rescale;

  RRFSState total(int n, int N) const {
    RRFSState out;
    out.n = n;
    out.N = N;
    const std::size_t nodes = g_ricci.size();
    out.g.resize(nodes);
    out.A.resize(nodes);
    out.G.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      out.g[k] = g_ricci[k] + g_grad_G[k] + g_dA[k] + g_rescale[k];
      out.A[k] = A_delta_dA[k] + A_coupling[k] + A_rescale[k];
      out.G[k] = G_tension[k] + G_dA[k] + G_rescale[k];
    }
    return out;
  }
};

inline RRFSTerms rrfs_terms(const RRFSState& st, const PeriodicGrid& grid, const RescalingSpec& spec) {
  const Geometry geo = compute_geometry(st, grid);
  const int n = st.n, N = st.N, nodes = grid.nodes();
  RRFSTerms t;
  const MatrixField ric = ricci_of_g(st, grid, geo);
  switch (spec.mode) {
    case RescalingSpec::Mode::off: t.s = 0.0; break;
    case RescalingSpec::Mode::constant: t.s = spec.s0; break;
    case RescalingSpec::Mode::volume: {
      ScalarField R(nodes, 0.0);
      for (int k = 0; k < nodes; ++k) R[k] = (geo.g_inv[k].cwiseProduct(ric[k])).sum();
      t.s = detail::s_volume_from(st, geo, R);
      break;
    }
  }
  const double s = t.s;
  t.g_ricci.resize(nodes);
  t.g_grad_G.resize(nodes);
  t.g_dA.resize(nodes);
  t.g_rescale.resize(nodes);
  t.A_coupling.resize(nodes);
  t.A_rescale.resize(nodes);
  t.G_dA.resize(nodes);
  t.G_rescale.resize(nodes);
  MatrixField ddA = delta_dA(st, grid, geo);
  t.A_delta_dA.resize(nodes);
  t.G_tension = tension_G_simplified(st, grid, geo);

  for (int k = 0; k < nodes; ++k) {
    const Matrix& gi = geo.g_inv[k];
    t.g_ricci[k] = -2.0 * ric[k];

    std::vector<Matrix> m(n);  // G^-1 d_a G
    for (int a = 0; a < n; ++a) m[a] = geo.G_inv[k] * geo.dG[a][k];
    Matrix gg(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        const double v = 0.5 * (m[a].transpose().cwiseProduct(m[b])).sum();
        gg(a, b) = v;
        gg(b, a) = v;
      }
    t.g_grad_G[k] = gg;

    Matrix gda = Matrix::Zero(n, n);
    Matrix Gda = Matrix::Zero(N, N);
    Matrix coupling = Matrix::Zero(n, N);
    if (n > 1) {
      // g^cd G_ij dA^i_ac dA^j_bd
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          if (st.G[k](i, j) == 0.0) continue;
          gda += st.G[k](i, j) * (geo.dA[i][k] * gi * geo.dA[j][k].transpose());
        }
      // -1/2 g^ac g^bd (G dA_ab)_i (G dA_cd)_j
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          double acc = 0.0;
          for (int kk = 0; kk < N; ++kk)
            for (int l = 0; l < N; ++l) {
              const double w = st.G[k](i, kk) * st.G[k](j, l);
              if (w == 0.0) continue;
              acc += w * ((gi * geo.dA[kk][k] * gi).cwiseProduct(geo.dA[l][k])).sum();
            }
          Gda(i, j) = -0.5 * acc;
        }
      // g^bc G^ij d_c G_jk dA^k_ba
      std::vector<Matrix> mg(n);  // G^-1 d_c G
      for (int c = 0; c < n; ++c) mg[c] = geo.G_inv[k] * geo.dG[c][k];
      for (int a = 0; a < n; ++a)
        for (int i = 0; i < N; ++i) {
          double acc = 0.0;
          for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
              if (gi(b, c) == 0.0) continue;
              double inner = 0.0;
              for (int kk = 0; kk < N; ++kk) inner += mg[c](i, kk) * geo.dA[kk][k](b, a);
              acc += gi(b, c) * inner;
            }
          coupling(a, i) = acc;
        }
    }
    t.g_dA[k] = gda;
    t.G_dA[k] = Gda;
    t.A_coupling[k] = coupling;
    t.A_delta_dA[k] = -ddA[k];

    t.g_rescale[k] = -s * st.g[k];
    t.A_rescale[k] = -0.5 * (1.0 + spec.c) * s * st.A[k];
    t.G_rescale[k] = spec.c * s * st.G[k];
  }
  return t;
}

/// Time derivative of the state.
inline RRFSState rrfs_rhs(const RRFSState& st, const PeriodicGrid& grid, const RescalingSpec& spec) {
  RRFSState d = rrfs_terms(st, grid, spec).total(st.n, st.N);
  for (int k = 0; k < d.nodes(); ++k) {
    d.g[k] = 0.5 * (d.g[k] + d.g[k].transpose()).eval();
    d.G[k] = 0.5 * (d.G[k] + d.G[k].transpose()).eval();
  }
  return d;
}

// ---------------------------------------------------------------------------
// Method-of-lines integration

inline std::size_t packed_size(int n, int N, int nodes) {
  return static_cast<std::size_t>(nodes) * static_cast<std::size_t>(n * n + n * N + N * N);
}

inline ode::Vector pack(const RRFSState& s) {
  ode::Vector v(static_cast<Eigen::Index>(packed_size(s.n, s.N, s.nodes())));
  Eigen::Index p = 0;
  for (int k = 0; k < s.nodes(); ++k) {
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.n; ++j) v(p++) = s.g[k](i, j);
    for (int i = 0; i < s.n; ++i)
      for (int j = 0; j < s.N; ++j) v(p++) = s.A[k](i, j);
    for (int i = 0; i < s.N; ++i)
      for (int j = 0; j < s.N; ++j) v(p++) = s.G[k](i, j);
  }
  return v;
}

inline RRFSState unpack(const ode::Vector& v, int n, int N, int nodes) {
  RRFSState s;
  s.n = n;
  s.N = N;
  s.g.assign(nodes, Matrix(n, n));
  s.A.assign(nodes, Matrix(n, N));
  s.G.assign(nodes, Matrix(N, N));
  Eigen::Index p = 0;
  for (int k = 0; k < nodes; ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s.g[k](i, j) = v(p++);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < N; ++j) s.A[k](i, j) = v(p++);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) s.G[k](i, j) = v(p++);
  }
  return s;
}

struct RRFSIntegratorConfig {
  ode::IntegratorConfig ode;
  double kappa_cfl = 0.2;
  /// A CFL-limited step below cfl_floor * t_end is reported as collapse.
  double cfl_floor = 1e-12;
};

/// dt <= kappa h_min^2 min_k lambda_min(g_k), i.e. kappa h^2 / max eig(g^-1).
inline double cfl_step(const RRFSState& s, const PeriodicGrid& grid, double kappa) {
  double h = grid.spacing(0);
  if (grid.n_base() == 2) h = std::min(h, grid.spacing(1));
  double lam = std::numeric_limits<double>::infinity();
  for (const auto& gk : s.g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gk, Eigen::EigenvaluesOnly);
    lam = std::min(lam, es.eigenvalues()(0));
  }
  return kappa * h * h * lam;
}

struct RRFSRun {
  std::vector<double> times;
  std::vector<RRFSState> states;
  ode::IntegrationStats stats;
};

using RRFSObserver = std::function<void(double t, const RRFSState&)>;

/// Explicit adaptive integration of the field equations with a CFL step cap
/// and an SPD guard on g and G.
inline RRFSRun integrate_rrfs(const RRFSState& state0, const PeriodicGrid& grid, const RescalingSpec& spec,
                              double t_end, const RRFSIntegratorConfig& cfg, const RRFSObserver& observer = {}) {
  state0.validate(grid);
  const int n = state0.n, N = state0.N, nodes = grid.nodes();
  ode::ODESystem sys;
  sys.dimension = packed_size(n, N, nodes);
  sys.rhs = [&](double, const ode::Vector& y) {
    return pack(rrfs_rhs(unpack(y, n, N, nodes), grid, spec));
  };
  sys.guard = [&](double, const ode::Vector& y) { return unpack(y, n, N, nodes).spd_violation(); };
  sys.step_cap = [&](double t, const ode::Vector& y) {
    const double cap = cfl_step(unpack(y, n, N, nodes), grid, cfg.kappa_cfl);
    if (!(cap > cfg.cfl_floor * std::max(t_end, 1.0))) {
      throw RRFSError("CFL collapse at t=" + std::to_string(t) + ": step cap " + std::to_string(cap));
    }
    return cap;
  };
  ode::IntegratorConfig oc = cfg.ode;
  oc.h_init = std::min(oc.h_init, cfl_step(state0, grid, cfg.kappa_cfl));
  oc.h_max = std::max(oc.h_max, oc.h_init);
  ode::StepObserver obs;
  if (observer) obs = [&](double t, const ode::Vector& y) { observer(t, unpack(y, n, N, nodes)); };
  RRFSRun run;
  ode::Trajectory tr;
  try {
    tr = ode::integrate_adaptive(sys, 0.0, t_end, pack(state0), oc, obs, &run.stats);
  } catch (const ode::IntegrationError& e) {
    throw RRFSError(std::string("integrate_rrfs: ") + e.what());
  }
  run.times = tr.times;
  for (const auto& y : tr.states) run.states.push_back(unpack(y, n, N, nodes));
  return run;
}

/// Harmonic map flow of G alone, dG/dt = tension_G_simplified, with g and A
/// held fixed at their initial values. Same step control as integrate_rrfs.
inline RRFSRun integrate_harmonic_map(const RRFSState& state0, const PeriodicGrid& grid, double t_end,
                                      const RRFSIntegratorConfig& cfg, const RRFSObserver& observer = {}) {
  state0.validate(grid);
  const int N = state0.N, nodes = grid.nodes();
  auto with_G = [&](const ode::Vector& y) {
    RRFSState s = state0;
    Eigen::Index p = 0;
    for (int k = 0; k < nodes; ++k)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) s.G[k](i, j) = y(p++);
    return s;
  };
  auto pack_G = [&](const MatrixField& G) {
    ode::Vector v(static_cast<Eigen::Index>(nodes) * N * N);
    Eigen::Index p = 0;
    for (int k = 0; k < nodes; ++k)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) v(p++) = G[k](i, j);
    return v;
  };
  ode::ODESystem sys;
  sys.dimension = static_cast<std::size_t>(nodes) * N * N;
  sys.rhs = [&](double, const ode::Vector& y) {
    MatrixField d = tension_G_simplified(with_G(y), grid);
    for (auto& m : d) m = 0.5 * (m + m.transpose()).eval();
    return pack_G(d);
  };
  sys.guard = [&](double, const ode::Vector& y) { return with_G(y).spd_violation(); };
  const double cap = cfl_step(state0, grid, cfg.kappa_cfl);
  sys.step_cap = [cap](double, const ode::Vector&) { return cap; };
  ode::IntegratorConfig oc = cfg.ode;
  oc.h_init = std::min(oc.h_init, cap);
  oc.h_max = std::max(oc.h_max, oc.h_init);
  ode::StepObserver obs;
  if (observer) obs = [&](double t, const ode::Vector& y) { observer(t, with_G(y)); };
  RRFSRun run;
  ode::Trajectory tr;
  try {
    tr = ode::integrate_adaptive(sys, 0.0, t_end, pack_G(state0.G), oc, obs, &run.stats);
  } catch (const ode::IntegrationError& e) {
    throw RRFSError(std::string("integrate_harmonic_map: ") + e.what());
  }
  run.times = tr.times;
  for (const auto& y : tr.states) run.states.push_back(with_G(y));
  return run;
}

// ---------------------------------------------------------------------------
// Initial data

struct SmoothFieldOptions {
  double g_amplitude = 0.1;
  double A_amplitude = 0.1;
  double G_amplitude = 0.3;
  int modes = 2;
};

namespace detail {

// Sum over low Fourier modes with random coefficient matrices.
inline MatrixField random_fourier(const PeriodicGrid& grid, int rows, int cols, bool symmetric, double amplitude,
                                  int modes, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
    if (symmetric) m = 0.5 * (m + m.transpose()).eval();
    return m;
  };
  MatrixField out(grid.nodes(), Matrix::Zero(rows, cols));
  const int m1max = grid.n_base() == 2 ? modes : 0;
  for (int m0 = 0; m0 <= modes; ++m0)
    for (int m1 = -m1max; m1 <= m1max; ++m1) {
      if (m0 == 0 && m1 <= 0) continue;
      const double weight = amplitude / (m0 * m0 + m1 * m1);
      const Matrix c = draw() * weight, s = draw() * weight;
      for (int k = 0; k < grid.nodes(); ++k) {
        const auto x = grid.coords(k);
        const double ph = 2 * std::numbers::pi * (m0 * x[0] / grid.period(0) +
                                                  (grid.n_base() == 2 ? m1 * x[1] / grid.period(1) : 0.0));
        out[k] += std::cos(ph) * c + std::sin(ph) * s;
      }
    }
  return out;
}

}  // namespace detail

/// Smooth random periodic state: g = exp(S_g), G = G0^{1/2} exp(S_G) G0^{1/2}
/// with S_g, S_G low-mode symmetric fields, and a low-mode A.
inline RRFSState random_smooth_state(const PeriodicGrid& grid, int N, std::uint64_t seed,
                                     const SmoothFieldOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  const int n = grid.n_base();
  RRFSState s;
  s.n = n;
  s.N = N;
  const Matrix G0 = spd::random_spd(seed ^ 0x9e3779b97f4a7c15ULL, N, 4.0).entries();
  const Matrix G0h = spd::symmetric_function(G0, [](double x) { return std::sqrt(x); });
  const MatrixField Sg = detail::random_fourier(grid, n, n, true, opt.g_amplitude, opt.modes, rng);
  const MatrixField SA = detail::random_fourier(grid, n, N, false, opt.A_amplitude, opt.modes, rng);
  const MatrixField SG = detail::random_fourier(grid, N, N, true, opt.G_amplitude, opt.modes, rng);
  s.g.resize(grid.nodes());
  s.A = SA;
  s.G.resize(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k) {
    s.g[k] = spd::symmetric_function(Sg[k], [](double x) { return std::exp(x); });
    s.G[k] = G0h * spd::symmetric_function(SG[k], [](double x) { return std::exp(x); }) * G0h;
    s.G[k] = 0.5 * (s.G[k] + s.G[k].transpose()).eval();
  }
  return s;
}

/// Flat g, A = 0, G = exp(eps sin(x) E) with E a fixed symmetric direction;
/// the S^1 smoothing scenario.
inline RRFSState perturbed_fiber_state(const PeriodicGrid& grid, int N, double eps) {
  RRFSState s = RRFSState::flat(grid, N);
  Matrix E = Matrix::Zero(N, N);
  E(0, 0) = 1.0;
  if (N > 1) {
    E(N - 1, N - 1) = -1.0;
    E(0, N - 1) = E(N - 1, 0) = 0.5;
  }
  for (int k = 0; k < grid.nodes(); ++k) {
    const auto x = grid.coords(k);
    double ph = std::sin(2 * std::numbers::pi * x[0] / grid.period(0));
    if (grid.n_base() == 2) ph += 0.5 * std::cos(2 * std::numbers::pi * x[1] / grid.period(1));
    s.G[k] = spd::symmetric_function(eps * ph * E, [](double v) { return std::exp(v); });
  }
  return s;
}

/// max over nodes of |G_k - mean G|_max
inline double sup_distance_to_mean(const RRFSState& s) {
  Matrix mean = Matrix::Zero(s.N, s.N);
  for (const auto& G : s.G) mean += G;
  mean /= static_cast<double>(s.G.size());
  double worst = 0.0;
  for (const auto& G : s.G) worst = std::max(worst, (G - mean).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace geoflow::rrfs
