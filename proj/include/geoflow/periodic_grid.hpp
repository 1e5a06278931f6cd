/// @file periodic_grid.hpp
/// @brief Uniform periodic grids on flat tori (n = 1, 2) and 4th-order
/// central differences on node-major fields of small dense matrices.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace geoflow::grid {

using Matrix = Eigen::MatrixXd;
using MatrixField = std::vector<Matrix>;
using ScalarField = std::vector<double>;

class PeriodicGrid {
 public:
  PeriodicGrid(int n_base, std::array<int, 2> sizes, std::array<double, 2> period = {2 * std::numbers::pi,
                                                                                       2 * std::numbers::pi})
      : n_base_(n_base), sizes_(sizes), period_(period) {
    if (n_base_ != 1 && n_base_ != 2) throw std::invalid_argument("PeriodicGrid: base dimension must be 1 or 2");
    if (n_base_ == 1) {
      sizes_[1] = 1;
      period_[1] = 1.0;
    }
    for (int a = 0; a < n_base_; ++a) {
      if (sizes_[a] < 8) throw std::invalid_argument("PeriodicGrid: need at least 8 points per axis");
      if (!(period_[a] > 0.0)) throw std::invalid_argument("PeriodicGrid: period must be > 0");
    }
  }

  static PeriodicGrid line(int size, double period = 2 * std::numbers::pi) {
    return PeriodicGrid(1, {size, 1}, {period, 1.0});
  }
  static PeriodicGrid square(int size, double period = 2 * std::numbers::pi) {
    return PeriodicGrid(2, {size, size}, {period, period});
  }

  int n_base() const { return n_base_; }
  int size(int axis) const { return sizes_[axis]; }
  const std::array<int, 2>& sizes() const { return sizes_; }
  double period(int axis) const { return period_[axis]; }
  double spacing(int axis) const { return period_[axis] / sizes_[axis]; }
  int nodes() const { return sizes_[0] * sizes_[1]; }

  /// Product of spacings over the base axes.
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < n_base_; ++a) v *= spacing(a);
    return v;
  }

  int index(int i0, int i1) const { return i0 + sizes_[0] * i1; }

  /// Node index shifted by `offset` along `axis` with periodic wraparound.
  int shifted(int node, int axis, int offset) const {
    int i0 = node % sizes_[0];
    int i1 = node / sizes_[0];
    if (axis == 0) {
      i0 = ((i0 + offset) % sizes_[0] + sizes_[0]) % sizes_[0];
    } else {
      i1 = ((i1 + offset) % sizes_[1] + sizes_[1]) % sizes_[1];
    }
    return index(i0, i1);
  }

  /// Coordinates of a node.
  std::array<double, 2> coords(int node) const {
    return {(node % sizes_[0]) * spacing(0), n_base_ == 2 ? (node / sizes_[0]) * spacing(1) : 0.0};
  }

  void check_axis(int axis) const {
    if (axis < 0 || axis >= n_base_) throw std::out_of_range("PeriodicGrid: axis out of range");
  }

 private:
  int n_base_;
  std::array<int, 2> sizes_;
  std::array<double, 2> period_;
};

/// 4th-order first derivative: (f[-2] - 8 f[-1] + 8 f[+1] - f[+2]) / 12h.
template <class T>
std::vector<T> d_central(const std::vector<T>& field, int axis, const PeriodicGrid& grid) {
  grid.check_axis(axis);
  if (static_cast<int>(field.size()) != grid.nodes()) throw std::invalid_argument("d_central: field size mismatch");
  const double inv = 1.0 / (12.0 * grid.spacing(axis));
  std::vector<T> out(field.size());
  for (int k = 0; k < grid.nodes(); ++k) {
    const T& m2 = field[grid.shifted(k, axis, -2)];
    const T& m1 = field[grid.shifted(k, axis, -1)];
    const T& p1 = field[grid.shifted(k, axis, 1)];
    const T& p2 = field[grid.shifted(k, axis, 2)];
    out[k] = ((m2 - p2) + 8.0 * (p1 - m1)) * inv;
  }
  return out;
}

/// Second derivative d^2/dx_a dx_b. Pure second derivatives use the 5-point
/// stencil (-1, 16, -30, 16, -1) / 12h^2; mixed ones compose d_central.
template <class T>
std::vector<T> d2_central(const std::vector<T>& field, int axis1, int axis2, const PeriodicGrid& grid) {
  grid.check_axis(axis1);
  grid.check_axis(axis2);
  if (axis1 != axis2) return d_central(d_central(field, axis1, grid), axis2, grid);
  if (static_cast<int>(field.size()) != grid.nodes()) throw std::invalid_argument("d2_central: field size mismatch");
  const double h = grid.spacing(axis1);
  const double inv = 1.0 / (12.0 * h * h);
  std::vector<T> out(field.size());
  for (int k = 0; k < grid.nodes(); ++k) {
    const T& m2 = field[grid.shifted(k, axis1, -2)];
    const T& m1 = field[grid.shifted(k, axis1, -1)];
    const T& c = field[k];
    const T& p1 = field[grid.shifted(k, axis1, 1)];
    const T& p2 = field[grid.shifted(k, axis1, 2)];
    out[k] = (16.0 * (m1 + p1) - (m2 + p2) - 30.0 * c) * inv;
  }
  return out;
}

}  // namespace geoflow::grid
