/// @file nil3.hpp
/// @brief Left-invariant Ricci flow coupled to harmonic map flow on Nil^3.
///
/// Metrics g = A th1^2 + B th2^2 + C th3^2 in the Milnor frame, map
/// phi(x,y,z) = a x, coupling c(t) >= 0 non-increasing:
///
///     A' = C/B + 2 a^2 c(t),   B' = C/A,   C' = -C^2/(AB).
///
/// Phi = B C is conserved exactly by the flow.
#pragma once

#include "geoflow/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace geoflow::nil3 {

using ode::Trajectory;
using ode::Vector;

struct Nil3State {
  double A = 1.0;
  double B = 1.0;
  double C = 1.0;

  Nil3State() = default;
  Nil3State(double a, double b, double c) : A(a), B(b), C(c) {
    if (!(A > 0.0 && B > 0.0 && C > 0.0) || !std::isfinite(A) || !std::isfinite(B) || !std::isfinite(C)) {
      throw std::invalid_argument("Nil3State: coefficients must be finite and positive");
    }
  }

  static Nil3State from_vector(const Vector& v) { return {v(0), v(1), v(2)}; }
  Vector to_vector() const { return (Vector(3) << A, B, C).finished(); }
  double operator[](int i) const { return i == 0 ? A : (i == 1 ? B : C); }
};

enum class Component { A = 0, B = 1, C = 2 };

struct MapSlope {
  double a = 0.0;

  MapSlope() = default;
  explicit MapSlope(double slope) : a(slope) {
    if (!std::isfinite(a)) throw std::invalid_argument("MapSlope: slope must be finite");
  }
};

/// c(t) = 0, c0, or c0 (1 + lambda t)^{-r}. `time_scale` (lambda) is 1 for
/// user-built schedules and changes only under blowdown.
class CouplingSchedule {
 public:
  enum class Kind { zero, constant, power };

  static CouplingSchedule zero() { return CouplingSchedule(Kind::zero, 0.0, 0.0, 1.0); }
  static CouplingSchedule constant(double c0) { return CouplingSchedule(Kind::constant, c0, 0.0, 1.0); }
  static CouplingSchedule power(double c0, double r, double time_scale = 1.0) {
    return CouplingSchedule(Kind::power, c0, r, time_scale);
  }

  Kind kind() const { return kind_; }
  double c0() const { return c0_; }
  double r() const { return r_; }
  double time_scale() const { return time_scale_; }

  double operator()(double t) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::constant: return c0_;
      case Kind::power: return c0_ * std::pow(1.0 + time_scale_ * t, -r_);
    }
    return 0.0;
  }

  /// (s^2 c(s t)) as a schedule of the same family.
  CouplingSchedule blowdown(double s) const {
    switch (kind_) {
      case Kind::zero: return zero();
      case Kind::constant: return constant(s * s * c0_);
      case Kind::power: return power(s * s * c0_, r_, s * time_scale_);
    }
    return *this;
  }

  std::string to_string() const {
    switch (kind_) {
      case Kind::zero: return "zero";
      case Kind::constant: return "const:" + fmt(c0_);
      case Kind::power: return "power:" + fmt(c0_) + "," + fmt(r_);
    }
    return "";
  }

  /// Inverse of to_string: "zero", "const:<c0>" or "power:<c0>,<r>".
  static CouplingSchedule parse(const std::string& text) {
    auto number = [&](const std::string& tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = std::string::npos;
      }
      if (tok.empty() || used != tok.size()) throw std::invalid_argument("coupling: bad number '" + tok + "' in '" + text + "'");
      return v;
    };
    if (text == "zero") return zero();
    if (text.rfind("const:", 0) == 0) return constant(number(text.substr(6)));
    if (text.rfind("power:", 0) == 0) {
      const std::string rest = text.substr(6);
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw std::invalid_argument("coupling: expected power:<c0>,<r>, got '" + text + "'");
      return power(number(rest.substr(0, comma)), number(rest.substr(comma + 1)));
    }
    throw std::invalid_argument("coupling: expected zero | const:<c0> | power:<c0>,<r>, got '" + text + "'");
  }

 private:
  CouplingSchedule(Kind k, double c0, double r, double lambda) : kind_(k), c0_(c0), r_(r), time_scale_(lambda) {
    if (!(c0_ >= 0.0) || !std::isfinite(c0_)) throw std::invalid_argument("CouplingSchedule: c0 must be >= 0");
    if (k == Kind::power && !(r_ > 0.0)) throw std::invalid_argument("CouplingSchedule: r must be > 0");
    if (!(time_scale_ > 0.0)) throw std::invalid_argument("CouplingSchedule: time scale must be > 0");
  }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  Kind kind_;
  double c0_;
  double r_;
  double time_scale_;
};

struct Nil3Params {
  Nil3State state0;
  MapSlope slope;
  CouplingSchedule coupling = CouplingSchedule::zero();
  double phi0 = 1.0;

  Nil3Params(Nil3State s, MapSlope m, CouplingSchedule c)
      : state0(s), slope(m), coupling(c), phi0(s.B * s.C) {}

  /// f(t) = 2 a^2 c(t)
  double f(double t) const { return 2.0 * slope.a * slope.a * coupling(t); }
};

/// theta^i (x) theta^i coefficients of -2 Rc.
inline std::array<double, 3> minus_two_ricci(const Nil3State& s) {
  return {s.C / s.B, s.C / s.A, -s.C * s.C / (s.A * s.B)};
}

inline std::array<double, 3> rhs(const Nil3State& s, double t, const Nil3Params& p) {
  auto r = minus_two_ricci(s);
  r[0] += p.f(t);
  return r;
}

inline double conserved_phi(const Nil3State& s) { return s.B * s.C; }

inline ode::ODESystem make_system(const Nil3Params& p) {
  ode::ODESystem sys;
  sys.dimension = 3;
  sys.positive = {true, true, true};
  sys.rhs = [p](double t, const Vector& y) -> Vector {
    // Evaluated on trial stages too, so no positivity check here.
    const double A = y(0), B = y(1), C = y(2);
    Vector d(3);
    d(0) = C / B + p.f(t);
    d(1) = C / A;
    d(2) = -C * C / (A * B);
    return d;
  };
  return sys;
}

inline Trajectory integrate(const Nil3Params& p, double t_end, const ode::IntegratorConfig& cfg,
                            ode::IntegrationStats* stats = nullptr) {
  return ode::integrate_adaptive(make_system(p), 0.0, t_end, p.state0.to_vector(), cfg, {}, stats);
}

/// Closed-form Ricci flow (c = 0) for symmetric data A0 = B0:
/// A = B = (A0^3 + 3 Phi t)^{1/3}, C = Phi / A, Phi = A0 C0.
inline Nil3State exact_ricci_solution(double t, double A0, double C0) {
  if (!(A0 > 0.0 && C0 > 0.0)) throw std::invalid_argument("exact_ricci_solution: A0, C0 must be > 0");
  const double phi = A0 * C0;
  const double a = std::cbrt(A0 * A0 * A0 + 3.0 * phi * t);
  return {a, a, phi / a};
}

inline Nil3State exact_ricci_solution(double t, const Nil3State& initial) {
  if (initial.A != initial.B) {
    throw std::invalid_argument("exact_ricci_solution: closed form requires A0 == B0");
  }
  return exact_ricci_solution(t, initial.A, initial.C);
}

/// Samples the closed form on log-spaced times, for oracle comparisons.
inline Trajectory sample_exact_ricci(double A0, double C0, double t_end, int per_decade) {
  Trajectory tr;
  tr.samples_per_decade = per_decade;
  for (double t : ode::log_sample_times(0.0, t_end, per_decade)) {
    tr.times.push_back(t);
    tr.states.push_back(exact_ricci_solution(t, A0, C0).to_vector());
  }
  return tr;
}

/// (g, phi, c) -> (g(st)/s, phi(st)/s, s^2 c(st)).
inline std::pair<Nil3Params, Trajectory> blowdown(const Nil3Params& p, const Trajectory& traj, double s,
                                                  std::optional<std::pair<double, double>> window = std::nullopt) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("blowdown: s must be > 0");
  if (traj.empty()) throw std::invalid_argument("blowdown: empty trajectory");
  double lo = traj.times.front() / s;
  double hi = traj.times.back() / s;
  if (window) {
    if (!(window->first <= window->second)) throw std::invalid_argument("blowdown: empty window");
    if (window->first * s < traj.times.front() * (1 - 1e-14) || window->second * s > traj.times.back() * (1 + 1e-14)) {
      throw std::out_of_range("blowdown: requested window lies outside the source trajectory");
    }
    lo = window->first;
    hi = window->second;
  }
  Nil3Params q(Nil3State(p.state0.A / s, p.state0.B / s, p.state0.C / s), MapSlope(p.slope.a / s),
               p.coupling.blowdown(s));
  Trajectory out;
  out.samples_per_decade = traj.samples_per_decade;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k] / s;
    if (t < lo || t > hi) continue;
    out.times.push_back(t);
    out.states.push_back(traj.states[k] / s);
  }
  return {q, out};
}

namespace detail {

// Weights of the derivative at x0 of the Lagrange interpolant through xs.
template <std::size_t M>
std::array<double, M> derivative_weights(const std::array<double, M>& xs, double x0) {
  std::array<double, M> w{};
  for (std::size_t j = 0; j < M; ++j) {
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (m == j) continue;
      double prod = 1.0 / (xs[j] - xs[m]);
      for (std::size_t l = 0; l < M; ++l) {
        if (l == j || l == m) continue;
        prod *= (x0 - xs[l]) / (xs[j] - xs[l]);
      }
      sum += prod;
    }
    w[j] = sum;
  }
  return w;
}

}  // namespace detail

/// Max over interior samples of |d(state)/dt - rhs| / (1 + |rhs|). The
/// derivative comes from a Lagrange stencil in x = log(1 + t), the variable
/// in which samples are uniformly spaced: 7 points (off-centred near the
/// ends) when available, otherwise 5.
inline double flow_residual(const Trajectory& traj, const Nil3Params& p) {
  const std::size_t n = traj.size();
  if (n < 5) throw std::invalid_argument("flow_residual: need at least 5 samples");
  const std::size_t width = n >= 7 ? 7 : 5;
  double worst = 0.0;
  for (std::size_t m = 2; m + 2 < n; ++m) {
    const std::size_t first = std::min(m >= width / 2 ? m - width / 2 : 0, n - width);
    std::array<double, 7> xs{};
    for (std::size_t j = 0; j < width; ++j) xs[j] = std::log1p(traj.times[first + j]);
    const double x0 = std::log1p(traj.times[m]);
    std::array<double, 7> w{};
    if (width == 7) {
      w = detail::derivative_weights(xs, x0);
    } else {
      const auto w5 = detail::derivative_weights(std::array<double, 5>{xs[0], xs[1], xs[2], xs[3], xs[4]}, x0);
      std::copy(w5.begin(), w5.end(), w.begin());
    }
    const double t = traj.times[m];
    const auto r = rhs(Nil3State::from_vector(traj.states[m]), t, p);
    for (int c = 0; c < 3; ++c) {
      double dx = 0.0;
      for (std::size_t j = 0; j < width; ++j) dx += w[j] * traj.states[first + j](c);
      const double dt = dx / (1.0 + t);
      worst = std::max(worst, std::abs(dt - r[c]) / (1.0 + std::abs(r[c])));
    }
  }
  return worst;
}

struct PredictedConstants {
  double K = 0.0;
  /// Ricci regime prefactors (A0 K^{-1/3}, B0 K^{-1/3}, C0 K^{1/3}).
  std::array<double, 3> ricci_prefactors{};
  /// Constant coupling: A ~ f0 t and B^2 ~ kappa log t.
  std::optional<double> const_A_rate;
  std::optional<double> const_kappa;
  /// C ~ C_pref / sqrt(log t): conservation-consistent and as printed.
  std::optional<double> const_C_prefactor;
  std::optional<double> const_C_prefactor_printed;
  std::array<double, 3> power_exponents{1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0};
};

inline PredictedConstants predicted_constants(const Nil3Params& p) {
  PredictedConstants out;
  const Nil3State& s0 = p.state0;
  out.K = s0.A * s0.B / (3.0 * s0.C);
  const double k13 = std::cbrt(out.K);
  out.ricci_prefactors = {s0.A / k13, s0.B / k13, s0.C * k13};
  if (p.coupling.kind() == CouplingSchedule::Kind::constant) {
    const double a2c = p.slope.a * p.slope.a * p.coupling.c0();
    if (!(a2c > 0.0)) throw std::invalid_argument("predicted_constants: constant regime needs a^2 c > 0");
    out.const_A_rate = 2.0 * a2c;
    out.const_kappa = p.phi0 / a2c;
    out.const_C_prefactor = std::sqrt(a2c * p.phi0);
    out.const_C_prefactor_printed = 2.0 * std::sqrt(a2c * p.phi0);
  }
  return out;
}

struct BoundsReport {
  bool ok = true;
  double worst_slack = std::numeric_limits<double>::infinity();
  double worst_time = 0.0;
  std::string worst_check;
  std::size_t samples = 0;
};

/// Checks at every sample, with relative slacks:
///   A0 B0 C0 / (A0 B0 + C0 t) <= C <= C0
///   A0 B0 C0^2 / (A0 B0 + 2 C0 t) <= C^2
///   A <= A0 + (C0/B0 + f(0)) t
///   A, B non-decreasing and C non-increasing between samples.
inline BoundsReport bounds_check(const Trajectory& traj, const Nil3Params& p) {
  BoundsReport rep;
  const double A0 = p.state0.A, B0 = p.state0.B, C0 = p.state0.C;
  const double f0 = p.f(0.0);
  auto record = [&](double slack, double t, const char* name) {
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_time = t;
      rep.worst_check = name;
    }
  };
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k];
    const double A = traj.states[k](0), B = traj.states[k](1), C = traj.states[k](2);
    const double c_lo = A0 * B0 * C0 / (A0 * B0 + C0 * t);
    const double c2_lo = A0 * B0 * C0 * C0 / (A0 * B0 + 2.0 * C0 * t);
    const double a_hi = A0 + (C0 / B0 + f0) * t;
    record((C - c_lo) / c_lo, t, "C lower bound");
    record((C0 - C) / C0, t, "C upper bound");
    record((C * C - c2_lo) / c2_lo, t, "C^2 lower bound");
    record((a_hi - A) / a_hi, t, "A growth bound");
    if (k > 0) {
      const auto& prev = traj.states[k - 1];
      record((A - prev(0)) / A, t, "A non-decreasing");
      record((B - prev(1)) / B, t, "B non-decreasing");
      record((prev(2) - C) / prev(2), t, "C non-increasing");
    }
  }
  rep.samples = traj.size();
  rep.ok = rep.worst_slack >= 0.0;
  return rep;
}

/// max_k |Phi(t_k)/Phi_0 - 1|
inline double phi_drift(const Trajectory& traj) {
  if (traj.empty()) return 0.0;
  const double phi0 = traj.states.front()(1) * traj.states.front()(2);
  double worst = 0.0;
  for (const auto& s : traj.states) worst = std::max(worst, std::abs(s(1) * s(2) / phi0 - 1.0));
  return worst;
}

}  // namespace geoflow::nil3
