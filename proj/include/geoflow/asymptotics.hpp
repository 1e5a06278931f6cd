/// @file asymptotics.hpp
/// @brief Regression fits for long-time behaviour of trajectory components:
/// power laws Q ~ P t^p and logarithmic growth Q^2 ~ kappa log t.
#pragma once

#include "geoflow/ode.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoflow::asymptotics {

using ode::Trajectory;

enum class FitMode { power_law, log_growth };

struct AsymptoticFit {
  /// power_law: fitted p. log_growth: 1/2, the nominal exponent in log t.
  double exponent = 0.0;
  /// power_law: P in Q ~ P t^p. log_growth: kappa in Q^2 ~ kappa log t.
  double prefactor = 0.0;
  double intercept = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  double r_squared = 0.0;
  std::size_t samples = 0;
  FitMode mode = FitMode::power_law;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? std::min(1.0, (sxy * sxy) / (sxx * syy)) : 1.0;
  return f;
}

namespace detail {

struct WindowSamples {
  std::vector<double> t;
  std::vector<double> q;
};

inline WindowSamples select(const Trajectory& traj, int component, std::pair<double, double> window) {
  const auto [lo, hi] = window;
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("fit: window must satisfy 0 < t_lo < t_hi");
  if (hi / lo < 100.0 * (1.0 - 1e-9)) throw std::invalid_argument("fit: window must span at least two decades");
  if (traj.empty() || lo < traj.times.front() * (1.0 - 1e-12) || hi > traj.times.back() * (1.0 + 1e-12)) {
    throw std::out_of_range("fit: window lies outside the trajectory");
  }
  WindowSamples ws;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k];
    if (t < lo * (1.0 - 1e-12) || t > hi * (1.0 + 1e-12)) continue;
    const double q = traj.states[k](component);
    if (!(q > 0.0)) throw std::domain_error("fit: nonpositive sample at t=" + std::to_string(t));
    ws.t.push_back(t);
    ws.q.push_back(q);
  }
  if (ws.t.size() < 3) throw std::invalid_argument("fit: fewer than three samples in window");
  return ws;
}

}  // namespace detail

/// Default window: the last two decades of the trajectory.
inline std::pair<double, double> last_two_decades(const Trajectory& traj) {
  const double hi = traj.times.back();
  return {hi / 100.0, hi};
}

/// log Q = log P + p log t by least squares.
inline AsymptoticFit fit_power_law(const Trajectory& traj, int component, std::pair<double, double> window) {
  const auto ws = detail::select(traj, component, window);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ws.t.size(); ++i) {
    x.push_back(std::log(ws.t[i]));
    y.push_back(std::log(ws.q[i]));
  }
  const auto lf = least_squares(x, y);
  AsymptoticFit f;
  f.exponent = lf.slope;
  f.intercept = lf.intercept;
  f.prefactor = std::exp(lf.intercept);
  f.r_squared = lf.r_squared;
  f.t_lo = window.first;
  f.t_hi = window.second;
  f.samples = ws.t.size();
  f.mode = FitMode::power_law;
  return f;
}

/// Prefactor P of Q ~ P t^p with p held fixed: exp(mean(log Q - p log t)).
inline AsymptoticFit fit_prefactor(const Trajectory& traj, int component, std::pair<double, double> window,
                                   double exponent) {
  const auto ws = detail::select(traj, component, window);
  double mean = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ws.t.size(); ++i) {
    mean += std::log(ws.q[i]) - exponent * std::log(ws.t[i]);
    my += std::log(ws.q[i]);
  }
  const double n = static_cast<double>(ws.t.size());
  mean /= n;
  my /= n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < ws.t.size(); ++i) {
    const double ly = std::log(ws.q[i]);
    const double pred = mean + exponent * std::log(ws.t[i]);
    ss_res += (ly - pred) * (ly - pred);
    ss_tot += (ly - my) * (ly - my);
  }
  AsymptoticFit f;
  f.exponent = exponent;
  f.intercept = mean;
  f.prefactor = std::exp(mean);
  f.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  f.t_lo = window.first;
  f.t_hi = window.second;
  f.samples = ws.t.size();
  f.mode = FitMode::power_law;
  return f;
}

/// Q^2 = kappa log t + b by least squares; kappa is returned as the prefactor.
inline AsymptoticFit fit_log_growth(const Trajectory& traj, int component, std::pair<double, double> window) {
  if (window.first <= 1.0) throw std::invalid_argument("fit_log_growth: window must lie in t > 1");
  const auto ws = detail::select(traj, component, window);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ws.t.size(); ++i) {
    x.push_back(std::log(ws.t[i]));
    y.push_back(ws.q[i] * ws.q[i]);
  }
  const auto lf = least_squares(x, y);
  AsymptoticFit f;
  f.exponent = 0.5;
  f.prefactor = lf.slope;
  f.intercept = lf.intercept;
  f.r_squared = lf.r_squared;
  f.t_lo = window.first;
  f.t_hi = window.second;
  f.samples = ws.t.size();
  f.mode = FitMode::log_growth;
  return f;
}

/// Applies `fn` to every state, e.g. to fit 1/C.
inline Trajectory map_states(const Trajectory& traj, const std::function<ode::Vector(const ode::Vector&)>& fn) {
  Trajectory out;
  out.times = traj.times;
  out.samples_per_decade = traj.samples_per_decade;
  out.states.reserve(traj.states.size());
  for (const auto& s : traj.states) out.states.push_back(fn(s));
  return out;
}

/// d log Q / d log t between the two samples nearest t_lo and t_hi.
inline double local_slope(const Trajectory& traj, int component, double t_lo, double t_hi) {
  auto nearest = [&](double t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < traj.size(); ++k)
      if (std::abs(std::log(traj.times[k] / t)) < std::abs(std::log(traj.times[best] / t))) best = k;
    return best;
  };
  const std::size_t i = nearest(t_lo), j = nearest(t_hi);
  return std::log(traj.states[j](component) / traj.states[i](component)) / std::log(traj.times[j] / traj.times[i]);
}

}  // namespace geoflow::asymptotics
