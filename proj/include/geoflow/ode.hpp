/// @file ode.hpp
/// @brief Explicit time integration: fixed-step RK4 and an adaptive
/// Dormand-Prince 5(4) pair with PI step control, a positivity guard and
/// log-spaced dense output.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoflow::ode {

using Vector = Eigen::VectorXd;

struct ODESystem {
  std::size_t dimension = 0;
  std::function<Vector(double t, const Vector& y)> rhs;

  /// Components that must stay strictly positive. Empty means none.
  std::vector<bool> positive;

  /// Extra admissibility test applied to every trial state; returns a
  /// description of the violation, or nullopt when the state is fine.
  std::function<std::optional<std::string>(double t, const Vector& y)> guard;

  /// State-dependent upper bound on the step size (e.g. a CFL limit).
  std::function<double(double t, const Vector& y)> step_cap;
};

struct IntegratorConfig {
  double rtol = 1e-9;
  double atol = 1e-12;
  double h_init = 1e-6;
  double h_max = std::numeric_limits<double>::infinity();
  double safety = 0.9;
  long max_steps = 10'000'000;
  int samples_per_decade = 32;
  /// Explicit sample times; when non-empty they replace the log-spaced grid.
  std::vector<double> sample_times;
  /// Smallest admissible step relative to the integration span.
  double h_min_relative = 1e-14;
  /// Consecutive guard rejections tolerated before giving up.
  int max_guard_rejections = 50;

  void validate() const {
    if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("IntegratorConfig: rtol and atol must be > 0");
    if (!(h_init > 0.0) || !(h_init <= h_max)) throw std::invalid_argument("IntegratorConfig: need 0 < h_init <= h_max");
    if (!(safety > 0.0 && safety < 1.0)) throw std::invalid_argument("IntegratorConfig: safety must lie in (0,1)");
    if (max_steps < 1) throw std::invalid_argument("IntegratorConfig: max_steps must be >= 1");
    if (samples_per_decade < 1) throw std::invalid_argument("IntegratorConfig: samples_per_decade must be >= 1");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  int samples_per_decade = 0;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  double component(std::size_t k, int c) const { return states[k](c); }
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long guard_rejections = 0;
  double last_h = 0.0;
};

class IntegrationError : public std::runtime_error {
 public:
  enum class Kind { max_steps, step_underflow, non_finite, guard_violation };

  IntegrationError(Kind kind, double t, const std::string& what)
      : std::runtime_error(describe(kind) + " at t=" + std::to_string(t) + (what.empty() ? "" : ": " + what)),
        kind_(kind),
        time_(t) {}

  Kind kind() const { return kind_; }
  double time() const { return time_; }

  static std::string describe(Kind k) {
    switch (k) {
      case Kind::max_steps: return "maximum step count exceeded";
      case Kind::step_underflow: return "step size underflow";
      case Kind::non_finite: return "non-finite state";
      case Kind::guard_violation: return "admissibility guard failed";
    }
    return "integration error";
  }

 private:
  Kind kind_;
  double time_;
};

/// One classical RK4 step. Returns nullopt if any stage produces a
/// non-finite value.
inline std::optional<Vector> rk4_step(const ODESystem& sys, double t, const Vector& y, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("rk4_step: h must be > 0");
  const Vector k1 = sys.rhs(t, y);
  if (!k1.allFinite()) return std::nullopt;
  const Vector k2 = sys.rhs(t + 0.5 * h, y + 0.5 * h * k1);
  if (!k2.allFinite()) return std::nullopt;
  const Vector k3 = sys.rhs(t + 0.5 * h, y + 0.5 * h * k2);
  if (!k3.allFinite()) return std::nullopt;
  const Vector k4 = sys.rhs(t + h, y + h * k3);
  if (!k4.allFinite()) return std::nullopt;
  Vector out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

/// Fixed-step RK4 from t0 to t1 with n equal steps.
inline Vector integrate_rk4(const ODESystem& sys, double t0, double t1, Vector y, long n) {
  if (n < 1) throw std::invalid_argument("integrate_rk4: need at least one step");
  const double h = (t1 - t0) / static_cast<double>(n);
  for (long k = 0; k < n; ++k) {
    const double t = t0 + h * static_cast<double>(k);
    auto next = rk4_step(sys, t, y, h);
    if (!next) throw IntegrationError(IntegrationError::Kind::non_finite, t, "rk4");
    y = std::move(*next);
  }
  return y;
}

/// Log-spaced sample times: 1 + t_k = (1 + t0) 10^{k / per_decade}, plus t1.
inline std::vector<double> log_sample_times(double t0, double t1, int per_decade) {
  std::vector<double> out{t0};
  if (!(t1 > t0)) return out;
  const double base = 1.0 + t0;
  if (!(base > 0.0)) throw std::invalid_argument("log_sample_times: need t0 > -1");
  const double decades = std::log10((1.0 + t1) / base);
  const long n = static_cast<long>(std::floor(decades * per_decade + 1e-9));
  for (long k = 1; k <= n; ++k) {
    const double t = base * std::pow(10.0, static_cast<double>(k) / per_decade) - 1.0;
    if (t > out.back() && t < t1) out.push_back(t);
  }
  if (t1 > out.back()) out.push_back(t1);
  return out;
}

namespace detail {

// Dormand-Prince 5(4) tableau with Hairer's dense-output coefficients.
struct DP54 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

struct DenseStep {
  Vector r1, r2, r3, r4, r5;
  double t = 0.0, h = 0.0;

  Vector at(double time) const {
    const double s = (time - t) / h;
    const double s1 = 1.0 - s;
    return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }
};

inline bool admissible(const ODESystem& sys, double t, const Vector& y, std::string& why) {
  for (std::size_t i = 0; i < sys.positive.size() && i < static_cast<std::size_t>(y.size()); ++i) {
    if (sys.positive[i] && !(y(static_cast<Eigen::Index>(i)) > 0.0)) {
      why = "component " + std::to_string(i) + " left the positive range";
      return false;
    }
  }
  if (sys.guard) {
    if (auto msg = sys.guard(t, y)) {
      why = *msg;
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Observer invoked on every accepted step with (t_new, y_new).
using StepObserver = std::function<void(double, const Vector&)>;

/// Adaptive DP5(4) integration from t0 to t1. The returned trajectory holds
/// samples at `cfg.sample_times` when given, else at log-spaced times in 1+t.
/// Samples between steps come from the pair's 4th-order interpolant.
inline Trajectory integrate_adaptive(const ODESystem& sys, double t0, double t1, const Vector& y0,
                                     const IntegratorConfig& cfg, const StepObserver& observer = {},
                                     IntegrationStats* stats_out = nullptr) {
  using K = IntegrationError::Kind;
  using T = detail::DP54;
  cfg.validate();
  if (static_cast<std::size_t>(y0.size()) != sys.dimension) {
    throw std::invalid_argument("integrate_adaptive: y0 has wrong dimension");
  }
  if (!y0.allFinite()) throw std::invalid_argument("integrate_adaptive: y0 is not finite");
  if (t1 < t0) throw std::invalid_argument("integrate_adaptive: need t1 >= t0");

  Trajectory traj;
  traj.samples_per_decade = cfg.sample_times.empty() ? cfg.samples_per_decade : 0;
  traj.times.push_back(t0);
  traj.states.push_back(y0);
  if (t1 == t0) return traj;

  std::vector<double> samples;
  if (cfg.sample_times.empty()) {
    samples = log_sample_times(t0, t1, cfg.samples_per_decade);
  } else {
    samples = cfg.sample_times;
    std::sort(samples.begin(), samples.end());
    samples.erase(std::remove_if(samples.begin(), samples.end(), [&](double s) { return !(s > t0 && s <= t1); }),
                  samples.end());
    samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
    samples.insert(samples.begin(), t0);
    if (samples.back() != t1) samples.push_back(t1);
  }
  std::size_t next_sample = 1;

  IntegrationStats stats;
  const double span = t1 - t0;
  const double h_min = cfg.h_min_relative * std::max(span, std::abs(t0));
  double t = t0;
  Vector y = y0;
  Vector k1 = sys.rhs(t, y);
  if (!k1.allFinite()) throw IntegrationError(K::non_finite, t, "initial right-hand side");
  double h = std::min(cfg.h_init, span);
  double err_prev = 1e-4;
  bool last_rejected = false;
  int guard_streak = 0;
  std::string why;

  while (t < t1) {
    if (stats.accepted + stats.rejected >= cfg.max_steps) throw IntegrationError(K::max_steps, t, "");
    double cap = cfg.h_max;
    if (sys.step_cap) cap = std::min(cap, sys.step_cap(t, y));
    h = std::min(h, cap);
    bool final_step = false;
    if (t + h >= t1 || t + 1.0000001 * h >= t1) {
      h = t1 - t;
      final_step = true;
    }
    if (h < h_min) throw IntegrationError(K::step_underflow, t, "h=" + std::to_string(h));

    const Vector k2 = sys.rhs(t + T::c2 * h, y + h * (T::a21 * k1));
    const Vector k3 = sys.rhs(t + T::c3 * h, y + h * (T::a31 * k1 + T::a32 * k2));
    const Vector k4 = sys.rhs(t + T::c4 * h, y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
    const Vector k5 = sys.rhs(t + T::c5 * h, y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
    const Vector k6 =
        sys.rhs(t + h, y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));
    const Vector y_new = y + h * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
    const double t_new = final_step ? t1 : t + h;

    if (!y_new.allFinite()) {
      // Treat as a failed step; a finite state may exist at smaller h.
      ++stats.rejected;
      h *= 0.2;
      last_rejected = true;
      if (h < h_min) throw IntegrationError(K::non_finite, t, "state became non-finite");
      continue;
    }
    if (!detail::admissible(sys, t_new, y_new, why)) {
      ++stats.rejected;
      ++stats.guard_rejections;
      if (++guard_streak > cfg.max_guard_rejections || 0.5 * h < h_min) {
        throw IntegrationError(K::guard_violation, t_new, why);
      }
      h *= 0.5;
      last_rejected = true;
      continue;
    }
    const Vector k7 = sys.rhs(t_new, y_new);
    if (!k7.allFinite()) {
      ++stats.rejected;
      h *= 0.2;
      last_rejected = true;
      if (h < h_min) throw IntegrationError(K::non_finite, t_new, "right-hand side became non-finite");
      continue;
    }
    const Vector err_vec = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
    double err = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
      err = std::max(err, std::abs(err_vec(i)) / sc);
    }

    if (err <= 1.0) {
      guard_streak = 0;
      detail::DenseStep dense;
      if (next_sample < samples.size() && samples[next_sample] <= t_new) {
        const Vector ydiff = y_new - y;
        const Vector bspl = h * k1 - ydiff;
        dense.r1 = y;
        dense.r2 = ydiff;
        dense.r3 = bspl;
        dense.r4 = ydiff - h * k7 - bspl;
        dense.r5 = h * (T::d1 * k1 + T::d3 * k3 + T::d4 * k4 + T::d5 * k5 + T::d6 * k6 + T::d7 * k7);
        dense.t = t;
        dense.h = h;
      }
      while (next_sample < samples.size() && samples[next_sample] <= t_new) {
        const double ts = samples[next_sample];
        traj.times.push_back(ts);
        traj.states.push_back(ts == t_new ? y_new : dense.at(ts));
        ++next_sample;
      }
      t = t_new;
      y = y_new;
      k1 = k7;
      ++stats.accepted;
      stats.last_h = h;
      if (observer) observer(t, y);

      double fac = err == 0.0 ? 5.0 : cfg.safety * std::pow(err, -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
      fac = std::clamp(fac, 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h *= fac;
      err_prev = std::max(err, 1e-4);
      last_rejected = false;
    } else {
      ++stats.rejected;
      const double fac = std::max(0.2, cfg.safety * std::pow(err, -0.2));
      h *= fac;
      last_rejected = true;
    }
  }
  if (stats_out) *stats_out = stats;
  return traj;
}

struct ConvergenceResult {
  double order = 0.0;
  bool degenerate = false;
  std::vector<double> step_sizes;
  std::vector<double> errors;
};

/// Least-squares slope of log(error) against log(h) for fixed-step RK4 from
/// t0 to t_end, with y(t0) taken from `exact`.
inline ConvergenceResult convergence_order(const ODESystem& sys, const std::function<Vector(double)>& exact,
                                           double t_end, const std::vector<double>& h_list, double t0 = 0.0) {
  if (h_list.size() < 3) throw std::invalid_argument("convergence_order: need at least three step sizes");
  const double ratio = h_list[1] / h_list[0];
  for (std::size_t i = 1; i < h_list.size(); ++i) {
    const double r = h_list[i] / h_list[i - 1];
    if (!(h_list[i] > 0.0) || std::abs(r - ratio) > 1e-9 * std::abs(ratio) || r == 1.0) {
      throw std::invalid_argument("convergence_order: step sizes must form a geometric progression");
    }
  }
  ConvergenceResult res;
  res.step_sizes = h_list;
  const Vector y0 = exact(t0);
  const Vector y_ref = exact(t_end);
  std::vector<double> lx, ly;
  for (double h : h_list) {
    const long n = std::lround((t_end - t0) / h);
    if (n < 1 || std::abs(n * h - (t_end - t0)) > 1e-9 * (t_end - t0)) {
      throw std::invalid_argument("convergence_order: step size does not divide the interval");
    }
    const Vector y = integrate_rk4(sys, t0, t_end, y0, n);
    const double e = (y - y_ref).cwiseAbs().maxCoeff();
    res.errors.push_back(e);
    if (!(e > 1e-14 * std::max(1.0, y_ref.cwiseAbs().maxCoeff()))) res.degenerate = true;
    lx.push_back(std::log(h));
    ly.push_back(std::log(std::max(e, 1e-300)));
  }
  if (res.degenerate) return res;
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  res.order = sxy / sxx;
  return res;
}

}  // namespace geoflow::ode
