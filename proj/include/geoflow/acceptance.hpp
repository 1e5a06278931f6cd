/// @file acceptance.hpp
/// @brief The ten acceptance criteria as runnable checks. Each returns a
/// pass flag and a one-line detail string with the measured quantities.
#pragma once

#include "geoflow/asymptotics.hpp"
#include "geoflow/nil3.hpp"
#include "geoflow/ode.hpp"
#include "geoflow/rrfs.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geoflow::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string format(const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

inline double rel(double measured, double expected) { return std::abs(measured / expected - 1.0); }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Named Nil^3 runs shared between criteria; each is integrated at most once.
class Context {
 public:
  struct Run {
    nil3::Nil3Params params;
    ode::Trajectory traj;
    double seconds = 0.0;
  };

  static constexpr double horizon = 1e8;

  static nil3::Nil3Params params_for(const std::string& key) {
    using namespace nil3;
    if (key == "ricci") return {Nil3State(1, 1, 1), MapSlope(0.0), CouplingSchedule::zero()};
    if (key == "ricci_211") return {Nil3State(2, 1, 1), MapSlope(0.0), CouplingSchedule::zero()};
    if (key == "const") return {Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5)};
    if (key == "power_r1") return {Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::power(1.0, 1.0)};
    if (key == "power_r2") return {Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::power(1.0, 2.0)};
    throw std::invalid_argument("acceptance: unknown run '" + key + "'");
  }

  static double t_end_for(const std::string& key) { return key == "ricci" ? 1e4 : horizon; }

  const Run& run(const std::string& key) {
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    detail::Stopwatch sw;
    Run r{params_for(key), {}, 0.0};
    ode::IntegratorConfig cfg;
    cfg.rtol = 1e-9;
    r.traj = nil3::integrate(r.params, t_end_for(key), cfg);
    r.seconds = sw.seconds();
    return runs_.emplace(key, std::move(r)).first->second;
  }

 private:
  std::map<std::string, Run> runs_;
};

// 1. Ricci oracle.
inline CriterionResult ac01(Context& ctx) {
  const auto& r = ctx.run("ricci");
  double worst = 0.0;
  for (std::size_t k = 0; k < r.traj.size(); ++k) {
    const auto ex = nil3::exact_ricci_solution(r.traj.times[k], 1.0, 1.0);
    worst = std::max({worst, detail::rel(r.traj.states[k](0), ex.A), detail::rel(r.traj.states[k](1), ex.B),
                      detail::rel(r.traj.states[k](2), ex.C)});
  }
  const double drift = nil3::phi_drift(r.traj);
  const bool pass = worst <= 1e-6 && drift <= 1e-8 && r.seconds <= 1.0;
  return {1, "Nil3 Ricci oracle", pass,
          detail::format("max rel error %.3e (<= 1e-6), Phi drift %.3e (<= 1e-8), runtime %.3fs (<= 1s)", worst,
                         drift, r.seconds)};
}

// 2. Ricci prefactors for unequal initial data.
inline CriterionResult ac02(Context& ctx) {
  const auto& r = ctx.run("ricci_211");
  const auto pc = nil3::predicted_constants(r.params);
  const double t = r.traj.times.back();
  const double slope_A = asymptotics::local_slope(r.traj, 0, 1e6, 1e8);
  const double slope_C = asymptotics::local_slope(r.traj, 2, 1e6, 1e8);
  const double ratio = r.traj.states.back()(0) / (pc.ricci_prefactors[0] * std::cbrt(t));
  const bool pass = std::abs(slope_A - 1.0 / 3.0) <= 0.01 && std::abs(slope_C + 1.0 / 3.0) <= 0.01 &&
                    ratio >= 0.98 && ratio <= 1.02 && r.seconds <= 10.0;
  return {2, "Ricci prefactors (K = A0 B0 / 3 C0)", pass,
          detail::format("A slope %.5f, C slope %.5f (1/3, -1/3 +- 0.01); A/(A0 K^-1/3 t^1/3) = %.5f at t=%.0e "
                         "([0.98, 1.02]); runtime %.3fs (<= 10s)",
                         slope_A, slope_C, ratio, t, r.seconds)};
}

// 3. Constant coupling regime, with the C-prefactor discrepancy report.
inline CriterionResult ac03(Context& ctx) {
  const auto& r = ctx.run("const");
  const auto pc = nil3::predicted_constants(r.params);
  const auto window = asymptotics::last_two_decades(r.traj);
  const double t = r.traj.times.back();
  const double ratio_A = r.traj.states.back()(0) / (*pc.const_A_rate * t);
  const double kappa = asymptotics::fit_log_growth(r.traj, 1, window).prefactor;
  const auto inv_C = asymptotics::map_states(r.traj, [](const ode::Vector& s) {
    ode::Vector v(1);
    v(0) = 1.0 / s(2);
    return v;
  });
  // 1/C^2 ~ log t / C_pref^2
  const double c_pref = 1.0 / std::sqrt(asymptotics::fit_log_growth(inv_C, 0, window).prefactor);
  const double drift = nil3::phi_drift(r.traj);
  const double d_consistent = detail::rel(c_pref, *pc.const_C_prefactor);
  const double d_printed = detail::rel(c_pref, *pc.const_C_prefactor_printed);
  const bool pass = ratio_A >= 0.98 && ratio_A <= 1.02 && detail::rel(kappa, *pc.const_kappa) <= 0.05 &&
                    drift <= 1e-8 && d_consistent <= 0.05 && d_printed >= 0.40;
  return {3, "Constant coupling asymptotics", pass,
          detail::format("A/(2a^2ct) = %.5f at t=%.0e ([0.98, 1.02]); kappa %.5f vs %.5f (5%%); Phi drift %.3e; "
                         "C prefactor %.5f: %.2f%% from sqrt(a^2cB0C0)=%.5f (<= 5%%), %.2f%% from printed "
                         "2sqrt(a^2cB0C0)=%.5f (>= 40%%)",
                         ratio_A, t, kappa, *pc.const_kappa, drift, c_pref, 100 * d_consistent,
                         *pc.const_C_prefactor, 100 * d_printed, *pc.const_C_prefactor_printed)};
}

// 4. Power-law coupling, r in {1, 2}.
inline CriterionResult ac04(Context& ctx) {
  bool pass = true;
  std::string detail;
  for (const char* key : {"power_r1", "power_r2"}) {
    const auto& r = ctx.run(key);
    const auto window = asymptotics::last_two_decades(r.traj);
    const double phi = r.params.phi0;
    double e[3];
    for (int c = 0; c < 3; ++c) e[c] = asymptotics::fit_power_law(r.traj, c, window).exponent;
    const double alpha = asymptotics::fit_prefactor(r.traj, 0, window, 1.0 / 3.0).prefactor;
    const double b_pref = asymptotics::fit_prefactor(r.traj, 1, window, 1.0 / 3.0).prefactor;
    const double c_pref = asymptotics::fit_prefactor(r.traj, 2, window, -1.0 / 3.0).prefactor;
    const double db = detail::rel(b_pref, std::sqrt(3.0 * phi / alpha));
    const double dc = detail::rel(c_pref, std::sqrt(alpha * phi / 3.0));
    const bool ok = std::abs(e[0] - 1.0 / 3.0) <= 0.02 && std::abs(e[1] - 1.0 / 3.0) <= 0.02 &&
                    std::abs(e[2] + 1.0 / 3.0) <= 0.02 && db <= 0.05 && dc <= 0.05;
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += detail::format("r=%s: exponents (%.4f, %.4f, %.4f), alpha %.5f, B pref off %.2f%%, C pref off %.2f%%",
                             key + 7, e[0], e[1], e[2], alpha, 100 * db, 100 * dc);
  }
  return {4, "Power-law coupling asymptotics", pass, detail + " (exponents +- 0.02, prefactors 5%)"};
}

// 5. Blowdown closure on the runs of criteria 1 and 3.
inline CriterionResult ac05(Context& ctx) {
  bool pass = true;
  std::string detail;
  for (const char* key : {"ricci", "const"}) {
    const auto& r = ctx.run(key);
    const double base = nil3::flow_residual(r.traj, r.params);
    for (double s : {0.5, 4.0}) {
      const auto [q, ts] = nil3::blowdown(r.params, r.traj, s);
      const double res = nil3::flow_residual(ts, q);
      pass = pass && res <= 10.0 * base;
      if (!detail.empty()) detail += "; ";
      detail += detail::format("%s s=%g: %.3e vs source %.3e", key, s, res, base);
    }
  }
  return {5, "Blowdown closure", pass, detail + " (<= 10x source)"};
}

// 6. Tension field identity.
inline CriterionResult ac06(Context&, const rrfs::TargetChristoffel& target = rrfs::spd_christoffel) {
  double worst = 0.0;
  for (int n : {1, 2})
    for (int N : {2, 3})
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto grid = n == 1 ? grid::PeriodicGrid::line(64) : grid::PeriodicGrid::square(64);
        const auto s = rrfs::random_smooth_state(grid, N, seed);
        const auto geo = rrfs::compute_geometry(s, grid);
        const auto a = rrfs::tension_G_general(s, grid, geo, target);
        const auto b = rrfs::tension_G_simplified(s, grid, geo);
        double diff = 0.0, scale = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          diff = std::max(diff, (a[k] - b[k]).cwiseAbs().maxCoeff());
          scale = std::max(scale, b[k].cwiseAbs().maxCoeff());
        }
        worst = std::max(worst, diff / scale);
      }
  return {6, "Tension field identity", worst <= 1e-10,
          detail::format("max relative sup difference %.3e over n in {1,2}, N in {2,3}, 5 seeds, grid 64 (<= 1e-10)",
                         worst)};
}

// 7. Growth bounds on every trajectory of criteria 1-4.
inline CriterionResult ac07(Context& ctx) {
  bool pass = true;
  double worst = std::numeric_limits<double>::infinity();
  std::string where;
  for (const char* key : {"ricci", "ricci_211", "const", "power_r1", "power_r2"}) {
    const auto& r = ctx.run(key);
    const auto rep = nil3::bounds_check(r.traj, r.params);
    pass = pass && rep.ok;
    if (rep.worst_slack < worst) {
      worst = rep.worst_slack;
      where = detail::format("%s, %s at t=%.3e", key, rep.worst_check.c_str(), rep.worst_time);
    }
  }
  return {7, "Growth bounds", pass, detail::format("min slack %.3e (%s) (>= 0)", worst, where.c_str())};
}

// 8. Energy monotonicity under harmonic map flow.
inline CriterionResult ac08(Context&) {
  detail::Stopwatch sw;
  const auto grid = grid::PeriodicGrid::line(64);
  const auto s0 = rrfs::perturbed_fiber_state(grid, 2, 0.3);
  const double e0 = rrfs::energy_G(s0, grid);
  double prev = e0;
  long increases = 0, steps = 0;
  rrfs::integrate_harmonic_map(s0, grid, 2.0, {}, [&](double, const rrfs::RRFSState& s) {
    const double e = rrfs::energy_G(s, grid);
    if (e > prev) ++increases;
    prev = e;
    ++steps;
  });
  const double secs = sw.seconds();
  const double factor = e0 / prev;
  const bool pass = increases == 0 && factor >= 10.0 && secs <= 10.0;
  return {8, "Energy monotonicity", pass,
          detail::format("%ld accepted steps, %ld increases (0), decay factor %.2f (>= 10), runtime %.3fs (<= 10s)",
                         steps, increases, factor, secs)};
}

// 9. Integrator order and spatial refinement.
inline CriterionResult ac09(Context&) {
  const nil3::Nil3Params p(nil3::Nil3State(1, 1, 1), nil3::MapSlope(0.0), nil3::CouplingSchedule::zero());
  const auto conv = ode::convergence_order(
      nil3::make_system(p), [](double t) { return nil3::exact_ricci_solution(t, 1.0, 1.0).to_vector(); }, 2.0,
      {0.2, 0.1, 0.05, 0.025});
  std::vector<rrfs::RRFSState> ends;
  for (int size : {32, 64, 128}) {
    const auto grid = grid::PeriodicGrid::line(size);
    rrfs::RRFSIntegratorConfig cfg;
    cfg.ode.rtol = 1e-10;
    cfg.ode.atol = 1e-12;
    cfg.ode.sample_times = {0.25};
    ends.push_back(rrfs::integrate_rrfs(rrfs::perturbed_fiber_state(grid, 2, 0.3), grid, {}, 0.25, cfg).states.back());
  }
  double e_coarse = 0.0, e_fine = 0.0;
  for (int k = 0; k < 32; ++k) {
    e_coarse = std::max(e_coarse, (ends[0].G[k] - ends[1].G[2 * k]).cwiseAbs().maxCoeff());
    e_fine = std::max(e_fine, (ends[1].G[2 * k] - ends[2].G[4 * k]).cwiseAbs().maxCoeff());
  }
  const double slope = std::log2(e_coarse / e_fine);
  const bool pass = !conv.degenerate && conv.order >= 3.8 && conv.order <= 4.2 && slope >= 2.0;
  return {9, "Integrator order", pass,
          detail::format("RK4 order %.4f ([3.8, 4.2]); Richardson slope %.3f on grids 32/64/128 (>= 2)", conv.order,
                         slope)};
}

// 10. Volume normalization.
inline CriterionResult ac10(Context&) {
  const auto grid = grid::PeriodicGrid::line(64);
  const auto s0 = rrfs::perturbed_fiber_state(grid, 2, 0.3);
  rrfs::RescalingSpec spec;
  spec.mode = rrfs::RescalingSpec::Mode::volume;
  const auto run = rrfs::integrate_rrfs(s0, grid, spec, 1.0, {});
  double drift = 0.0;
  const double v0 = rrfs::volume(s0, grid);
  for (const auto& s : run.states) drift = std::max(drift, std::abs(rrfs::volume(s, grid) / v0 - 1.0));
  return {10, "Volume normalization", drift <= 1e-6,
          detail::format("max relative volume drift %.3e over unit time, grid 64 (<= 1e-6)", drift)};
}

inline constexpr int criterion_count = 10;

/// Runs one criterion; exceptions become failures carrying the message.
inline CriterionResult run(int id, Context& ctx) {
  using Fn = std::function<CriterionResult(Context&)>;
  static const Fn table[criterion_count] = {ac01, ac02, ac03, ac04, ac05,
                                            [](Context& c) { return ac06(c); },
                                            ac07, ac08, ac09, ac10};
  if (id < 1 || id > criterion_count) throw std::out_of_range("acceptance: criterion id must be 1..10");
  detail::Stopwatch sw;
  CriterionResult r;
  try {
    r = table[id - 1](ctx);
  } catch (const std::exception& e) {
    r = {id, "criterion " + std::to_string(id), false, std::string("error: ") + e.what()};
  }
  r.seconds = sw.seconds();
  return r;
}

inline std::string format_line(const CriterionResult& r) {
  return detail::format("AC-%d %s: %s [%s] (%.2fs)", r.id, r.pass ? "PASS" : "FAIL", r.name.c_str(),
                        r.detail.c_str(), r.seconds);
}

}  // namespace geoflow::acceptance
