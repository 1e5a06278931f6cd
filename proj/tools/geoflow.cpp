// geoflow: command-line front end for the Nil^3 (RH)_c flow, the RRFS solver,
// identity checks, trajectory fits and the acceptance suite.
//
// Exit codes: 0 success, 1 parse/input/integration error, 2 assertion failure.

#include "geoflow/acceptance.hpp"
#include "geoflow/asymptotics.hpp"
#include "geoflow/io.hpp"
#include "geoflow/nil3.hpp"
#include "geoflow/rrfs.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace geoflow;

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kAssert = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw InputError("failed writing '" + path + "'");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json fit_json(const asymptotics::AsymptoticFit& f) {
  return {{"exponent", f.exponent}, {"prefactor", f.prefactor}, {"r_squared", f.r_squared}, {"samples", f.samples}};
}

// ---------------------------------------------------------------------------
// nil3

struct Nil3Options {
  double A0 = 1.0, B0 = 1.0, C0 = 1.0, a = 0.0;
  std::string coupling = "zero";
  double t_end = 1e8;
  double rtol = 1e-9, atol = 1e-12;
  int samples_per_decade = 32;
  std::vector<double> window;
  std::string out_csv, out_json;

  json echo() const {
    return {{"A0", A0}, {"B0", B0}, {"C0", C0}, {"a", a}, {"coupling", coupling}, {"t_end", t_end},
            {"rtol", rtol}, {"atol", atol}, {"samples_per_decade", samples_per_decade}};
  }

  static Nil3Options from_json(const json& j) {
    Nil3Options o;
    for (const auto& [key, value] : j.items()) {
      if (key == "A0") o.A0 = value.get<double>();
      else if (key == "B0") o.B0 = value.get<double>();
      else if (key == "C0") o.C0 = value.get<double>();
      else if (key == "a") o.a = value.get<double>();
      else if (key == "coupling") o.coupling = value.get<std::string>();
      else if (key == "t_end") o.t_end = value.get<double>();
      else if (key == "rtol") o.rtol = value.get<double>();
      else if (key == "atol") o.atol = value.get<double>();
      else if (key == "samples_per_decade") o.samples_per_decade = value.get<int>();
      else if (key == "window") o.window = value.get<std::vector<double>>();
      else if (key == "out_csv") o.out_csv = value.get<std::string>();
      else if (key == "out_json") o.out_json = value.get<std::string>();
      else throw InputError("sweep: unknown key '" + key + "'");
    }
    return o;
  }
};

void add_nil3_options(CLI::App& cmd, Nil3Options& o) {
  cmd.add_option("--A0", o.A0, "initial A")->capture_default_str();
  cmd.add_option("--B0", o.B0, "initial B")->capture_default_str();
  cmd.add_option("--C0", o.C0, "initial C")->capture_default_str();
  cmd.add_option("--a", o.a, "map slope a")->capture_default_str();
  cmd.add_option("--coupling", o.coupling, "zero | const:<c0> | power:<c0>,<r>")->capture_default_str();
  cmd.add_option("--t-end", o.t_end, "integration horizon")->capture_default_str();
  cmd.add_option("--rtol", o.rtol, "relative tolerance")->capture_default_str();
  cmd.add_option("--atol", o.atol, "absolute tolerance")->capture_default_str();
  cmd.add_option("--samples-per-decade", o.samples_per_decade, "log-spaced samples per decade of 1+t")
      ->capture_default_str();
  cmd.add_option("--window", o.window, "fit window lo hi (default: last two decades)")->expected(2);
  cmd.add_option("--out-csv", o.out_csv, "trajectory CSV path");
  cmd.add_option("--out-json", o.out_json, "summary JSON path (default: stdout)");
}

struct Nil3Outcome {
  int status = kOk;
  json summary;
  std::string csv;
};

Nil3Outcome run_nil3_case(const Nil3Options& o) {
  const nil3::Nil3Params p(nil3::Nil3State(o.A0, o.B0, o.C0), nil3::MapSlope(o.a),
                           nil3::CouplingSchedule::parse(o.coupling));
  if (!(o.t_end > 0.0) || !std::isfinite(o.t_end)) throw std::invalid_argument("t-end must be > 0");
  ode::IntegratorConfig cfg;
  cfg.rtol = o.rtol;
  cfg.atol = o.atol;
  cfg.samples_per_decade = o.samples_per_decade;
  ode::IntegrationStats stats;
  const auto traj = nil3::integrate(p, o.t_end, cfg, &stats);

  Nil3Outcome out;
  json& j = out.summary;
  j["config"] = o.echo();
  const auto& last = traj.states.back();
  j["final"] = {{"t", traj.times.back()}, {"A", last(0)}, {"B", last(1)}, {"C", last(2)}, {"Phi", last(1) * last(2)}};
  j["stats"] = {{"accepted_steps", stats.accepted}, {"rejected_steps", stats.rejected}, {"samples", traj.size()}};

  // A constant schedule with a^2 c = 0 is the Ricci regime; only its Ricci constants apply.
  const auto pc = [&] {
    try {
      return nil3::predicted_constants(p);
    } catch (const std::invalid_argument&) {
      return nil3::predicted_constants(nil3::Nil3Params(p.state0, nil3::MapSlope(0.0), nil3::CouplingSchedule::zero()));
    }
  }();
  json predicted = {{"K", pc.K}, {"ricci_prefactors", pc.ricci_prefactors}, {"power_exponents", pc.power_exponents}};
  if (pc.const_A_rate) {
    predicted["const_A_rate"] = *pc.const_A_rate;
    predicted["const_kappa"] = *pc.const_kappa;
    predicted["const_C_prefactor"] = *pc.const_C_prefactor;
    predicted["const_C_prefactor_printed"] = *pc.const_C_prefactor_printed;
  }
  j["predicted"] = predicted;

  const std::pair<double, double> window =
      o.window.size() == 2 ? std::make_pair(o.window[0], o.window[1]) : asymptotics::last_two_decades(traj);
  try {
    json fits = {{"window", {window.first, window.second}}};
    const char* names[3] = {"A", "B", "C"};
    for (int c = 0; c < 3; ++c) {
      const auto f = asymptotics::fit_power_law(traj, c, window);
      fits[std::string("exponent_") + names[c]] = f.exponent;
      fits[std::string("prefactor_") + names[c]] = f.prefactor;
      fits[std::string("r_squared_") + names[c]] = f.r_squared;
    }
    j["fits"] = fits;

    switch (p.coupling.kind()) {
      case nil3::CouplingSchedule::Kind::zero: {
        json r;
        const double ex[3] = {1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0};
        for (int c = 0; c < 3; ++c) {
          r[std::string("prefactor_") + names[c]] = asymptotics::fit_prefactor(traj, c, window, ex[c]).prefactor;
          r[std::string("predicted_") + names[c]] = pc.ricci_prefactors[c];
        }
        j["ricci_regime"] = r;
        break;
      }
      case nil3::CouplingSchedule::Kind::constant: {
        if (!pc.const_A_rate) break;
        const double kappa = asymptotics::fit_log_growth(traj, 1, window).prefactor;
        const auto inv_C = asymptotics::map_states(traj, [](const ode::Vector& s) {
          ode::Vector v(1);
          v(0) = 1.0 / s(2);
          return v;
        });
        const double c_pref = 1.0 / std::sqrt(asymptotics::fit_log_growth(inv_C, 0, window).prefactor);
        j["constant_regime"] = {
            {"A_rate_measured", last(0) / traj.times.back()},
            {"A_rate_predicted", *pc.const_A_rate},
            {"kappa_measured", kappa},
            {"kappa_predicted", *pc.const_kappa},
            {"C_prefactor_measured", c_pref},
            {"C_prefactor_conservation_consistent", *pc.const_C_prefactor},
            {"C_prefactor_as_printed", *pc.const_C_prefactor_printed},
            {"deviation_from_consistent", std::abs(c_pref / *pc.const_C_prefactor - 1.0)},
            {"deviation_from_printed", std::abs(c_pref / *pc.const_C_prefactor_printed - 1.0)}};
        break;
      }
      case nil3::CouplingSchedule::Kind::power: {
        const double phi = p.phi0;
        const double alpha = asymptotics::fit_prefactor(traj, 0, window, 1.0 / 3.0).prefactor;
        j["power_regime"] = {
            {"alpha", alpha},
            {"B_prefactor", asymptotics::fit_prefactor(traj, 1, window, 1.0 / 3.0).prefactor},
            {"B_prefactor_from_alpha", std::sqrt(3.0 * phi / alpha)},
            {"C_prefactor", asymptotics::fit_prefactor(traj, 2, window, -1.0 / 3.0).prefactor},
            {"C_prefactor_from_alpha", std::sqrt(alpha * phi / 3.0)},
            {"asymptotics_asserted", p.coupling.r() >= 1.0}};
        break;
      }
    }
  } catch (const std::exception& e) {
    j["fits"] = nullptr;
    j["fit_error"] = e.what();
  }

  const auto rep = nil3::bounds_check(traj, p);
  j["bounds"] = {{"ok", rep.ok}, {"worst_slack", rep.worst_slack}, {"worst_time", rep.worst_time},
                 {"worst_check", rep.worst_check}};
  const double drift = nil3::phi_drift(traj);
  const double drift_tol = std::max(1e-8, 10.0 * o.rtol);
  j["phi_drift"] = drift;
  if (traj.size() >= 5) j["flow_residual"] = nil3::flow_residual(traj, p);
  j["assertions"] = {{"bounds", rep.ok}, {"phi_drift", drift <= drift_tol}, {"phi_drift_tolerance", drift_tol}};
  if (!rep.ok || drift > drift_tol) out.status = kAssert;

  std::ostringstream csv;
  io::write_nil3_csv(csv, traj);
  out.csv = csv.str();
  return out;
}

void report_nil3_failures(const json& j) {
  if (!j["assertions"]["bounds"].get<bool>()) {
    std::fprintf(stderr, "assertion failed: bound '%s' violated at t=%.6g (slack %.3e)\n",
                 j["bounds"]["worst_check"].get<std::string>().c_str(), j["bounds"]["worst_time"].get<double>(),
                 j["bounds"]["worst_slack"].get<double>());
  }
  if (!j["assertions"]["phi_drift"].get<bool>()) {
    std::fprintf(stderr, "assertion failed: Phi drift %.3e exceeds %.3e\n", j["phi_drift"].get<double>(),
                 j["assertions"]["phi_drift_tolerance"].get<double>());
  }
}

int cmd_nil3(const Nil3Options& o) {
  const auto out = run_nil3_case(o);
  if (!o.out_csv.empty()) write_text(o.out_csv, out.csv);
  if (!o.out_json.empty()) {
    write_text(o.out_json, dump(out.summary));
  } else {
    std::cout << dump(out.summary);
  }
  if (out.status != kOk) report_nil3_failures(out.summary);
  return out.status;
}

// ---------------------------------------------------------------------------
// rrfs

struct RRFSOptions {
  int n = 1, N = 2, size = 64;
  double period = 2 * std::numbers::pi;
  std::string init = "fiber";
  double eps = 0.3;
  std::uint64_t seed = 1;
  std::string rescale = "off";
  double c = 0.0;
  double t_end = 1.0;
  std::vector<double> snapshots;
  int series_points = 21;
  double rtol = 1e-9, atol = 1e-12, kappa_cfl = 0.2;
  bool harmonic_only = false;
  std::string out_dir;
};

rrfs::RescalingSpec parse_rescale(const std::string& text, double c) {
  rrfs::RescalingSpec spec;
  spec.c = c;
  if (text == "off") {
    spec.mode = rrfs::RescalingSpec::Mode::off;
  } else if (text == "volume") {
    spec.mode = rrfs::RescalingSpec::Mode::volume;
  } else if (text.rfind("const:", 0) == 0) {
    spec.mode = rrfs::RescalingSpec::Mode::constant;
    try {
      std::size_t used = 0;
      spec.s0 = std::stod(text.substr(6), &used);
      if (used != text.size() - 6) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InputError("rescale: bad number in '" + text + "'");
    }
  } else {
    throw InputError("rescale: expected off | const:<s> | volume, got '" + text + "'");
  }
  return spec;
}

int cmd_rrfs(const RRFSOptions& o) {
  if (o.n != 1 && o.n != 2) throw InputError("--n must be 1 or 2");
  if (o.N < 1) throw InputError("--N must be >= 1");
  if (o.size < 8) throw InputError("--size must be >= 8");
  if (!(o.t_end > 0.0)) throw InputError("--t-end must be > 0");
  if (o.series_points < 2) throw InputError("--series-points must be >= 2");
  for (double t : o.snapshots)
    if (!(t >= 0.0 && t <= o.t_end)) throw InputError("snapshot times must lie in [0, t-end]");
  const auto spec = parse_rescale(o.rescale, o.c);
  if (o.harmonic_only && spec.mode != rrfs::RescalingSpec::Mode::off) {
    throw InputError("--harmonic-only requires --rescale off");
  }
  const grid::PeriodicGrid grid(o.n, {o.size, o.n == 2 ? o.size : 1}, {o.period, o.n == 2 ? o.period : 1.0});
  rrfs::RRFSState s0;
  if (o.init == "flat") {
    s0 = rrfs::RRFSState::flat(grid, o.N);
  } else if (o.init == "fiber") {
    s0 = rrfs::perturbed_fiber_state(grid, o.N, o.eps);
  } else if (o.init == "random") {
    s0 = rrfs::random_smooth_state(grid, o.N, o.seed);
  } else {
    throw InputError("--init must be flat, fiber or random");
  }

  std::vector<double> times;
  for (int i = 0; i < o.series_points; ++i) times.push_back(o.t_end * i / (o.series_points - 1));
  times.insert(times.end(), o.snapshots.begin(), o.snapshots.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  rrfs::RRFSIntegratorConfig cfg;
  cfg.ode.rtol = o.rtol;
  cfg.ode.atol = o.atol;
  cfg.ode.sample_times = times;
  cfg.kappa_cfl = o.kappa_cfl;
  const auto run = o.harmonic_only ? rrfs::integrate_harmonic_map(s0, grid, o.t_end, cfg)
                                   : rrfs::integrate_rrfs(s0, grid, spec, o.t_end, cfg);

  std::vector<io::SeriesRow> rows;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const auto& s = run.states[k];
    double sv = 0.0;
    if (spec.mode == rrfs::RescalingSpec::Mode::constant) sv = spec.s0;
    if (spec.mode == rrfs::RescalingSpec::Mode::volume) sv = rrfs::s_volume(s, grid);
    rows.push_back({run.times[k], rrfs::energy_G(s, grid), rrfs::volume(s, grid), sv});
  }
  double drift = 0.0;
  bool monotone = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    drift = std::max(drift, std::abs(rows[k].volume / rows[0].volume - 1.0));
    if (k > 0 && rows[k].energy > rows[k - 1].energy) monotone = false;
  }

  json j;
  j["config"] = {{"n", o.n}, {"N", o.N}, {"size", o.size}, {"period", o.period}, {"init", o.init},
                 {"eps", o.eps}, {"seed", o.seed}, {"rescale", o.rescale}, {"c", o.c}, {"t_end", o.t_end},
                 {"snapshots", o.snapshots}, {"series_points", o.series_points}, {"rtol", o.rtol},
                 {"atol", o.atol}, {"kappa_cfl", o.kappa_cfl}, {"harmonic_only", o.harmonic_only}};
  json series = {{"t", json::array()}, {"energy", json::array()}, {"volume", json::array()}, {"s", json::array()}};
  for (const auto& r : rows) {
    series["t"].push_back(r.t);
    series["energy"].push_back(r.energy);
    series["volume"].push_back(r.volume);
    series["s"].push_back(r.s);
  }
  j["series"] = series;
  j["volume_drift"] = drift;
  j["energy_non_increasing"] = monotone;
  j["stats"] = {{"accepted_steps", run.stats.accepted}, {"rejected_steps", run.stats.rejected}};

  json snaps = json::array();
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    std::ostringstream csv;
    io::write_series_csv(csv, rows);
    write_text((fs::path(o.out_dir) / "series.csv").string(), csv.str());
    int idx = 0;
    for (double t : o.snapshots) {
      const auto it = std::find(run.times.begin(), run.times.end(), t);
      const auto k = static_cast<std::size_t>(it - run.times.begin());
      char name[32];
      std::snprintf(name, sizeof name, "snapshot_%03d.txt", idx++);
      std::ostringstream os;
      io::write_snapshot(os, run.states[k], grid);
      write_text((fs::path(o.out_dir) / name).string(), os.str());
      snaps.push_back({{"t", t}, {"file", name}});
    }
  }
  j["snapshots"] = snaps;
  const bool volume_ok = spec.mode != rrfs::RescalingSpec::Mode::volume || drift <= 1e-6;
  j["assertions"] = {{"volume", volume_ok}};
  if (!o.out_dir.empty()) {
    write_text((fs::path(o.out_dir) / "summary.json").string(), dump(j));
  } else {
    std::cout << dump(j);
  }
  if (!volume_ok) {
    std::fprintf(stderr, "assertion failed: volume drift %.3e exceeds 1e-6\n", drift);
    return kAssert;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::string check = "all";
  std::uint64_t seed = 1;
  int n = 2, N = 2, size = 64;
  double s = 4.0;
  bool corrupt_christoffel = false;
  std::string out_json;
};

int cmd_verify(const VerifyOptions& o) {
  if (o.check != "all" && o.check != "tension" && o.check != "blowdown") {
    throw InputError("--check must be all, tension or blowdown");
  }
  json j;
  bool ok = true;
  if (o.check != "blowdown") {
    if (o.n != 1 && o.n != 2) throw InputError("--n must be 1 or 2");
    const grid::PeriodicGrid grid(o.n, {o.size, o.n == 2 ? o.size : 1});
    const auto st = rrfs::random_smooth_state(grid, o.N, o.seed);
    rrfs::TargetChristoffel target = rrfs::spd_christoffel;
    if (o.corrupt_christoffel) {
      target = [](const grid::Matrix& Gi, const grid::Matrix& X, const grid::Matrix& Y) {
        return grid::Matrix(-rrfs::spd_christoffel(Gi, X, Y));
      };
    }
    const auto geo = rrfs::compute_geometry(st, grid);
    const auto a = rrfs::tension_G_general(st, grid, geo, target);
    const auto b = rrfs::tension_G_simplified(st, grid, geo);
    double diff = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      diff = std::max(diff, (a[k] - b[k]).cwiseAbs().maxCoeff());
      scale = std::max(scale, b[k].cwiseAbs().maxCoeff());
    }
    const double res = scale > 0.0 ? diff / scale : diff;
    const bool pass = res <= 1e-10;
    ok = ok && pass;
    std::printf("tension identity residual: %.3e (threshold 1e-10) %s\n", res, pass ? "PASS" : "FAIL");
    j["tension"] = {{"residual", res}, {"threshold", 1e-10}, {"pass", pass}, {"seed", o.seed}, {"n", o.n},
                    {"N", o.N}, {"size", o.size}, {"corrupt_christoffel", o.corrupt_christoffel}};
  }
  if (o.check != "tension") {
    if (!(o.s > 0.0)) throw InputError("--s must be > 0");
    const nil3::Nil3Params p(nil3::Nil3State(1, 1, 1), nil3::MapSlope(0.0), nil3::CouplingSchedule::zero());
    ode::IntegratorConfig cfg;
    cfg.rtol = 1e-9;
    const auto tr = nil3::integrate(p, 1e4, cfg);
    const double base = nil3::flow_residual(tr, p);
    const auto [q, ts] = nil3::blowdown(p, tr, o.s);
    const double res = nil3::flow_residual(ts, q);
    const bool pass = res <= 10.0 * base;
    ok = ok && pass;
    std::printf("blowdown residual (s=%g): %.3e (threshold %.3e = 10x source) %s\n", o.s, res, 10.0 * base,
                pass ? "PASS" : "FAIL");
    j["blowdown"] = {{"s", o.s}, {"residual", res}, {"source_residual", base}, {"threshold", 10.0 * base},
                     {"pass", pass}};
  }
  if (!o.out_json.empty()) write_text(o.out_json, dump(j));
  return ok ? kOk : kAssert;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string csv;
  std::string component = "A";
  std::string mode = "power";
  std::vector<double> window;
  double exponent = 1.0 / 3.0;
};

int cmd_fit(const FitOptions& o) {
  std::ifstream is(o.csv);
  if (!is) throw InputError("cannot open '" + o.csv + "'");
  const auto traj = io::read_nil3_csv(is);
  if (traj.size() < 3) throw InputError("trajectory has fewer than 3 samples");
  int c = 0;
  if (o.component == "A") c = 0;
  else if (o.component == "B") c = 1;
  else if (o.component == "C") c = 2;
  else throw InputError("--component must be A, B or C");
  const auto window =
      o.window.size() == 2 ? std::make_pair(o.window[0], o.window[1]) : asymptotics::last_two_decades(traj);
  asymptotics::AsymptoticFit f;
  if (o.mode == "power") f = asymptotics::fit_power_law(traj, c, window);
  else if (o.mode == "prefactor") f = asymptotics::fit_prefactor(traj, c, window, o.exponent);
  else if (o.mode == "log") f = asymptotics::fit_log_growth(traj, c, window);
  else throw InputError("--mode must be power, prefactor or log");
  json j = {{"csv", o.csv}, {"component", o.component}, {"mode", o.mode}, {"window", {window.first, window.second}}};
  j["fit"] = fit_json(f);
  std::cout << dump(j);
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const std::string& config_path, int threads) {
  std::ifstream is(config_path);
  if (!is) throw InputError("cannot open '" + config_path + "'");
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const json::exception& e) {
    throw InputError(std::string("sweep config: ") + e.what());
  }
  if (!cfg.contains("runs") || !cfg["runs"].is_array()) throw InputError("sweep config needs a 'runs' array");
  std::vector<Nil3Options> opts;
  try {
    for (const auto& r : cfg["runs"]) opts.push_back(Nil3Options::from_json(r));
  } catch (const json::exception& e) {
    throw InputError(std::string("sweep config: ") + e.what());
  }

  std::vector<json> results(opts.size());
  std::vector<int> status(opts.size(), kOk);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < opts.size(); i = next++) {
      try {
        const auto out = run_nil3_case(opts[i]);
        if (!opts[i].out_csv.empty()) write_text(opts[i].out_csv, out.csv);
        if (!opts[i].out_json.empty()) write_text(opts[i].out_json, dump(out.summary));
        status[i] = out.status;
        results[i] = {{"index", i}, {"status", out.status}, {"final", out.summary["final"]},
                      {"fits", out.summary["fits"]}};
      } catch (const std::exception& e) {
        status[i] = kError;
        results[i] = {{"index", i}, {"status", kError}, {"error", e.what()}};
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(opts.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::cout << dump(json{{"runs", results}});
  int worst = kOk;
  for (int s : status) {
    if (s == kError) worst = kError;
    else if (s == kAssert && worst == kOk) worst = kAssert;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// accept

int cmd_accept(std::vector<int> ids) {
  if (ids.empty())
    for (int id = 1; id <= acceptance::criterion_count; ++id) ids.push_back(id);
  for (int id : ids)
    if (id < 1 || id > acceptance::criterion_count) throw InputError("--only must be in 1..10");
  acceptance::Context ctx;
  bool ok = true;
  for (int id : ids) {
    const auto r = acceptance::run(id, ctx);
    std::printf("%s\n", acceptance::format_line(r).c_str());
    std::fflush(stdout);
    ok = ok && r.pass;
  }
  return ok ? kOk : kAssert;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoflow: Ricci flow coupled with harmonic map flow"};
  app.require_subcommand(1);

  Nil3Options nil3_opt;
  auto* nil3_cmd = app.add_subcommand("nil3", "integrate the coupled Ricci-harmonic flow on Nil^3 and summarize its asymptotics");
  add_nil3_options(*nil3_cmd, nil3_opt);

  RRFSOptions rrfs_opt;
  auto* rrfs_cmd = app.add_subcommand("rrfs", "run the RRFS system on a flat periodic base");
  rrfs_cmd->add_option("--n", rrfs_opt.n, "base dimension (1 or 2)")->capture_default_str();
  rrfs_cmd->add_option("--N", rrfs_opt.N, "fiber dimension")->capture_default_str();
  rrfs_cmd->add_option("--size", rrfs_opt.size, "grid points per axis")->capture_default_str();
  rrfs_cmd->add_option("--period", rrfs_opt.period, "period per axis")->capture_default_str();
  rrfs_cmd->add_option("--init", rrfs_opt.init, "flat | fiber | random")->capture_default_str();
  rrfs_cmd->add_option("--eps", rrfs_opt.eps, "fiber perturbation amplitude")->capture_default_str();
  rrfs_cmd->add_option("--seed", rrfs_opt.seed, "seed for --init random")->capture_default_str();
  rrfs_cmd->add_option("--rescale", rrfs_opt.rescale, "off | const:<s> | volume")->capture_default_str();
  rrfs_cmd->add_option("--c", rrfs_opt.c, "coupling constant c")->capture_default_str();
  rrfs_cmd->add_option("--t-end", rrfs_opt.t_end, "integration horizon")->capture_default_str();
  rrfs_cmd->add_option("--snapshots", rrfs_opt.snapshots, "snapshot times")->delimiter(',');
  rrfs_cmd->add_option("--series-points", rrfs_opt.series_points, "uniform series samples")->capture_default_str();
  rrfs_cmd->add_option("--rtol", rrfs_opt.rtol, "relative tolerance")->capture_default_str();
  rrfs_cmd->add_option("--atol", rrfs_opt.atol, "absolute tolerance")->capture_default_str();
  rrfs_cmd->add_option("--kappa-cfl", rrfs_opt.kappa_cfl, "CFL factor")->capture_default_str();
  rrfs_cmd->add_flag("--harmonic-only", rrfs_opt.harmonic_only, "evolve G only, g and A frozen");
  rrfs_cmd->add_option("--out-dir", rrfs_opt.out_dir, "directory for series.csv, summary.json, snapshots");

  VerifyOptions verify_opt;
  auto* verify_cmd = app.add_subcommand("verify", "check the tension identity and blowdown closure");
  verify_cmd->add_option("--check", verify_opt.check, "all | tension | blowdown")->capture_default_str();
  verify_cmd->add_option("--seed", verify_opt.seed, "random field seed")->capture_default_str();
  verify_cmd->add_option("--n", verify_opt.n, "base dimension")->capture_default_str();
  verify_cmd->add_option("--N", verify_opt.N, "fiber dimension")->capture_default_str();
  verify_cmd->add_option("--size", verify_opt.size, "grid points per axis")->capture_default_str();
  verify_cmd->add_option("--s", verify_opt.s, "blowdown factor")->capture_default_str();
  verify_cmd->add_flag("--corrupt-christoffel", verify_opt.corrupt_christoffel, "flip the target Christoffel sign");
  verify_cmd->add_option("--out-json", verify_opt.out_json, "summary JSON path");

  FitOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("fit", "fit a component of a trajectory CSV");
  fit_cmd->add_option("--csv", fit_opt.csv, "trajectory CSV (t,A,B,C,Phi)")->required();
  fit_cmd->add_option("--component", fit_opt.component, "A | B | C")->capture_default_str();
  fit_cmd->add_option("--mode", fit_opt.mode, "power | prefactor | log")->capture_default_str();
  fit_cmd->add_option("--window", fit_opt.window, "window lo hi")->expected(2);
  fit_cmd->add_option("--exponent", fit_opt.exponent, "fixed exponent for --mode prefactor")->capture_default_str();

  std::string sweep_config;
  int sweep_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* sweep_cmd = app.add_subcommand("sweep", "run a JSON list of nil3 configurations concurrently");
  sweep_cmd->add_option("--config", sweep_config, "sweep JSON file")->required();
  sweep_cmd->add_option("--threads", sweep_threads, "worker threads")->check(CLI::PositiveNumber);

  std::vector<int> accept_ids;
  auto* accept_cmd = app.add_subcommand("accept", "run the acceptance criteria");
  accept_cmd->add_option("--only", accept_ids, "criterion ids (1..10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (*nil3_cmd) return cmd_nil3(nil3_opt);
    if (*rrfs_cmd) return cmd_rrfs(rrfs_opt);
    if (*verify_cmd) return cmd_verify(verify_opt);
    if (*fit_cmd) return cmd_fit(fit_opt);
    if (*sweep_cmd) return cmd_sweep(sweep_config, sweep_threads);
    if (*accept_cmd) return cmd_accept(accept_ids);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kError;
  }
  return kError;
}
