#include "geoflow/asymptotics.hpp"
#include "geoflow/nil3.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace geoflow;
using namespace geoflow::nil3;

namespace {

Nil3Params ricci_params(double A0 = 1, double B0 = 1, double C0 = 1) {
  return Nil3Params(Nil3State(A0, B0, C0), MapSlope(0.0), CouplingSchedule::zero());
}

std::vector<Nil3State> random_states(int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logu(-3.0, 3.0);
  std::vector<Nil3State> out;
  for (int i = 0; i < count; ++i) out.emplace_back(std::exp(logu(rng)), std::exp(logu(rng)), std::exp(logu(rng)));
  return out;
}

}  // namespace

TEST(Nil3, MinusTwoRicciExamples) {
  const auto r = minus_two_ricci(Nil3State(1, 1, 1));
  EXPECT_EQ(r[0], 1.0);
  EXPECT_EQ(r[1], 1.0);
  EXPECT_EQ(r[2], -1.0);
  const auto q = minus_two_ricci(Nil3State(2, 3, 6));
  EXPECT_DOUBLE_EQ(q[0], 2.0);
  EXPECT_DOUBLE_EQ(q[1], 3.0);
  EXPECT_DOUBLE_EQ(q[2], -6.0);
}

TEST(Nil3, MinusTwoRicciScaleInvariant) {
  for (const auto& s : random_states(50, 1)) {
    const auto r = minus_two_ricci(s);
    const auto q = minus_two_ricci(Nil3State(3.7 * s.A, 3.7 * s.B, 3.7 * s.C));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], r[i], 1e-14 * std::abs(r[i]));
  }
}

TEST(Nil3, RhsExamples) {
  const auto r0 = rhs(Nil3State(1, 1, 1), 0.0, ricci_params());
  EXPECT_EQ(r0, (std::array<double, 3>{1, 1, -1}));
  const Nil3Params p(Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5));
  EXPECT_EQ(rhs(Nil3State(1, 1, 1), 3.0, p), (std::array<double, 3>{2, 1, -1}));
}

TEST(Nil3, RhsMatchesRicciWithoutCouplingAndConservesPhi) {
  const auto p = ricci_params();
  const Nil3Params q(Nil3State(1, 1, 1), MapSlope(0.7), CouplingSchedule::power(2.0, 1.0));
  for (const auto& s : random_states(100, 2)) {
    EXPECT_EQ(rhs(s, 5.0, p), minus_two_ricci(s));
    const auto d = rhs(s, 5.0, q);
    EXPECT_NEAR(d[1] * s.C + s.B * d[2], 0.0, 1e-14 * std::abs(d[1] * s.C));
    // A, B increase and C decreases at every state.
    EXPECT_GT(d[0], 0.0);
    EXPECT_GT(d[1], 0.0);
    EXPECT_LT(d[2], 0.0);
  }
}

TEST(Nil3, ConservedPhi) {
  EXPECT_EQ(conserved_phi(Nil3State(1, 1, 1)), 1.0);
  EXPECT_EQ(conserved_phi(Nil3State(5, 2, 3)), 6.0);
  const Nil3Params p(Nil3State(0.5, 2.0, 3.0), MapSlope(1.3), CouplingSchedule::constant(0.8));
  ode::IntegratorConfig cfg;
  cfg.rtol = 1e-9;
  EXPECT_LE(phi_drift(integrate(p, 1e8, cfg)), 1e-8);
}

TEST(Nil3, StateRejectsNonPositive) {
  EXPECT_THROW(Nil3State(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(Nil3State(1, -1, 1), std::invalid_argument);
  EXPECT_THROW(Nil3State(1, 1, NAN), std::invalid_argument);
  EXPECT_THROW(CouplingSchedule::constant(-1.0), std::invalid_argument);
  EXPECT_THROW(CouplingSchedule::power(1.0, 0.0), std::invalid_argument);
}

TEST(Nil3, CouplingScheduleNonIncreasing) {
  for (const auto& c : {CouplingSchedule::zero(), CouplingSchedule::constant(0.3), CouplingSchedule::power(2.0, 0.5),
                        CouplingSchedule::power(1.0, 3.0, 4.0)}) {
    double prev = c(0.0);
    for (double t = 0.01; t < 1e6; t *= 1.7) {
      EXPECT_GE(c(t), 0.0);
      EXPECT_LE(c(t), prev);
      prev = c(t);
    }
  }
}

TEST(Nil3, CouplingScheduleParseRoundTrip) {
  for (const auto& c : {CouplingSchedule::zero(), CouplingSchedule::constant(0.5), CouplingSchedule::power(1.0, 2.0),
                        CouplingSchedule::power(0.1, 1.0 / 3.0)}) {
    const auto back = CouplingSchedule::parse(c.to_string());
    EXPECT_EQ(back.kind(), c.kind());
    EXPECT_EQ(back.c0(), c.c0());
    EXPECT_EQ(back.r(), c.r());
  }
  for (const char* bad : {"", "const", "const:", "const:x", "power:1", "power:1,", "power:1,0", "const:-1", "linear:1"}) {
    EXPECT_THROW(CouplingSchedule::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(Nil3, ExactRicciSolution) {
  const auto s0 = exact_ricci_solution(0.0, 1.3, 0.4);
  EXPECT_EQ(s0.A, 1.3);
  EXPECT_EQ(s0.B, 1.3);
  EXPECT_NEAR(s0.C, 0.4, 1e-16);
  const auto s = exact_ricci_solution(21.0, 1.0, 1.0);
  EXPECT_NEAR(s.A, 4.0, 1e-14);
  EXPECT_NEAR(s.B, 4.0, 1e-14);
  EXPECT_NEAR(s.C, 0.25, 1e-15);
  EXPECT_THROW(exact_ricci_solution(1.0, Nil3State(1.0, 2.0, 1.0)), std::invalid_argument);
}

TEST(Nil3, ExactRicciSolutionResidual) {
  // d/dt (A0^3 + 3 Phi t)^{1/3} = Phi (A0^3 + 3 Phi t)^{-2/3}, by hand.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1e3);
  const double A0 = 1.7, C0 = 0.6, phi = A0 * C0;
  const auto p = ricci_params(A0, A0, C0);
  for (int i = 0; i < 100; ++i) {
    const double t = u(rng);
    const auto s = exact_ricci_solution(t, A0, C0);
    const double dA = phi * std::pow(A0 * A0 * A0 + 3 * phi * t, -2.0 / 3.0);
    const double dC = -phi * dA / (s.A * s.A);
    const auto r = rhs(s, t, p);
    EXPECT_NEAR(r[0], dA, 1e-12 * dA);
    EXPECT_NEAR(r[1], dA, 1e-12 * dA);
    EXPECT_NEAR(r[2], dC, 1e-12 * std::abs(dC));
  }
}

TEST(Nil3, FlowResidualOfOracle) {
  const auto tr = sample_exact_ricci(1.0, 1.0, 1e6, 64);
  EXPECT_LE(flow_residual(tr, ricci_params()), 1e-6);
}

TEST(Nil3, FlowResidualDetectsNonSolution) {
  auto tr = sample_exact_ricci(1.0, 1.0, 1e2, 32);
  for (auto& s : tr.states) s = tr.states.front();
  EXPECT_GT(flow_residual(tr, ricci_params()), 0.1);
  ode::Trajectory tiny;
  tiny.times = {0.0, 1.0, 2.0, 3.0};
  tiny.states.assign(4, Nil3State().to_vector());
  EXPECT_THROW(flow_residual(tiny, ricci_params()), std::invalid_argument);
}

TEST(Nil3, BlowdownIdentity) {
  const Nil3Params p(Nil3State(1, 2, 3), MapSlope(0.5), CouplingSchedule::power(1.0, 2.0));
  const auto tr = integrate(p, 1e3, {});
  const auto [q, ts] = blowdown(p, tr, 1.0);
  EXPECT_EQ(ts.times, tr.times);
  EXPECT_EQ(ts.states, tr.states);
  EXPECT_EQ(q.slope.a, p.slope.a);
  EXPECT_EQ(q.coupling(7.0), p.coupling(7.0));
}

TEST(Nil3, BlowdownCouplingPointwise) {
  const Nil3Params p(Nil3State(1, 1, 1), MapSlope(1.5), CouplingSchedule::power(0.7, 1.3));
  for (double s : {0.5, 4.0, 13.0}) {
    const auto [q, tr] = blowdown(p, sample_exact_ricci(1, 1, 10, 8), s);
    for (double t : {0.0, 0.1, 1.0, 17.0, 1e4}) {
      EXPECT_NEAR(q.f(t), p.f(s * t), 1e-14 * std::max(1.0, p.f(s * t)));
      EXPECT_NEAR(q.slope.a * q.slope.a * q.coupling(t), p.slope.a * p.slope.a * p.coupling(s * t), 1e-14);
    }
  }
}

TEST(Nil3, BlowdownOfOracleIsSolution) {
  const auto p = ricci_params();
  const auto tr = sample_exact_ricci(1.0, 1.0, 1e6, 32);
  const double base = flow_residual(tr, p);
  const auto [q, ts] = blowdown(p, tr, 4.0);
  // A_s(t) = (1 + 12 t)^{1/3} / 4
  for (std::size_t k = 0; k < ts.size(); k += 17) {
    EXPECT_NEAR(ts.states[k](0), std::cbrt(1.0 + 12.0 * ts.times[k]) / 4.0, 1e-12 * ts.states[k](0));
  }
  EXPECT_LE(flow_residual(ts, q), 10.0 * base);
}

TEST(Nil3, BlowdownWindowOutsideSource) {
  const auto p = ricci_params();
  const auto tr = sample_exact_ricci(1.0, 1.0, 100.0, 8);
  EXPECT_THROW(blowdown(p, tr, 2.0, std::make_pair(0.0, 60.0)), std::out_of_range);
  EXPECT_NO_THROW(blowdown(p, tr, 2.0, std::make_pair(1.0, 50.0)));
  EXPECT_THROW(blowdown(p, tr, -1.0), std::invalid_argument);
}

TEST(Nil3, BlowdownClosureOnIntegratedRuns) {
  const Nil3Params p(Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5));
  const auto tr = integrate(p, 1e6, {});
  const double base = flow_residual(tr, p);
  for (double s : {0.5, 4.0}) {
    const auto [q, ts] = blowdown(p, tr, s);
    EXPECT_LE(flow_residual(ts, q), 10.0 * base) << "s=" << s;
  }
}

TEST(Nil3, PredictedConstants) {
  auto c = predicted_constants(ricci_params());
  EXPECT_NEAR(c.K, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.ricci_prefactors[0], std::cbrt(3.0), 1e-14);
  EXPECT_NEAR(predicted_constants(ricci_params(2, 1, 1)).K, 2.0 / 3.0, 1e-15);
  const Nil3Params q(Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5));
  c = predicted_constants(q);
  EXPECT_DOUBLE_EQ(*c.const_A_rate, 1.0);
  EXPECT_DOUBLE_EQ(*c.const_kappa, 2.0);
  EXPECT_DOUBLE_EQ(*c.const_C_prefactor, std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(*c.const_C_prefactor_printed, 2.0 * std::sqrt(0.5));
  EXPECT_THROW(predicted_constants(Nil3Params(Nil3State(1, 1, 1), MapSlope(0.0), CouplingSchedule::constant(0.5))),
               std::invalid_argument);
}

TEST(Nil3, BoundsHoldOnOracleAndRuns) {
  const auto rep = bounds_check(sample_exact_ricci(1.0, 1.0, 1e8, 32), ricci_params());
  EXPECT_TRUE(rep.ok) << rep.worst_check << " " << rep.worst_slack;
  EXPECT_EQ(rep.worst_slack, 0.0);  // saturated at t = 0
  EXPECT_EQ(rep.worst_time, 0.0);

  const Nil3Params q(Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5));
  const auto rq = bounds_check(integrate(q, 1e8, {}), q);
  EXPECT_TRUE(rq.ok) << rq.worst_check << " " << rq.worst_slack << " at " << rq.worst_time;
}

TEST(Nil3, BoundsDetectViolation) {
  auto tr = sample_exact_ricci(1.0, 1.0, 100.0, 8);
  tr.states[5](2) = 1.5;  // C above C0
  const auto rep = bounds_check(tr, ricci_params());
  EXPECT_FALSE(rep.ok);
  EXPECT_LT(rep.worst_slack, 0.0);
  EXPECT_EQ(rep.worst_time, tr.times[5]);
}

// ---------------------------------------------------------------------------
// Fits

TEST(Fits, ExactPowerLaw) {
  ode::Trajectory tr;
  for (double t : ode::log_sample_times(0.0, 1e6, 16)) {
    tr.times.push_back(t);
    tr.states.push_back((ode::Vector(1) << 7.0 * std::sqrt(t)).finished());
  }
  const auto f = asymptotics::fit_power_law(tr, 0, {1e2, 1e6});
  EXPECT_NEAR(f.exponent, 0.5, 1e-10);
  EXPECT_NEAR(f.prefactor, 7.0, 1e-10 * 7.0);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.mode, asymptotics::FitMode::power_law);
}

TEST(Fits, ExactLogGrowth) {
  ode::Trajectory tr;
  for (double t : ode::log_sample_times(0.0, 1e8, 16)) {
    tr.times.push_back(t);
    tr.states.push_back((ode::Vector(1) << (t > 1 ? std::sqrt(5.0 * std::log(t)) : 0.0)).finished());
  }
  const auto f = asymptotics::fit_log_growth(tr, 0, {1e3, 1e8});
  EXPECT_NEAR(f.prefactor, 5.0, 1e-8);
  EXPECT_EQ(f.mode, asymptotics::FitMode::log_growth);
}

TEST(Fits, RicciOracleAsymptotics) {
  const auto tr = sample_exact_ricci(1.0, 1.0, 1e8, 32);
  const auto fa = asymptotics::fit_power_law(tr, 0, {1e6, 1e8});
  EXPECT_NEAR(fa.exponent, 1.0 / 3.0, 0.01);
  EXPECT_NEAR(fa.prefactor / std::cbrt(3.0), 1.0, 0.02);
  const auto fc = asymptotics::fit_power_law(tr, 2, {1e6, 1e8});
  EXPECT_NEAR(fc.exponent, -1.0 / 3.0, 0.01);
}

TEST(Fits, Errors) {
  auto tr = sample_exact_ricci(1.0, 1.0, 1e4, 8);
  EXPECT_THROW(asymptotics::fit_power_law(tr, 0, {1e3, 1e4}), std::invalid_argument);
  EXPECT_THROW(asymptotics::fit_power_law(tr, 0, {1e3, 1e6}), std::out_of_range);
  tr.states[tr.size() - 2](0) = -1.0;
  EXPECT_THROW(asymptotics::fit_power_law(tr, 0, {1e1, 1e4}), std::domain_error);
}

TEST(Fits, RhConstLogGrowthOfB) {
  const Nil3Params p(Nil3State(1, 1, 1), MapSlope(1.0), CouplingSchedule::constant(0.5));
  const auto tr = integrate(p, 1e8, {});
  const auto f = asymptotics::fit_log_growth(tr, 1, {1e6, 1e8});
  EXPECT_NEAR(f.prefactor / 2.0, 1.0, 0.05);
  EXPECT_LE(phi_drift(tr), 1e-8);
}
