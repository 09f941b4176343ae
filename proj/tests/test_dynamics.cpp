#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "otto/dynamics.hpp"
#include "otto/ode.hpp"

using namespace otto;

namespace {

State3 step_from(const MomentState& s0, double u, NoiseParams noise, double h) {
  IntegrationOptions o;
  o.rel_tol = 1e-12;
  o.abs_tol = 1e-14;
  const std::vector<double> at{h};
  auto f = [&](double, const State3& y) { return rhs(MomentState::from_array(y), u, noise).as_array(); };
  return solve_ivp<3>(f, 0.0, h, s0.as_array(), at, o).states.at(0);
}

}  // namespace

TEST(Rhs, ThermalStateIsNoiselessEquilibriumAtTopFrequency) {
  const MomentState d = rhs({1, 1, 0}, 1.0, {});
  EXPECT_EQ(d.x1, 0.0);
  EXPECT_EQ(d.x2, 0.0);
  EXPECT_EQ(d.x3, 0.0);
}

TEST(Rhs, PhaseNoiseLeavesThermalStateAtRestWhenU1) {
  // x1' = -2(0.01)(1)(1) + 2(0.01)(1) + 2(0) = 0
  // x2' =  2(0.01)(1)(1) - 2(0.01)(1)(1) - 2(1)(0) = 0
  // x3' = -(1)(1) + 1 - 4(0.01)(1)(0) = 0
  const MomentState d = rhs({1, 1, 0}, 1.0, {0.0, 0.01});
  EXPECT_NEAR(d.x1, 0.0, 1e-16);
  EXPECT_NEAR(d.x2, 0.0, 1e-16);
  EXPECT_NEAR(d.x3, 0.0, 1e-16);
}

TEST(Rhs, AmplitudeNoiseBySubstitutionAndFiniteDifference) {
  const MomentState s{2.0, 1.0, 0.5};
  const double u = 1.0 / 9.0;
  const NoiseParams noise{0.02, 0.0};
  // x1' = 2 x3 = 1
  // x2' = 2(0.02) u^2 (2) - 2 u (0.5) = 0.08/81 - 1/9
  // x3' = -u (2) + 1 = 7/9
  const MomentState d = rhs(s, u, noise);
  EXPECT_NEAR(d.x1, 1.0, 1e-15);
  EXPECT_NEAR(d.x2, 0.08 / 81.0 - 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(d.x3, 7.0 / 9.0, 1e-15);

  // Second-order one-sided difference of the integrated trajectory.
  const double h = 1e-4;
  const State3 y1 = step_from(s, u, noise, h), y2 = step_from(s, u, noise, 2 * h);
  const State3 y0 = s.as_array();
  const double fd[3] = {(-3 * y0[0] + 4 * y1[0] - y2[0]) / (2 * h), (-3 * y0[1] + 4 * y1[1] - y2[1]) / (2 * h),
                        (-3 * y0[2] + 4 * y1[2] - y2[2]) / (2 * h)};
  EXPECT_NEAR(fd[0], d.x1, 1e-6);
  EXPECT_NEAR(fd[1], d.x2, 1e-6);
  EXPECT_NEAR(fd[2], d.x3, 1e-6);
}

TEST(Rhs, RejectsNonFiniteInput) {
  EXPECT_THROW(rhs({NAN, 1, 0}, 1.0, {}), DomainError);
  EXPECT_THROW(rhs({1, INFINITY, 0}, 1.0, {}), DomainError);
  EXPECT_THROW(rhs({1, 1, 0}, NAN, {}), DomainError);
}

TEST(Rhs, NoiselessLimitIsTheBareSystem) {
  oracle::Gen g(11);
  for (int i = 0; i < 200; ++i) {
    const MomentState s = g.state();
    const double u = g.uniform(0.05, 1.0);
    const MomentState d = rhs(s, u, {});
    EXPECT_DOUBLE_EQ(d.x1, 2 * s.x3);
    EXPECT_DOUBLE_EQ(d.x2, -2 * u * s.x3);
    EXPECT_DOUBLE_EQ(d.x3, -u * s.x1 + s.x2);
  }
}

TEST(Physical, Examples) {
  PhysicalState p = to_physical({1, 1, 0}, 1.0);
  EXPECT_DOUBLE_EQ(p.energy, 1.0);
  EXPECT_DOUBLE_EQ(p.lagrangian_mean, 0.0);
  EXPECT_DOUBLE_EQ(p.correlation, 0.0);

  p = to_physical({3.0, 1.0 / 3.0, 0}, 1.0 / 9.0);
  EXPECT_NEAR(p.energy, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.lagrangian_mean, 0.0, 1e-15);
  EXPECT_NEAR(p.correlation, 0.0, 1e-15);

  p = to_physical({2, 0.5, 1}, 0.25);
  EXPECT_DOUBLE_EQ(p.energy, 0.5);
  EXPECT_DOUBLE_EQ(p.lagrangian_mean, 0.0);
  EXPECT_DOUBLE_EQ(p.correlation, 0.5);

  EXPECT_THROW(to_physical({1, 1, 0}, 0.0), DomainError);
  EXPECT_THROW(to_physical({1, 1, 0}, -1.0), DomainError);
}

TEST(Physical, InverseExamples) {
  MomentState s = from_physical({1, 0, 0, 1.0});
  EXPECT_DOUBLE_EQ(s.x1, 1.0);
  EXPECT_DOUBLE_EQ(s.x2, 1.0);
  EXPECT_DOUBLE_EQ(s.x3, 0.0);

  s = from_physical({1.0 / 3.0, 0, 0, 1.0 / 9.0});
  EXPECT_NEAR(s.x1, 3.0, 1e-14);
  EXPECT_NEAR(s.x2, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(s.x3, 0.0);

  EXPECT_THROW(from_physical({1, 0, 0, 0.0}), DomainError);
}

TEST(Physical, RoundTripProperty) {
  oracle::Gen g(5);
  for (int i = 0; i < 1000; ++i) {
    const MomentState s = g.state();
    const double u = g.uniform(1e-3, 1.0);
    const MomentState r = from_physical(to_physical(s, u));
    EXPECT_NEAR(r.x1, s.x1, 1e-13 * std::max(1.0, s.x1 / u));
    EXPECT_NEAR(r.x2, s.x2, 1e-14 * std::max(1.0, s.x2));
    EXPECT_NEAR(r.x3, s.x3, 1e-14 * std::max(1.0, std::abs(s.x3)));
  }
  // Energy as (x2 + u x1)/2 round-trips back through from_physical.
  for (int i = 0; i < 100; ++i) {
    const MomentState s = g.state();
    const double u = g.uniform(0.1, 1.0);
    EXPECT_NEAR(to_physical(s, u).energy, 0.5 * (s.x2 + u * s.x1), 1e-15);
  }
}

TEST(Casimir, Examples) {
  EXPECT_DOUBLE_EQ(casimir_companion({1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(casimir_companion({2, 1, 0.5}), 1.75);
}

TEST(Casimir, RateVanishesWithoutNoise) {
  oracle::Gen g(7);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(casimir_rate(g.state(), g.uniform(0.05, 1.0), {}), 0.0);
}

TEST(Casimir, AmplitudeNoiseRateAtThermalState) {
  // E - L = 1, L = C = 0: 2 * 0.02 * 1 = 0.04.
  const NoiseParams noise{0.02, 0.0};
  EXPECT_NEAR(casimir_rate({1, 1, 0}, 1.0, noise), 0.04, 1e-15);
  const double h = 1e-4;
  auto x = [](const State3& y) { return y[0] * y[1] - y[2] * y[2]; };
  const State3 y1 = step_from({1, 1, 0}, 1.0, noise, h), y2 = step_from({1, 1, 0}, 1.0, noise, 2 * h);
  EXPECT_NEAR((-3 * 1.0 + 4 * x(y1) - x(y2)) / (2 * h), 0.04, 1e-7);
}

TEST(Casimir, RateIsZeroOnTheEnergyAxis) {
  // L = C = 0 means x2 = u x1, x3 = 0; phase noise alone leaves X fixed there.
  oracle::Gen g(8);
  for (int i = 0; i < 100; ++i) {
    const double u = g.uniform(0.1, 1.0), x1 = g.uniform(0.5, 3.0);
    EXPECT_NEAR(casimir_rate({x1, u * x1, 0.0}, u, {0.0, g.uniform(0.0, 0.1)}), 0.0, 1e-15);
  }
}

TEST(Casimir, RateMatchesChainRuleProperty) {
  oracle::Gen g(9);
  for (int i = 0; i < 500; ++i) {
    const MomentState s = g.state();
    const double u = g.uniform(0.05, 1.0);
    const NoiseParams n = g.noise();
    const MomentState d = rhs(s, u, n);
    const double chain = d.x1 * s.x2 + s.x1 * d.x2 - 2 * s.x3 * d.x3;
    EXPECT_NEAR(casimir_rate(s, u, n), chain, 1e-12 * std::max(1.0, std::abs(chain)));
    EXPECT_GE(casimir_rate(s, u, n), 0.0);
  }
}

TEST(Measures, Delta) {
  EXPECT_NEAR(delta_measure(1.0 / 3.0, 1.0 / 3.0), 0.0, 1e-15);
  EXPECT_NEAR(delta_measure(0.4, 1.0 / 3.0), 0.2, 1e-15);
  EXPECT_THROW(delta_measure(0.4, 1.0), DomainError);
  EXPECT_THROW(delta_measure(-0.1, 0.5), DomainError);
}

TEST(Measures, Parasitic) {
  EXPECT_EQ(parasitic_energy({0.7, 0, 0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(parasitic_energy({1.0, 0.3, 0.4, 1}), 0.5);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(EngineConfig::make(1.0 / 3.0, {}, 1.0));
  EXPECT_THROW(EngineConfig::make(1.0, {}, 1.0), DomainError);
  EXPECT_THROW(EngineConfig::make(0.0, {}, 1.0), DomainError);
  EXPECT_THROW(EngineConfig::make(0.5, {-0.1, 0}, 1.0), DomainError);
  EXPECT_THROW(EngineConfig::make(0.5, {0, -0.1}, 1.0), DomainError);
  EXPECT_THROW(EngineConfig::make(0.5, {}, 0.0), DomainError);
  EXPECT_THROW(EngineConfig::make(0.5, {}, -2.0), DomainError);
}

TEST(Config, PhysicalUnitsAreNormalizedByTheHotFrequency) {
  const EngineConfig c = EngineConfig::from_physical_units(3.0, 1.0, 0.004, 0.002, 2.0);
  EXPECT_DOUBLE_EQ(c.freq_ratio, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.noise.gamma_a, 0.012);
  EXPECT_DOUBLE_EQ(c.noise.gamma_p, 0.006);
  EXPECT_DOUBLE_EQ(c.duration, 6.0);
  EXPECT_DOUBLE_EQ(c.u_min(), 1.0 / 9.0);
}
