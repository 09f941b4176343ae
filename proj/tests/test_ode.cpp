#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "otto/lgl.hpp"
#include "otto/ode.hpp"
#include "otto/reference.hpp"

using namespace otto;

namespace {
const double kRatio = 1.0 / 3.0;
const double kLo = kRatio * kRatio;
}  // namespace

TEST(Integrate, ConstantTopFrequencyStaysAtEquilibrium) {
  for (double t : {0.5, 3.0, 20.0}) {
    const Trajectory tr = integrate(EngineConfig::make(kRatio, {}, t), ControlProfile::constant(1.0, t));
    EXPECT_NEAR(tr.final_state().x1, 1.0, 1e-12);
    EXPECT_NEAR(tr.final_state().x2, 1.0, 1e-12);
    EXPECT_NEAR(tr.final_state().x3, 0.0, 1e-12);
  }
}

TEST(Integrate, SamplesAreUniformAndStartAtTheThermalState) {
  IntegrationOptions o;
  o.dense_output_samples = 37;
  const Trajectory tr = integrate(EngineConfig::make(kRatio, {0.01, 0.01}, 4.0), omega_profile(1, kRatio), o);
  ASSERT_EQ(tr.times.size(), 37u);
  EXPECT_EQ(tr.times.front(), 0.0);
  EXPECT_EQ(tr.times.back(), 4.0);
  for (std::size_t i = 1; i < tr.times.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
  EXPECT_EQ(tr.states.front().x1, 1.0);
  EXPECT_EQ(tr.states.front().x2, 1.0);
  EXPECT_EQ(tr.states.front().x3, 0.0);
}

TEST(Integrate, PiecewiseConstantMatchesMatrixExponentialProperty) {
  oracle::Gen g(21);
  for (int trial = 0; trial < 40; ++trial) {
    const double t = g.uniform(0.5, 12.0);
    const auto pc = g.piecewise(kLo, t);
    const NoiseParams n = trial % 2 ? g.noise() : NoiseParams{};
    const Trajectory tr = integrate(EngineConfig::make(kRatio, n, t), pc.profile());
    const oracle::Vec3 x = oracle::piecewise_final_state(pc.switches, pc.values, t, n.gamma_a, n.gamma_p);
    const MomentState& s = tr.final_state();
    const double tol = 10 * 1e-9;  // 10x the default relative tolerance, on O(1) moments
    EXPECT_NEAR(s.x1, static_cast<double>(x[0]), tol * std::max(1.0, s.x1) * t) << "trial " << trial;
    EXPECT_NEAR(s.x2, static_cast<double>(x[1]), tol * std::max(1.0, s.x2) * t) << "trial " << trial;
    EXPECT_NEAR(s.x3, static_cast<double>(x[2]), tol * std::max(1.0, std::abs(s.x3)) * t) << "trial " << trial;
  }
}

TEST(Integrate, ReferenceProfilesCloseTheCycle) {
  for (int n = 1; n <= 5; ++n) {
    const double tn = t_n(n, kRatio);
    const Trajectory tr = integrate(EngineConfig::make(kRatio, {}, tn), omega_profile(n, kRatio));
    const PhysicalState p = to_physical(tr.final_state(), kLo);
    EXPECT_LT(std::abs(p.lagrangian_mean), 1e-6) << n;
    EXPECT_LT(std::abs(p.correlation), 1e-6) << n;
    EXPECT_NEAR(p.energy, 1.0 / 3.0, 1e-6) << n;
  }
}

TEST(Integrate, NoiselessCasimirConservedProperty) {
  oracle::Gen g(31);
  for (int trial = 0; trial < 100; ++trial) {
    const double t = g.uniform(0.5, 30.0);
    const auto pc = g.piecewise(kLo, t, 10);
    // Switching can pump x1, x2 to O(60); the absolute error in X then scales
    // like tol * x1 * x2, so this check runs one decade tighter than default.
    const Trajectory tr = integrate(EngineConfig::make(kRatio, {}, t), pc.profile(), {1e-10, 1e-12});
    for (const auto& s : tr.states) ASSERT_LT(std::abs(casimir_companion(s) - 1.0), 1e-7) << "trial " << trial;
  }
}

TEST(Integrate, NoisyCasimirNondecreasingProperty) {
  oracle::Gen g(32);
  for (int trial = 0; trial < 100; ++trial) {
    const double t = g.uniform(0.5, 30.0);
    const auto pc = g.piecewise(kLo, t, 10);
    const NoiseParams n = g.noise();
    const Trajectory tr = integrate(EngineConfig::make(kRatio, n, t), pc.profile());
    for (std::size_t i = 1; i < tr.states.size(); ++i) {
      ASSERT_GE(casimir_companion(tr.states[i]) - casimir_companion(tr.states[i - 1]), -1e-9) << "trial " << trial;
    }
    for (const auto& s : tr.states) ASSERT_TRUE(s.x1 > 0 && s.x2 > 0);
  }
}

TEST(Integrate, EfficiencyFloorProperty) {
  oracle::Gen g(33);
  for (int trial = 0; trial < 60; ++trial) {
    const double t = g.uniform(0.5, 30.0);
    const auto pc = g.piecewise(kLo, t, 8);
    const EngineConfig cfg = EngineConfig::make(kRatio, trial % 3 ? g.noise() : NoiseParams{}, t);
    EXPECT_GE(score_control(cfg, pc.profile()).delta, -1e-8) << "trial " << trial;
  }
}

TEST(Integrate, HalvingTolerancesMovesFinalStateLessThanCoarseTolerance) {
  IntegrationOptions coarse;
  coarse.rel_tol = 1e-7;
  coarse.abs_tol = 1e-9;
  IntegrationOptions fine = coarse;
  fine.rel_tol /= 2;
  fine.abs_tol /= 2;
  const EngineConfig cfg = EngineConfig::make(kRatio, {0.02, 0.01}, t_n(2, kRatio));
  const auto a = integrate(cfg, omega_profile(2, kRatio), coarse).final_state();
  const auto b = integrate(cfg, omega_profile(2, kRatio), fine).final_state();
  EXPECT_LT(std::abs(a.x1 - b.x1), coarse.rel_tol * std::abs(a.x1) + coarse.abs_tol);
  EXPECT_LT(std::abs(a.x2 - b.x2), coarse.rel_tol * std::abs(a.x2) + coarse.abs_tol);
  EXPECT_LT(std::abs(a.x3 - b.x3), coarse.rel_tol * std::max(1.0, std::abs(a.x3)) + coarse.abs_tol);
}

TEST(Integrate, OvershootingInterpolantIsClampedAndCounted) {
  const LglGrid grid(8);
  std::vector<double> u(9, 1.0);
  u[4] = kLo;  // a dip forces Lagrange ringing above 1
  u.back() = kLo;
  const ControlProfile c = ControlProfile::nodal(grid, u, 2.0);
  const Trajectory tr = integrate(EngineConfig::make(kRatio, {}, 2.0), c);
  EXPECT_GT(tr.clamped_evaluations, 0);
  for (double v : tr.controls) {
    EXPECT_GE(v, kLo);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Integrate, Errors) {
  EXPECT_THROW(integrate(EngineConfig::make(kRatio, {}, 3.0), ControlProfile::constant(1.0, 2.0)), DomainError);
  IntegrationOptions bad;
  bad.rel_tol = 0.0;
  EXPECT_THROW(integrate(EngineConfig::make(kRatio, {}, 1.0), ControlProfile::constant(1.0, 1.0), bad), DomainError);

  // A jump of 1e10 in the derivative cannot be resolved by any step size.
  IntegrationOptions o;
  const std::vector<double> none;
  auto jump = [](double t, const std::array<double, 1>&) { return std::array<double, 1>{t < 0.5 ? 0.0 : 1e10}; };
  EXPECT_THROW(solve_ivp<1>(jump, 0.0, 1.0, {1.0}, none, o), StiffnessError);

  // Finite-time blow-up of y' = y^2 at t = 1.
  auto blow = [](double, const std::array<double, 1>& y) { return std::array<double, 1>{y[0] * y[0]}; };
  EXPECT_THROW(solve_ivp<1>(blow, 0.0, 2.0, {1.0}, none, o), DivergenceError);

  auto nan_rhs = [](double t, const State3&) { return State3{t > 0.3 ? NAN : 0.0, 0.0, 0.0}; };
  EXPECT_THROW(solve_ivp<3>(nan_rhs, 0.0, 1.0, State3{1, 1, 0}, none, o, {}, detail::check_moment_positivity),
               DivergenceError);
}

TEST(Score, IdealNoiselessTransfer) {
  const double t1 = t_n(1, kRatio);
  const ControlScore s = score_control(EngineConfig::make(kRatio, {}, t1), omega_profile(1, kRatio));
  EXPECT_NEAR(s.delta, 0.0, 1e-6);
  EXPECT_NEAR(s.parasitic, 0.0, 1e-6);
  EXPECT_NEAR(s.final.energy, 1.0 / 3.0, 1e-6);
}

TEST(Trajectory, CsvColumns) {
  IntegrationOptions o;
  o.dense_output_samples = 3;
  const Trajectory tr = integrate(EngineConfig::make(kRatio, {}, 1.0), ControlProfile::constant(1.0, 1.0), o);
  std::ostringstream os;
  tr.write_csv(os);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "t,x1,x2,x3,u,E,L,C,X");
  EXPECT_EQ(row, "0,1,1,0,1,1,0,0,1");
}
