#pragma once

// Baseline controls: the closed-form omega_n(t) = omega_h / (1 - mu_n omega_h t)
// family, and the two-segment adiabatic feedback protocols (build x3 = eps with
// a bang at the lower bound, then hold x3 fixed by state feedback until u
// reaches the lower bound).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/errors.hpp"
#include "otto/ode.hpp"

namespace otto {

namespace detail {
inline double log_inverse_ratio(double freq_ratio) {
  if (!(freq_ratio > 0.0 && freq_ratio < 1.0)) throw DomainError("freq_ratio must lie in (0, 1)");
  return std::log(1.0 / freq_ratio);
}
}  // namespace detail

inline double mu_n(int n, double freq_ratio) {
  if (n < 1) throw DomainError("mu_n: n must be >= 1");
  const double lr = detail::log_inverse_ratio(freq_ratio);
  return -2.0 * lr / std::sqrt(4.0 * n * n * std::numbers::pi * std::numbers::pi + lr * lr);
}

/// Duration omega_h*T_n at which omega_n returns L = C = 0 without noise.
inline double t_n(int n, double freq_ratio) {
  if (n < 1) throw DomainError("t_n: n must be >= 1");
  const double lr = detail::log_inverse_ratio(freq_ratio);
  return (1.0 / freq_ratio - 1.0) * std::sqrt(4.0 * n * n * std::numbers::pi * std::numbers::pi + lr * lr) /
         (2.0 * lr);
}

/// u(t) = 1/(1 - mu_n t)^2 on [0, T_n].
inline ControlProfile omega_profile(int n, double freq_ratio) {
  return ControlProfile::closed_form(mu_n(n, freq_ratio), t_n(n, freq_ratio));
}

enum class FeedbackMode { Noiseless, Dephasing };

struct FeedbackProtocol {
  double epsilon = 0.02;
  FeedbackMode mode = FeedbackMode::Noiseless;
  double sample_spacing = 0.01;  ///< recording resolution of the closed-loop control
};

struct FeedbackResult {
  double bang_duration = 0.0;   ///< time spent at u = freq_ratio^2 building x3 = epsilon
  double total_duration = 0.0;  ///< time at which the feedback u reached the lower bound
  Trajectory trajectory;        ///< closed-loop samples, controls recorded
  ControlProfile control;       ///< open-loop replay of the recorded control
  double invariant_start = 0.0;      ///< x1 x2 (+ 4 gp eps x2) when the feedback engages
  double max_invariant_drift = 0.0;  ///< over all accepted feedback steps
  double max_abs_x3_rate = 0.0;      ///< |dx3/dt| over the feedback segment
  bool control_monotone = true;      ///< u nonincreasing over the feedback segment
  double max_abs_correlation = 0.0;  ///< max |C|/E_h during feedback
  double max_lagrangian = 0.0;       ///< max L/E_h during feedback
  ControlScore score{};
};

/// Run an adiabatic feedback protocol as a closed loop. `config.duration` is
/// ignored; the protocol decides it.
inline FeedbackResult run_feedback(const EngineConfig& config, const FeedbackProtocol& protocol,
                                   const IntegrationOptions& opts = {}) {
  config.validate();
  opts.validate();
  const double eps = protocol.epsilon;
  if (!(eps > 0.0 && eps <= 0.2)) throw DomainError("feedback: epsilon must lie in (0, 0.2]");
  if (!(protocol.sample_spacing > 0.0)) throw DomainError("feedback: sample spacing must be positive");
  const double gp = config.noise.gamma_p;
  if (protocol.mode == FeedbackMode::Dephasing && !(gp > 0.0 && config.noise.gamma_a == 0.0)) {
    throw DomainError("dephasing feedback requires gamma_p > 0 and gamma_a = 0");
  }
  const double u_lo = config.u_min();
  const double r = config.freq_ratio;
  const double x3_weight = protocol.mode == FeedbackMode::Dephasing ? 4.0 * gp : 0.0;
  auto law = [&](const State3& y) { return y[1] / (y[0] + x3_weight * y[2]); };

  FeedbackResult out{.control = ControlProfile::constant(u_lo, 1.0)};
  Trajectory& traj = out.trajectory;

  // Segment 1: u = u_lo until x3 reaches eps. Moments rotate at 2*omega_c, so
  // x3 peaks within a quarter period.
  const double bang_horizon = std::numbers::pi / (2.0 * r);
  auto bang_rhs = [&](double, const State3& y) {
    return rhs(MomentState::from_array(y), u_lo, config.noise).as_array();
  };
  const auto seg1 = solve_ivp<3>(bang_rhs, 0.0, bang_horizon, MomentState::initial().as_array(),
                                 std::vector<double>{0.0}, opts,
                                 [&](double, const State3& y) { return y[2] - eps; }, detail::check_moment_positivity);
  if (!seg1.event_hit) throw ProtocolError("feedback: x3 never reaches epsilon under the lower-bound bang");
  const double ts = seg1.t_end;
  out.bang_duration = ts;
  {
    std::vector<double> grid;
    for (double t = 0.0; t < ts; t += protocol.sample_spacing) grid.push_back(t);
    const auto rec = solve_ivp<3>(bang_rhs, 0.0, ts, MomentState::initial().as_array(), grid, opts);
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
      traj.times.push_back(rec.times[i]);
      traj.states.push_back(MomentState::from_array(rec.states[i]));
      traj.controls.push_back(u_lo);
    }
  }

  const State3 y_switch = seg1.y_end;
  const double u_switch = law(y_switch);
  if (!(u_switch <= 1.0)) throw ProtocolError("feedback: control exceeds 1 at switch; epsilon too large");
  auto invariant = [&](const State3& y) { return y[0] * y[1] + x3_weight * eps * y[1]; };
  out.invariant_start = invariant(y_switch);

  // Segment 2: closed loop until u = x2/(x1 + w x3) hits u_lo.
  const double fb_horizon = 20.0 * (1.0 / (r * r)) / eps + 10.0;
  auto fb_rhs = [&](double, const State3& y) {
    return rhs(MomentState::from_array(y), law(y), config.noise).as_array();
  };
  double last_u = u_switch;
  auto monitor = [&](double, const State3& y) {
    detail::check_moment_positivity(0.0, y);
    const double u = law(y);
    out.max_invariant_drift = std::max(out.max_invariant_drift, std::abs(invariant(y) - out.invariant_start));
    const MomentState s = MomentState::from_array(y);
    out.max_abs_x3_rate = std::max(out.max_abs_x3_rate, std::abs(rhs(s, u, config.noise).x3));
    if (u > last_u + 1e-12) out.control_monotone = false;
    last_u = u;
    if (u > 0.0) {
      const PhysicalState p = to_physical(s, u);
      out.max_abs_correlation = std::max(out.max_abs_correlation, std::abs(p.correlation));
      out.max_lagrangian = std::max(out.max_lagrangian, p.lagrangian_mean);
    }
  };
  monitor(ts, y_switch);
  std::vector<double> grid;
  for (double t = ts; t < ts + fb_horizon; t += protocol.sample_spacing) grid.push_back(t);
  const auto seg2 = solve_ivp<3>(fb_rhs, ts, ts + fb_horizon, y_switch, grid, opts,
                                 [&](double, const State3& y) { return u_lo * (y[0] + x3_weight * y[2]) - y[1]; },
                                 monitor);
  if (!seg2.event_hit) throw ProtocolError("feedback: control never reached the lower bound");
  const double t_end = seg2.t_end;
  out.total_duration = t_end;

  for (std::size_t i = 0; i < seg2.times.size(); ++i) {
    if (seg2.times[i] >= t_end) break;
    traj.times.push_back(seg2.times[i]);
    traj.states.push_back(MomentState::from_array(seg2.states[i]));
    traj.controls.push_back(law(seg2.states[i]));
  }
  if (traj.times.back() < t_end) {
    traj.times.push_back(t_end);
    traj.states.push_back(MomentState::from_array(seg2.y_end));
    traj.controls.push_back(u_lo);
  }

  // Open-loop replay: constant bang, jump at ts, then the recorded feedback.
  std::vector<double> pt{0.0, ts}, pu{u_lo, u_lo};
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (traj.times[i] < ts) continue;
    pt.push_back(traj.times[i]);
    pu.push_back(traj.controls[i]);
  }
  if (pt.back() < t_end) {
    pt.push_back(t_end);
    pu.push_back(u_lo);
  }
  pu.back() = u_lo;
  out.control = ControlProfile::sampled(std::move(pt), std::move(pu));

  EngineConfig final_cfg = config;
  final_cfg.duration = t_end;
  out.score = score_final_state(final_cfg, MomentState::from_array(seg2.y_end));
  return out;
}

inline FeedbackResult feedback_noiseless(double freq_ratio, double epsilon, const IntegrationOptions& opts = {}) {
  return run_feedback(EngineConfig::make(freq_ratio, {}, 1.0), {epsilon, FeedbackMode::Noiseless}, opts);
}

inline FeedbackResult feedback_dephasing(double freq_ratio, double epsilon, double gamma_p,
                                         const IntegrationOptions& opts = {}) {
  if (!(gamma_p > 0.0)) throw DomainError("feedback_dephasing: gamma_p must be positive");
  return run_feedback(EngineConfig::make(freq_ratio, {0.0, gamma_p}, 1.0), {epsilon, FeedbackMode::Dephasing}, opts);
}

}  // namespace otto
