#pragma once

// Adaptive Dormand-Prince 5(4) integration of the moment equations, with the
// Hairer continuous extension for dense output and event location.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/errors.hpp"

namespace otto {

struct IntegrationOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  double max_step = 0.1;
  int dense_output_samples = 201;

  void validate() const {
    if (!(rel_tol > 0.0 && rel_tol < 1.0) || !(abs_tol > 0.0 && abs_tol < 1.0)) {
      throw DomainError("integration tolerances must lie in (0, 1)");
    }
    if (!(max_step > 0.0)) throw DomainError("max_step must be positive");
    if (dense_output_samples < 2) throw DomainError("need at least two output samples");
  }
};

using State3 = std::array<double, 3>;

namespace detail {

struct DopriCoefficients {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

template <std::size_t N>
std::array<double, N> axpy(const std::array<double, N>& y, double h, std::initializer_list<std::pair<double, const std::array<double, N>*>> terms) {
  std::array<double, N> out = y;
  for (const auto& [coef, k] : terms) {
    for (std::size_t i = 0; i < N; ++i) out[i] += h * coef * (*k)[i];
  }
  return out;
}

/// Continuous extension over one accepted step.
template <std::size_t N>
struct DenseStep {
  double t0, h;
  std::array<std::array<double, N>, 5> r;

  std::array<double, N> at(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    std::array<double, N> y{};
    for (std::size_t i = 0; i < N; ++i) {
      y[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
    }
    return y;
  }
};

}  // namespace detail

template <std::size_t N>
struct IvpResult {
  std::vector<double> times;
  std::vector<std::array<double, N>> states;
  double t_end = 0.0;
  std::array<double, N> y_end{};
  bool event_hit = false;
  int accepted_steps = 0;
  int rejected_steps = 0;
};

/// Integrate y' = f(t, y) from t0 to t1, reporting y at each of `sample_times`
/// (which must lie in [t0, t1] and be sorted). If `event` is given, stops at
/// the first crossing of event(t, y) from negative to non-negative and
/// truncates the samples there. `check` is called on every accepted state.
template <std::size_t N, class Rhs>
IvpResult<N> solve_ivp(Rhs&& f, double t0, double t1, std::array<double, N> y0, std::span<const double> sample_times,
                       const IntegrationOptions& opts,
                       const std::function<double(double, const std::array<double, N>&)>& event = {},
                       const std::function<void(double, const std::array<double, N>&)>& check = {}) {
  using C = detail::DopriCoefficients;
  using Vec = std::array<double, N>;
  IvpResult<N> res;
  std::size_t next_sample = 0;
  auto emit_until = [&](double t_lim, const detail::DenseStep<N>* dense, const Vec& y_at_lim) {
    while (next_sample < sample_times.size() && sample_times[next_sample] <= t_lim) {
      const double ts = sample_times[next_sample];
      res.times.push_back(ts);
      res.states.push_back(ts == t_lim || dense == nullptr ? y_at_lim : dense->at(ts));
      ++next_sample;
    }
  };
  while (next_sample < sample_times.size() && sample_times[next_sample] < t0) ++next_sample;
  if (next_sample < sample_times.size() && sample_times[next_sample] == t0) emit_until(t0, nullptr, y0);

  const double span = t1 - t0;
  res.t_end = t0;
  res.y_end = y0;
  if (span <= 0.0) return res;

  auto norm_of = [](const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  double t = t0;
  Vec y = y0;
  Vec k1 = f(t, y);
  // Initial step guess (Hairer's heuristic, simplified).
  double h = std::min(opts.max_step, span);
  {
    const double d0 = norm_of(y) + 1e-12, d1 = norm_of(k1) + 1e-12;
    h = std::min(h, 0.01 * d0 / d1);
    h = std::max(h, 1e-10 * span);
  }
  const double h_min = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t0), std::abs(t1));
  double g_prev = event ? event(t, y) : 0.0;

  while (t < t1) {
    bool last = false;
    if (t + h >= t1 || (t1 - (t + h)) < 1e-14 * span) {
      h = t1 - t;
      last = true;
    }
    const Vec k2 = f(t + C::c2 * h, detail::axpy<N>(y, h, {{C::a21, &k1}}));
    const Vec k3 = f(t + C::c3 * h, detail::axpy<N>(y, h, {{C::a31, &k1}, {C::a32, &k2}}));
    const Vec k4 = f(t + C::c4 * h, detail::axpy<N>(y, h, {{C::a41, &k1}, {C::a42, &k2}, {C::a43, &k3}}));
    const Vec k5 =
        f(t + C::c5 * h, detail::axpy<N>(y, h, {{C::a51, &k1}, {C::a52, &k2}, {C::a53, &k3}, {C::a54, &k4}}));
    const Vec k6 = f(t + h, detail::axpy<N>(y, h, {{C::a61, &k1}, {C::a62, &k2}, {C::a63, &k3}, {C::a64, &k4}, {C::a65, &k5}}));
    const Vec y_new =
        detail::axpy<N>(y, h, {{C::a71, &k1}, {C::a73, &k3}, {C::a74, &k4}, {C::a75, &k5}, {C::a76, &k6}});
    const double t_new = last ? t1 : t + h;
    const Vec k7 = f(t_new, y_new);

    double err = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < N; ++i) {
      const double e = h * (C::e1 * k1[i] + C::e3 * k3[i] + C::e4 * k4[i] + C::e5 * k5[i] + C::e6 * k6[i] + C::e7 * k7[i]);
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err += (e / sc) * (e / sc);
      finite = finite && std::isfinite(y_new[i]);
    }
    err = std::sqrt(err / N);
    if (!finite || !std::isfinite(err)) {
      if (h <= h_min) throw DivergenceError("integration produced a non-finite state");
      h *= 0.25;
      ++res.rejected_steps;
      continue;
    }

    if (err > 1.0) {
      ++res.rejected_steps;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h < h_min) throw StiffnessError("step size underflow");
      continue;
    }

    detail::DenseStep<N> dense{t, h, {}};
    for (std::size_t i = 0; i < N; ++i) {
      const double ydiff = y_new[i] - y[i];
      const double bspl = h * k1[i] - ydiff;
      dense.r[0][i] = y[i];
      dense.r[1][i] = ydiff;
      dense.r[2][i] = bspl;
      dense.r[3][i] = ydiff - h * k7[i] - bspl;
      dense.r[4][i] = h * (C::d1 * k1[i] + C::d3 * k3[i] + C::d4 * k4[i] + C::d5 * k5[i] + C::d6 * k6[i] + C::d7 * k7[i]);
    }
    ++res.accepted_steps;

    if (event) {
      const double g_new = event(t_new, y_new);
      if (g_prev < 0.0 && g_new >= 0.0) {
        // Bisection on the dense interpolant down to rounding.
        double a = t, b = t_new;
        for (int it = 0; it < 200 && b - a > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b)); ++it) {
          const double m = 0.5 * (a + b);
          if (event(m, dense.at(m)) < 0.0) a = m; else b = m;
        }
        const Vec y_ev = dense.at(b);
        if (check) check(b, y_ev);
        emit_until(b, &dense, y_ev);
        res.t_end = b;
        res.y_end = y_ev;
        res.event_hit = true;
        return res;
      }
      g_prev = g_new;
    }

    if (check) check(t_new, y_new);
    emit_until(t_new, &dense, y_new);
    t = t_new;
    y = y_new;
    k1 = k7;
    const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h = std::min(h * fac, opts.max_step);
  }
  res.t_end = t;
  res.y_end = y;
  return res;
}

/// Sampled solution of the moment equations under a control.
struct Trajectory {
  std::vector<double> times;
  std::vector<MomentState> states;
  std::vector<double> controls;
  long clamped_evaluations = 0;  ///< rhs evaluations where the control was clamped into bounds

  const MomentState& final_state() const { return states.back(); }
  PhysicalState final_physical() const { return to_physical(states.back(), controls.back()); }
  PhysicalState physical_at(std::size_t i) const { return to_physical(states[i], controls[i]); }

  /// Columns: t, x1, x2, x3, u, E, L, C, X.
  void write_csv(std::ostream& os) const {
    os << "t,x1,x2,x3,u,E,L,C,X\n" << std::setprecision(12);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto& s = states[i];
      const PhysicalState p = physical_at(i);
      os << times[i] << ',' << s.x1 << ',' << s.x2 << ',' << s.x3 << ',' << controls[i] << ',' << p.energy << ','
         << p.lagrangian_mean << ',' << p.correlation << ',' << casimir_companion(s) << '\n';
    }
  }
};

namespace detail {

inline void check_moment_positivity(double t, const State3& y) {
  if (!std::isfinite(y[0]) || !std::isfinite(y[1]) || !std::isfinite(y[2])) {
    throw DivergenceError("non-finite moment state at t = " + std::to_string(t));
  }
  if (!(y[0] > 0.0) || !(y[1] > 0.0)) {
    throw DivergenceError("moment state left the positive cone (x1, x2 > 0) at t = " + std::to_string(t));
  }
}

inline std::vector<double> uniform_times(double duration, int samples) {
  std::vector<double> ts(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) ts[static_cast<std::size_t>(i)] = duration * i / (samples - 1);
  ts.back() = duration;
  return ts;
}

}  // namespace detail

/// Integrate from (1, 1, 0) under `control`, clamped into [freq_ratio^2, 1].
/// The integrator restarts at every control breakpoint.
inline Trajectory integrate(const EngineConfig& config, const ControlProfile& control,
                            const IntegrationOptions& opts = {}) {
  config.validate();
  opts.validate();
  const double lo = config.u_min(), hi = config.u_max();
  const double duration = config.duration;
  if (control.duration() < duration * (1.0 - 1e-12)) throw DomainError("control shorter than stroke duration");

  Trajectory traj;
  const std::vector<double> samples = detail::uniform_times(duration, opts.dense_output_samples);

  std::vector<double> cuts{0.0};
  for (double b : control.breakpoints()) {
    if (b > 0.0 && b < duration) cuts.push_back(b);
  }
  cuts.push_back(duration);

  State3 y = MomentState::initial().as_array();
  for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
    const double a = cuts[seg], b = cuts[seg + 1];
    if (b <= a) continue;
    // Left/right limits at a jump: evaluate strictly inside the segment.
    auto f = [&](double t, const State3& s) {
      const double te = std::clamp(t, a + 1e-15 * (b - a), b - 1e-15 * (b - a));
      const ControlSample cs = control.sample(te, lo, hi);
      if (cs.clamped) ++traj.clamped_evaluations;
      return rhs(MomentState::from_array(s), cs.value, config.noise).as_array();
    };
    std::vector<double> seg_samples;
    for (double ts : samples) {
      if (ts >= a && (ts < b || (seg + 2 == cuts.size() && ts <= b))) seg_samples.push_back(ts);
    }
    const auto res = solve_ivp<3>(f, a, b, y, seg_samples, opts, {}, detail::check_moment_positivity);
    for (std::size_t i = 0; i < res.times.size(); ++i) {
      traj.times.push_back(res.times[i]);
      traj.states.push_back(MomentState::from_array(res.states[i]));
      traj.controls.push_back(control.sample(res.times[i], lo, hi).value);
    }
    y = res.y_end;
  }
  return traj;
}

struct ControlScore {
  double delta = 0.0;
  double parasitic = 0.0;
  PhysicalState final{};
  MomentState final_state{};
};

/// Final-state diagnostics with the terminal control pinned to freq_ratio^2.
inline ControlScore score_final_state(const EngineConfig& config, const MomentState& final_state) {
  const PhysicalState p = to_physical(final_state, config.u_min());
  return {delta_measure(p.energy, config.freq_ratio), parasitic_energy(p), p, final_state};
}

inline ControlScore score_control(const EngineConfig& config, const ControlProfile& control,
                                  const IntegrationOptions& opts = {}) {
  IntegrationOptions o = opts;
  o.dense_output_samples = 2;
  const Trajectory traj = integrate(config, control, o);
  return score_final_state(config, traj.final_state());
}

}  // namespace otto
