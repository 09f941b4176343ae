#pragma once

// Moment dynamics of the expansion stroke in normalized units (omega_h = 1,
// energies in units of the initial energy E_h).
//
//   x1 = (omega_h / omega)^2 (E - L) / E_h
//   x2 = (E + L) / E_h
//   x3 = (omega_h / omega) C / E_h
//   u  = (omega / omega_h)^2

#include <array>
#include <cmath>
#include <string>

#include "otto/errors.hpp"

namespace otto {

struct NoiseParams {
  double gamma_a = 0.0;  ///< stiffness (amplitude) noise strength, omega_h * gamma_a
  double gamma_p = 0.0;  ///< phase damping strength, omega_h * gamma_p

  void validate() const {
    if (!(gamma_a >= 0.0) || !(gamma_p >= 0.0) || !std::isfinite(gamma_a) || !std::isfinite(gamma_p)) {
      throw DomainError("noise strengths must be finite and non-negative");
    }
  }
  bool noiseless() const { return gamma_a == 0.0 && gamma_p == 0.0; }
};

/// One problem instance: the frequency ratio omega_c/omega_h, the noise, and the
/// normalized stroke duration omega_h*T.
struct EngineConfig {
  double freq_ratio = 1.0 / 3.0;
  NoiseParams noise{};
  double duration = 1.0;

  static EngineConfig make(double freq_ratio, NoiseParams noise, double duration) {
    EngineConfig cfg{freq_ratio, noise, duration};
    cfg.validate();
    return cfg;
  }

  /// Build from raw physical quantities (angular frequencies in rad/s, noise
  /// strengths in s, duration in s).
  static EngineConfig from_physical_units(double omega_h, double omega_c, double gamma_a, double gamma_p,
                                          double stroke_time) {
    if (!(omega_h > 0.0)) throw DomainError("omega_h must be positive");
    return make(omega_c / omega_h, NoiseParams{omega_h * gamma_a, omega_h * gamma_p}, omega_h * stroke_time);
  }

  void validate() const {
    if (!(freq_ratio > 0.0 && freq_ratio < 1.0)) throw DomainError("freq_ratio must lie in (0, 1)");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw DomainError("duration must be positive");
    noise.validate();
  }

  double u_min() const { return freq_ratio * freq_ratio; }
  double u_max() const { return 1.0; }
  EngineConfig with_duration(double t) const { return make(freq_ratio, noise, t); }
};

struct MomentState {
  double x1 = 1.0;
  double x2 = 1.0;
  double x3 = 0.0;

  static constexpr MomentState initial() { return {1.0, 1.0, 0.0}; }
  std::array<double, 3> as_array() const { return {x1, x2, x3}; }
  static MomentState from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
  bool finite() const { return std::isfinite(x1) && std::isfinite(x2) && std::isfinite(x3); }
};

/// Energy, Lagrangian and correlation expectations over E_h, with the control
/// value they were evaluated at.
struct PhysicalState {
  double energy = 0.0;
  double lagrangian_mean = 0.0;
  double correlation = 0.0;
  double control = 1.0;
};

inline MomentState rhs(const MomentState& s, double u, const NoiseParams& noise) {
  if (!s.finite() || !std::isfinite(u)) throw DomainError("rhs: non-finite input");
  const double ga = noise.gamma_a;
  const double gp = noise.gamma_p;
  return {
      -2.0 * gp * u * s.x1 + 2.0 * gp * s.x2 + 2.0 * s.x3,
      2.0 * (ga + gp) * u * u * s.x1 - 2.0 * gp * u * s.x2 - 2.0 * u * s.x3,
      -u * s.x1 + s.x2 - 4.0 * gp * u * s.x3,
  };
}

inline PhysicalState to_physical(const MomentState& s, double u) {
  if (!(u > 0.0)) throw DomainError("to_physical: control must be positive");
  return {0.5 * (s.x2 + u * s.x1), 0.5 * (s.x2 - u * s.x1), std::sqrt(u) * s.x3, u};
}

inline MomentState from_physical(const PhysicalState& p) {
  const double u = p.control;
  if (!(u > 0.0)) throw DomainError("from_physical: control must be positive");
  return {(p.energy - p.lagrangian_mean) / u, p.energy + p.lagrangian_mean, p.correlation / std::sqrt(u)};
}

/// x1*x2 - x3^2, proportional to (E^2 - L^2 - C^2)/omega^2. Constant without noise.
inline double casimir_companion(const MomentState& s) { return s.x1 * s.x2 - s.x3 * s.x3; }

/// Time derivative of casimir_companion along rhs. Differentiating x1*x2 - x3^2
/// gives 2 ga (u x1)^2 + 2 gp (x2 - u x1)^2 + 8 gp u x3^2, which in energy
/// variables is 2 [ga (E-L)^2 + 4 gp (L^2 + C^2)].
inline double casimir_rate(const MomentState& s, double u, const NoiseParams& noise) {
  const PhysicalState p = to_physical(s, u);
  const double el = p.energy - p.lagrangian_mean;
  return 2.0 * (noise.gamma_a * el * el +
                4.0 * noise.gamma_p * (p.lagrangian_mean * p.lagrangian_mean + p.correlation * p.correlation));
}

/// Relative loss of extracted heat against the ideal noiseless transfer.
inline double delta_measure(double final_energy_ratio, double freq_ratio) {
  if (!(freq_ratio > 0.0 && freq_ratio < 1.0)) throw DomainError("delta_measure: freq_ratio must lie in (0, 1)");
  if (!(final_energy_ratio > 0.0)) throw DomainError("delta_measure: final energy must be positive");
  return final_energy_ratio / freq_ratio - 1.0;
}

/// Energy left in the L and C modes.
inline double parasitic_energy(const PhysicalState& p) { return std::hypot(p.lagrangian_mean, p.correlation); }

}  // namespace otto
