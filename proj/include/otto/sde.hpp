#pragma once

// Monte-Carlo check of the moment equations. An ensemble of classical
// oscillators (m = 1, omega_h = 1) obeys the Stratonovich system
//   dq = p (dt + o dw_p)
//   dp = -omega^2 q (dt + o dw_a + o dw_p),   dw_a^2 = 2 gamma_a dt, dw_p^2 = 2 gamma_p dt,
// and the ensemble means of H = (p^2 + omega^2 q^2)/2, L = (p^2 - omega^2 q^2)/2,
// C = omega q p are compared with the deterministic moment trajectory.
//
// Besides the Heun scheme, two deliberately wrong variants exist as negative
// controls. Euler-Maruyama on (q, p) drops the Ito correction, which is
// nonzero only for the dephasing noise (it multiplies both q and p).
// ObservableEuler integrates the per-trajectory (H, L, C) equations, obtained
// with the ordinary chain rule, as if they were Ito; that loses the noise-induced
// drift of both mechanisms, including the gamma_a heating term.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/errors.hpp"
#include "otto/ode.hpp"
#include "otto/parallel.hpp"

namespace otto {

enum class SdeScheme { Heun, EulerMaruyama, ObservableHeun, ObservableEuler };

inline const char* to_string(SdeScheme s) {
  switch (s) {
    case SdeScheme::Heun: return "heun";
    case SdeScheme::EulerMaruyama: return "euler-maruyama";
    case SdeScheme::ObservableHeun: return "observable-heun";
    case SdeScheme::ObservableEuler: return "observable-euler";
  }
  return "unknown";
}

inline SdeScheme sde_scheme_from_string(const std::string& s) {
  for (SdeScheme v : {SdeScheme::Heun, SdeScheme::EulerMaruyama, SdeScheme::ObservableHeun, SdeScheme::ObservableEuler}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown sde scheme '" + s + "'");
}

struct SdeOptions {
  long ensemble_size = 100000;
  double time_step = 1e-4;
  std::uint64_t seed = 1;
  SdeScheme scheme = SdeScheme::Heun;
  /// Drive w_a and w_p with the same Gaussian draw (a negative control).
  bool shared_noise = false;
  int samples = 101;  ///< output times, uniform on [0, duration]
  int workers = 1;
  long block_size = 1000;  ///< trajectories per reduction block; fixes the summation order

  void validate(const EngineConfig& config) const {
    if (ensemble_size < 2) throw DomainError("sde: ensemble_size must be >= 2");
    if (!(time_step > 0.0) || !std::isfinite(time_step)) throw DomainError("sde: time_step must be positive");
    if (samples < 2) throw DomainError("sde: need at least 2 output samples");
    if (block_size < 1) throw DomainError("sde: block_size must be positive");
    const double g = std::max(config.noise.gamma_a, config.noise.gamma_p);
    if (!(time_step * g < 0.01)) throw DomainError("sde: time_step * gamma must be << 1");
    if (!(time_step < 0.05)) throw DomainError("sde: time_step * omega must be << 1");
  }
};

/// Ensemble means and standard errors at the output times.
struct EnsembleSeries {
  std::vector<double> times;
  std::vector<std::array<double, 3>> mean;      ///< (E, L, C) / E_h
  std::vector<std::array<double, 3>> std_error;
  long ensemble_size = 0;  ///< trajectories that stayed finite
  long diverged = 0;
  double time_step = 0.0;  ///< step actually used (duration split evenly)
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// omega and d(omega)/dt on the fixed step grid.
struct OmegaGrid {
  std::vector<double> omega, omega_dot;
  double dt = 0.0;
  long steps = 0;
  long stride = 0;  ///< steps between output samples
};

inline OmegaGrid omega_grid(const EngineConfig& config, const ControlProfile& control, const SdeOptions& opts) {
  OmegaGrid g;
  const long intervals = opts.samples - 1;
  g.stride = std::max<long>(1, static_cast<long>(std::ceil(config.duration / (opts.time_step * intervals))));
  g.steps = g.stride * intervals;
  g.dt = config.duration / static_cast<double>(g.steps);
  const double lo = config.u_min(), hi = config.u_max();
  g.omega.resize(static_cast<std::size_t>(g.steps + 1));
  for (long i = 0; i <= g.steps; ++i) {
    const double t = i == g.steps ? config.duration : g.dt * static_cast<double>(i);
    g.omega[static_cast<std::size_t>(i)] = std::sqrt(control.sample(t, lo, hi).value);
  }
  g.omega_dot.resize(g.omega.size());
  for (long i = 0; i <= g.steps; ++i) {
    const long a = std::max<long>(0, i - 1), b = std::min(g.steps, i + 1);
    g.omega_dot[static_cast<std::size_t>(i)] =
        (g.omega[static_cast<std::size_t>(b)] - g.omega[static_cast<std::size_t>(a)]) / (g.dt * static_cast<double>(b - a));
  }
  return g;
}

struct BlockSums {
  long count = 0;
  long diverged = 0;
  std::vector<std::array<double, 3>> sum, sum_sq;
};

inline BlockSums run_block(const EngineConfig& config, const OmegaGrid& g, const SdeOptions& opts, long first,
                           long last) {
  const int ns = opts.samples;
  BlockSums out;
  out.sum.assign(static_cast<std::size_t>(ns), {0.0, 0.0, 0.0});
  out.sum_sq = out.sum;
  std::vector<std::array<double, 3>> local(static_cast<std::size_t>(ns));
  const double sa = std::sqrt(2.0 * config.noise.gamma_a * g.dt);
  const double sp = std::sqrt(2.0 * config.noise.gamma_p * g.dt);
  const double dt = g.dt;
  const bool observable = opts.scheme == SdeScheme::ObservableHeun || opts.scheme == SdeScheme::ObservableEuler;
  const bool heun = opts.scheme == SdeScheme::Heun || opts.scheme == SdeScheme::ObservableHeun;
  const double omega0 = g.omega.front();
  constexpr double blowup = 1e8;

  for (long traj = first; traj < last; ++traj) {
    std::mt19937_64 rng(splitmix64(opts.seed ^ splitmix64(static_cast<std::uint64_t>(traj))));
    std::normal_distribution<double> normal(0.0, 1.0);
    // Thermal at omega_h = 1, i.e. the moment state (1, 1, 0).
    double q = normal(rng);
    double p = normal(rng);
    bool ok = true;

    auto draw = [&](double& dwa, double& dwp) {
      if (opts.shared_noise) {
        const double xi = normal(rng);
        dwa = sa * xi;
        dwp = sp * xi;
        return;
      }
      dwa = sa > 0.0 ? sa * normal(rng) : 0.0;
      dwp = sp > 0.0 ? sp * normal(rng) : 0.0;
    };

    if (!observable) {
      auto record = [&](long step) {
        const double w = g.omega[static_cast<std::size_t>(step)];
        const double kin = 0.5 * p * p, pot = 0.5 * w * w * q * q;
        local[static_cast<std::size_t>(step / g.stride)] = {kin + pot, kin - pot, w * q * p};
      };
      record(0);
      for (long n = 0; n < g.steps; ++n) {
        double dwa = 0.0, dwp = 0.0;
        draw(dwa, dwp);
        const double w0 = g.omega[static_cast<std::size_t>(n)], w1 = g.omega[static_cast<std::size_t>(n + 1)];
        const double k1q = p * (dt + dwp);
        const double k1p = -w0 * w0 * q * (dt + dwa + dwp);
        if (heun) {
          const double qt = q + k1q, pt = p + k1p;
          q += 0.5 * (k1q + pt * (dt + dwp));
          p += 0.5 * (k1p - w1 * w1 * qt * (dt + dwa + dwp));
        } else {
          q += k1q;
          p += k1p;
        }
        if ((n + 1) % g.stride == 0) {
          if (!std::isfinite(q) || !std::isfinite(p) || std::abs(q) + std::abs(p) > blowup) {
            ok = false;
            break;
          }
          record(n + 1);
        }
      }
    } else {
      const double kin = 0.5 * p * p, pot = 0.5 * omega0 * omega0 * q * q;
      double h = kin + pot, l = kin - pot, c = omega0 * q * p;
      local[0] = {h, l, c};
      // Chain-rule (Stratonovich) form of the per-trajectory observables.
      auto incr = [&](double hh, double ll, double cc, std::size_t i, double dwa, double dwp) {
        const double w = g.omega[i], rate = g.omega_dot[i] / w;
        return std::array<double, 3>{rate * (hh - ll) * dt - w * cc * dwa,
                                     (-2.0 * w * cc - rate * (hh - ll)) * dt - w * cc * dwa - 2.0 * w * cc * dwp,
                                     (2.0 * w * ll + rate * cc) * dt - w * (hh - ll) * dwa + 2.0 * w * ll * dwp};
      };
      for (long n = 0; n < g.steps; ++n) {
        double dwa = 0.0, dwp = 0.0;
        draw(dwa, dwp);
        const auto k1 = incr(h, l, c, static_cast<std::size_t>(n), dwa, dwp);
        if (heun) {
          const auto k2 = incr(h + k1[0], l + k1[1], c + k1[2], static_cast<std::size_t>(n + 1), dwa, dwp);
          h += 0.5 * (k1[0] + k2[0]);
          l += 0.5 * (k1[1] + k2[1]);
          c += 0.5 * (k1[2] + k2[2]);
        } else {
          h += k1[0];
          l += k1[1];
          c += k1[2];
        }
        if ((n + 1) % g.stride == 0) {
          if (!std::isfinite(h) || !std::isfinite(l) || !std::isfinite(c) || std::abs(h) > blowup) {
            ok = false;
            break;
          }
          local[static_cast<std::size_t>((n + 1) / g.stride)] = {h, l, c};
        }
      }
    }

    if (!ok) {
      ++out.diverged;
      continue;
    }
    ++out.count;
    for (int s = 0; s < ns; ++s) {
      for (int k = 0; k < 3; ++k) {
        const double v = local[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)];
        out.sum[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] += v;
        out.sum_sq[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] += v * v;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Integrate the ensemble on a fixed grid and reduce to means and standard
/// errors. Results depend only on the seed and block_size, not on `workers`.
inline EnsembleSeries simulate_ensemble(const EngineConfig& config, const ControlProfile& control,
                                        const SdeOptions& opts) {
  config.validate();
  opts.validate(config);
  if (control.duration() < config.duration * (1.0 - 1e-12)) throw DomainError("control shorter than stroke duration");
  const detail::OmegaGrid g = detail::omega_grid(config, control, opts);

  const long blocks = (opts.ensemble_size + opts.block_size - 1) / opts.block_size;
  std::vector<detail::BlockSums> partial(static_cast<std::size_t>(blocks));
  detail::parallel_for(static_cast<int>(blocks), opts.workers, [&](int b) {
    const long first = b * opts.block_size;
    const long last = std::min(opts.ensemble_size, first + opts.block_size);
    partial[static_cast<std::size_t>(b)] = detail::run_block(config, g, opts, first, last);
  });

  EnsembleSeries out;
  out.times = detail::uniform_times(config.duration, opts.samples);
  out.time_step = g.dt;
  const auto ns = static_cast<std::size_t>(opts.samples);
  std::vector<std::array<double, 3>> sum(ns, {0.0, 0.0, 0.0}), sum_sq = sum;
  for (const auto& b : partial) {
    out.ensemble_size += b.count;
    out.diverged += b.diverged;
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t k = 0; k < 3; ++k) {
        sum[s][k] += b.sum[s][k];
        sum_sq[s][k] += b.sum_sq[s][k];
      }
    }
  }
  if (static_cast<double>(out.diverged) > 1e-3 * static_cast<double>(opts.ensemble_size)) {
    throw NoiseTooStrongError("sde: " + std::to_string(out.diverged) + " of " + std::to_string(opts.ensemble_size) +
                              " trajectories diverged");
  }
  const auto n = static_cast<double>(out.ensemble_size);
  out.mean.resize(ns);
  out.std_error.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double m = sum[s][k] / n;
      const double var = std::max(0.0, (sum_sq[s][k] - n * m * m) / (n - 1.0));
      out.mean[s][k] = m;
      out.std_error[s][k] = std::sqrt(var / n);
    }
  }
  return out;
}

/// A deterministic trajectory viewed as an ensemble with zero spread.
inline EnsembleSeries series_from_trajectory(const Trajectory& traj) {
  EnsembleSeries out;
  out.times = traj.times;
  out.ensemble_size = 1;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const PhysicalState p = traj.physical_at(i);
    out.mean.push_back({p.energy, p.lagrangian_mean, p.correlation});
    out.std_error.push_back({0.0, 0.0, 0.0});
  }
  return out;
}

struct MomentComparison {
  std::vector<std::array<double, 3>> z;  ///< per sample, channels (E, L, C)
  std::array<double, 3> max_z{};
  std::array<double, 3> fraction_above_3{};
  double overall_max_z = 0.0;
  double overall_fraction_above_3 = 0.0;
};

/// z = |mean - ode| / standard error per time and channel. Points with zero
/// standard error score 0 when they agree to rounding and +inf otherwise.
inline MomentComparison compare_moments(const EnsembleSeries& sde, const Trajectory& ode) {
  if (sde.times.size() != ode.times.size()) throw AlignmentError("compare_moments: sample counts differ");
  for (std::size_t i = 0; i < sde.times.size(); ++i) {
    if (std::abs(sde.times[i] - ode.times[i]) > 1e-9 * std::max(1.0, std::abs(ode.times[i]))) {
      throw AlignmentError("compare_moments: sample times differ at index " + std::to_string(i));
    }
  }
  MomentComparison out;
  std::array<long, 3> above{0, 0, 0};
  long total_above = 0;
  for (std::size_t i = 0; i < sde.times.size(); ++i) {
    const PhysicalState p = ode.physical_at(i);
    const std::array<double, 3> ref{p.energy, p.lagrangian_mean, p.correlation};
    std::array<double, 3> z{};
    for (std::size_t k = 0; k < 3; ++k) {
      const double diff = std::abs(sde.mean[i][k] - ref[k]);
      const double se = sde.std_error[i][k];
      const bool same = diff <= 1e-12 * std::max(1.0, std::abs(ref[k]));
      z[k] = se > 0.0 ? diff / se : (same ? 0.0 : std::numeric_limits<double>::infinity());
      out.max_z[k] = std::max(out.max_z[k], z[k]);
      if (z[k] > 3.0) {
        ++above[k];
        ++total_above;
      }
    }
    out.z.push_back(z);
  }
  const auto n = static_cast<double>(sde.times.size());
  for (std::size_t k = 0; k < 3; ++k) {
    out.fraction_above_3[k] = static_cast<double>(above[k]) / n;
    out.overall_max_z = std::max(out.overall_max_z, out.max_z[k]);
  }
  out.overall_fraction_above_3 = static_cast<double>(total_above) / (3.0 * n);
  return out;
}

/// Columns: t, E_mc, L_mc, C_mc, se_E, se_L, se_C, E_ode, L_ode, C_ode.
inline void write_comparison_csv(std::ostream& os, const EnsembleSeries& sde, const Trajectory& ode) {
  if (sde.times.size() != ode.times.size()) throw AlignmentError("write_comparison_csv: sample counts differ");
  os << "t,E_mc,L_mc,C_mc,se_E,se_L,se_C,E_ode,L_ode,C_ode\n" << std::setprecision(12);
  for (std::size_t i = 0; i < sde.times.size(); ++i) {
    const PhysicalState p = ode.physical_at(i);
    os << sde.times[i] << ',' << sde.mean[i][0] << ',' << sde.mean[i][1] << ',' << sde.mean[i][2] << ','
       << sde.std_error[i][0] << ',' << sde.std_error[i][1] << ',' << sde.std_error[i][2] << ',' << p.energy << ','
       << p.lagrangian_mean << ',' << p.correlation << '\n';
  }
}

/// Deterministic moment trajectory on the same output times as simulate_ensemble.
inline Trajectory moment_reference(const EngineConfig& config, const ControlProfile& control, const SdeOptions& opts,
                                   IntegrationOptions io = {}) {
  io.dense_output_samples = opts.samples;
  return integrate(config, control, io);
}

}  // namespace otto
