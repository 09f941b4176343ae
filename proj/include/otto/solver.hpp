#pragma once

// Multistart SQP solver for the collocation NLP, plus the minimum-time search
// and duration sweeps built on it.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/ode.hpp"
#include "otto/parallel.hpp"
#include "otto/reference.hpp"
#include "otto/transcription.hpp"

namespace otto {

struct SolveOptions {
  int max_outer_iterations = 200;  ///< SQP iterations per start
  double constraint_tolerance = 1e-8;
  double optimality_tolerance = 1e-8;
  int multistart_count = 8;
  double penalty_growth = 10.0;  ///< growth of the l1 merit weight when multipliers outgrow it
  double initial_penalty = 1.0;
  double max_penalty = 1e12;
  double feasibility_threshold = 1e-6;
  std::uint64_t seed = 1;
  /// Return as soon as any start is feasible (used by the minimum-time search).
  bool stop_at_first_feasible = false;
  int workers = 1;
  IntegrationOptions integration{};

  void validate() const {
    auto in_range = [](double v) { return v > 0.0 && v < 1e-2; };
    if (!in_range(constraint_tolerance) || !in_range(optimality_tolerance)) {
      throw DomainError("solver tolerances must lie in (0, 1e-2)");
    }
    if (multistart_count < 1) throw DomainError("multistart_count must be >= 1");
    if (!(penalty_growth > 1.0)) throw DomainError("penalty growth factor must exceed 1");
    if (max_outer_iterations < 1) throw DomainError("iteration limit must be positive");
    integration.validate();
  }
};

enum class SolveStatus { Optimal, FeasibleSuboptimal, Infeasible, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleSuboptimal: return "feasible-suboptimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

inline bool is_feasible(SolveStatus s) { return s == SolveStatus::Optimal || s == SolveStatus::FeasibleSuboptimal; }

/// One local solve from one initial point.
struct LocalSolution {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;
  double objective = std::numeric_limits<double>::infinity();
  double max_violation = std::numeric_limits<double>::infinity();
  double kkt_residual = std::numeric_limits<double>::infinity();
  double final_penalty = 0.0;
  int outer_iterations = 0;
};

struct StartSummary {
  std::string origin;
  SolveStatus status;
  double objective;
  double max_violation;
  double resimulated_delta;
  double resimulated_parasitic;
};

struct SolveReport {
  SolveStatus status = SolveStatus::Infeasible;
  int order = 0;
  EngineConfig config{};
  std::vector<double> node_times;
  std::vector<MomentState> states;
  std::vector<double> controls;
  double objective = std::numeric_limits<double>::quiet_NaN();  ///< x2_N
  double nodal_energy = std::numeric_limits<double>::quiet_NaN();  ///< (x2_N + u_N x1_N)/2
  double nodal_delta = std::numeric_limits<double>::quiet_NaN();
  double max_violation = std::numeric_limits<double>::infinity();
  double kkt_residual = std::numeric_limits<double>::infinity();
  double resimulated_energy = std::numeric_limits<double>::quiet_NaN();
  double resimulated_delta = std::numeric_limits<double>::quiet_NaN();
  double resimulated_parasitic = std::numeric_limits<double>::quiet_NaN();
  long resimulated_clamps = 0;
  double wall_ms = 0.0;
  int best_start = -1;
  int outer_iterations = 0;
  std::vector<StartSummary> starts;
  Eigen::VectorXd z;  ///< raw decision vector of the best start (for warm starts)

  nlohmann::json to_json() const;
};

namespace detail {

/// Row scaling of the collocation constraints and the variable box.
struct ScaledProblem {
  const CollocationProblem& problem;
  Eigen::VectorXd row_scale;
  Eigen::VectorXd lo, hi;

  explicit ScaledProblem(const CollocationProblem& p) : problem(p) {
    const int m = p.nodes();
    row_scale = Eigen::VectorXd::Ones(p.num_constraints());
    for (int k = 0; k < m; ++k) {
      const double mag = p.time_scale() * p.grid().diff.row(k).cwiseAbs().maxCoeff();
      const double s = 1.0 / std::max(1.0, mag);
      for (int r = 0; r < 3; ++r) row_scale[r * m + k] = s;
    }
    lo = p.lower_bounds();
    hi = p.upper_bounds();
  }

  Eigen::VectorXd project(Eigen::VectorXd z) const { return z.cwiseMax(lo).cwiseMin(hi); }
  Eigen::VectorXd residuals(const Eigen::VectorXd& z) const { return problem.residuals(z).cwiseProduct(row_scale); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const { return row_scale.asDiagonal() * problem.jacobian(z); }
};

/// Free controls written as u = mid + half sin(v), so every v keeps u inside
/// its box. y = (all nodal states, v_1 .. v_{N-1}); u_0 and u_N stay fixed.
struct ControlMap {
  const CollocationProblem& problem;
  double mid, half;
  int states, free;

  explicit ControlMap(const CollocationProblem& p)
      : problem(p),
        mid(0.5 * (p.config().u_max() + p.config().u_min())),
        half(0.5 * (p.config().u_max() - p.config().u_min())),
        states(3 * p.nodes()),
        free(p.nodes() - 2) {}

  int size() const { return states + free; }

  Eigen::VectorXd to_y(const Eigen::VectorXd& z) const {
    Eigen::VectorXd y(size());
    y.head(states) = z.head(states);
    for (int k = 1; k <= free; ++k) {
      // Keep starts off the bounds, where dz/dv vanishes.
      const double s = std::clamp((z[problem.u(k)] - mid) / half, -0.995, 0.995);
      y[states + k - 1] = std::asin(s);
    }
    return y;
  }

  Eigen::VectorXd to_z(const Eigen::VectorXd& y) const {
    Eigen::VectorXd z(problem.num_variables());
    z.head(states) = y.head(states);
    z[problem.u(0)] = problem.config().u_max();
    z[problem.u(problem.order())] = problem.config().u_min();
    for (int k = 1; k <= free; ++k) {
      z[problem.u(k)] = std::clamp(mid + half * std::sin(y[states + k - 1]), problem.config().u_min(), 1.0);
    }
    return z;
  }

  /// du_k/dv_k for the free controls.
  Eigen::VectorXd slopes(const Eigen::VectorXd& y) const {
    return (half * y.tail(free).array().cos()).matrix();
  }

  /// Columns of a z-space matrix (rows x num_variables) pulled back to y.
  Eigen::MatrixXd pull_columns(const Eigen::MatrixXd& a, const Eigen::VectorXd& slope) const {
    Eigen::MatrixXd out(a.rows(), size());
    out.leftCols(states) = a.leftCols(states);
    for (int k = 1; k <= free; ++k) out.col(states + k - 1) = a.col(problem.u(k)) * slope[k - 1];
    return out;
  }
};

}  // namespace detail

namespace detail {

/// min g^T p + p^T B p / 2 subject to |p| <= radius, with B given by its
/// eigendecomposition (eigenvalues ascending).
inline Eigen::VectorXd trust_region_step(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& eig,
                                         const Eigen::VectorXd& g, double radius) {
  const Eigen::VectorXd& e = eig.eigenvalues();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::ArrayXd a = (v.transpose() * g).array();
  auto step_at = [&](double s) { return Eigen::VectorXd(-(a / (e.array() + s)).matrix()); };
  const double emin = e[0];
  if (emin > 0.0) {
    const Eigen::VectorXd p = step_at(0.0);
    if (p.norm() <= radius) return v * p;
  }
  const double lo = std::max(0.0, -emin);
  const double eps = 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff());
  if (step_at(lo + eps).norm() <= radius) {
    // Hard case: g has no component along the lowest mode; move along it to the boundary.
    Eigen::VectorXd p = Eigen::VectorXd::Zero(e.size());
    for (int i = 0; i < e.size(); ++i) {
      if (e[i] + lo > eps) p[i] = -a[i] / (e[i] + lo);
    }
    p[0] += std::sqrt(std::max(0.0, radius * radius - p.squaredNorm()));
    return v * p;
  }
  double s_lo = lo + eps, s_hi = lo + g.norm() / radius + eps;
  for (int it = 0; it < 200 && s_hi - s_lo > 1e-14 * s_hi; ++it) {
    const double mid = 0.5 * (s_lo + s_hi);
    if (step_at(mid).norm() > radius) s_lo = mid; else s_hi = mid;
  }
  return v * step_at(s_hi);
}

}  // namespace detail

/// Trust-region SQP from a single initial point.
///
/// Each step is split into a normal part, the least-norm move onto the
/// linearized constraints cut to 0.8 of the radius, and a tangential part
/// minimizing the quadratic model of the Lagrangian (exact Hessian) in the
/// null space of the constraint Jacobian. Steps are judged on the l1 merit
/// f + nu |c|_1, with one second-order correction before a rejected step
/// shrinks the radius. Collocation rows are scaled internally; reported
/// violations are unscaled.
inline LocalSolution solve_local(const CollocationProblem& problem, const Eigen::VectorXd& z0,
                                 const SolveOptions& opts) {
  const detail::ScaledProblem sp(problem);
  const detail::ControlMap map(problem);
  const int m = problem.num_constraints();
  const int ny = map.size();
  const int nz = ny - m;
  const Eigen::VectorXd grad_f = problem.objective_gradient();

  Eigen::VectorXd y = map.to_y(sp.project(z0));
  double nu = opts.initial_penalty;
  double radius = 1.0;
  LocalSolution sol;
  double best_violation = std::numeric_limits<double>::infinity();
  int stalled = 0;
  // Best iterate that met the feasibility threshold, kept in case later
  // iterations wander off.
  LocalSolution best_feasible;

  auto merit = [&](const Eigen::VectorXd& yy, Eigen::VectorXd& c) {
    const Eigen::VectorXd zz = map.to_z(yy);
    c = sp.residuals(zz);
    const double f = problem.objective(zz);
    return std::isfinite(f) && c.allFinite() ? f + nu * c.lpNorm<1>() : std::numeric_limits<double>::infinity();
  };

  for (int iter = 0; iter < opts.max_outer_iterations; ++iter) {
    const Eigen::VectorXd z = map.to_z(y);
    const Eigen::VectorXd c = sp.residuals(z);
    const Eigen::MatrixXd jz = sp.jacobian(z);
    const Eigen::VectorXd slope = map.slopes(y);
    const Eigen::MatrixXd jy = map.pull_columns(jz, slope);
    const Eigen::VectorXd gy = map.pull_columns(grad_f.transpose(), slope).transpose();

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(jy.transpose());
    const auto q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    const Eigen::VectorXd rdiag = r.diagonal().cwiseAbs();
    const bool well_posed = rdiag.minCoeff() > 1e-10 * std::max(1.0, rdiag.maxCoeff());
    const double lm = well_posed ? 0.0 : 1e-10 * std::max(1.0, rdiag.maxCoeff() * rdiag.maxCoeff());
    // Least-norm solution of J_y d = -rhs, damped when J_y loses rank.
    auto range_step = [&](const Eigen::VectorXd& rhs) {
      Eigen::VectorXd p(m);
      if (well_posed) {
        p = r.transpose().triangularView<Eigen::Lower>().solve(-rhs);
      } else {
        const Eigen::MatrixXd rtr = r.transpose() * r + lm * Eigen::MatrixXd::Identity(m, m);
        p = r * rtr.llt().solve(-rhs);
      }
      Eigen::VectorXd d = Eigen::VectorXd::Zero(ny);
      d.head(m) = p;
      return Eigen::VectorXd(q * d);
    };
    // Least-squares multipliers for J_y^T lambda = v.
    auto multipliers_for = [&](const Eigen::VectorXd& v) {
      const Eigen::VectorXd qtv = q.transpose() * v;
      if (well_posed) return Eigen::VectorXd(r.triangularView<Eigen::Upper>().solve(qtv.head(m)));
      const Eigen::MatrixXd rrt = r * r.transpose() + lm * Eigen::MatrixXd::Identity(m, m);
      return Eigen::VectorXd(rrt.llt().solve(r * qtv.head(m)));
    };

    // Convergence in the original variables: violation and projected gradient.
    const Eigen::VectorXd lambda = multipliers_for(gy);
    const double viol_raw = problem.residuals(z).lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd gz = grad_f - jz.transpose() * lambda;
    const double kkt = (z - sp.project(z - gz)).lpNorm<Eigen::Infinity>();
    sol.max_violation = viol_raw;
    sol.kkt_residual = kkt;
    sol.z = z;
    sol.multipliers = lambda.cwiseProduct(sp.row_scale);
    if (viol_raw < opts.constraint_tolerance && kkt < opts.optimality_tolerance) {
      sol.status = SolveStatus::Optimal;
      // Polish feasibility with min-norm corrections so objective comparisons
      // across starts are not blurred by residual violation.
      Eigen::VectorXd yp = y + range_step(c);
      for (int k = 0; k < 3; ++k) {
        const Eigen::VectorXd zp = map.to_z(yp);
        const double vp = problem.residuals(zp).lpNorm<Eigen::Infinity>();
        if (!(vp < sol.max_violation)) break;
        sol.z = zp;
        sol.max_violation = vp;
        if (vp < 1e-13) break;
        const Eigen::VectorXd cp = sp.residuals(zp);
        yp += range_step(cp);
      }
      break;
    }
    if (viol_raw < opts.feasibility_threshold &&
        (!std::isfinite(best_feasible.objective) || problem.objective(z) < best_feasible.objective)) {
      best_feasible = sol;
      best_feasible.objective = problem.objective(z);
    }
    if (viol_raw < 0.5 * best_violation) {
      best_violation = viol_raw;
      stalled = 0;
    } else if (best_violation > opts.feasibility_threshold && ++stalled >= 30) {
      sol.status = SolveStatus::Infeasible;
      break;
    }
    ++sol.outer_iterations;

    // Hessian of f - lambda^T c in y.
    const Eigen::MatrixXd hz = -problem.weighted_constraint_hessian(z, sp.row_scale.cwiseProduct(lambda));
    Eigen::MatrixXd w = map.pull_columns(map.pull_columns(hz, slope).transpose(), slope);
    for (int k = 1; k <= map.free; ++k) {
      const int j = map.states + k - 1;
      w(j, j) += gz[problem.u(k)] * (-map.half * std::sin(y[j]));
    }
    Eigen::MatrixXd zb = Eigen::MatrixXd::Identity(ny, ny).rightCols(nz);
    zb.applyOnTheLeft(q);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(zb.transpose() * (w * zb));
    const Eigen::VectorXd dn_full = range_step(c);
    const double c1 = c.lpNorm<1>();

    Eigen::VectorXd c_trial;
    const double phi = merit(y, c_trial);
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::VectorXd dn = dn_full;
      if (dn.norm() > 0.8 * radius) dn *= 0.8 * radius / dn.norm();
      const double tangential_radius = std::sqrt(std::max(0.0, radius * radius - dn.squaredNorm()));
      const Eigen::VectorXd pz = detail::trust_region_step(eig, zb.transpose() * (gy + w * dn), tangential_radius);
      const Eigen::VectorXd d = dn + zb * pz;

      const double model = gy.dot(d) + 0.5 * d.dot(w * d);
      const double lin_decrease = c1 - (c + jy * d).lpNorm<1>();
      if (lin_decrease > 0.0 && model - 0.7 * nu * lin_decrease > 0.0) {
        nu = std::min(opts.max_penalty, std::max(opts.penalty_growth * nu, model / (0.3 * lin_decrease)));
      }
      const double phi0 = c1 == 0.0 ? phi : problem.objective(z) + nu * c1;
      const double pred = -model + nu * lin_decrease;
      if (!(pred > 0.0)) {
        radius *= 0.25;
        continue;
      }
      Eigen::VectorXd y_next = y + d;
      double ratio = (phi0 - merit(y_next, c_trial)) / pred;
      if (ratio < 1e-4 && c_trial.allFinite()) {
        const Eigen::VectorXd y_soc = y_next + range_step(c_trial);
        Eigen::VectorXd c_soc;
        const double ratio_soc = (phi0 - merit(y_soc, c_soc)) / pred;
        if (ratio_soc >= 1e-4) {
          y_next = y_soc;
          ratio = ratio_soc;
        }
      }
      if (ratio >= 1e-4) {
        accepted = true;
        if (ratio > 0.75 && d.norm() > 0.9 * radius) radius = std::min(2.0 * radius, 1e3);
        y = y_next;
      } else {
        radius = 0.25 * d.norm();
      }
      if (radius < 1e-12) break;
    }
    if (!accepted) {
      sol.status = viol_raw > opts.feasibility_threshold ? SolveStatus::Infeasible : SolveStatus::FeasibleSuboptimal;
      break;
    }
  }
  if (sol.status != SolveStatus::Optimal && std::isfinite(best_feasible.objective) &&
      !(sol.max_violation < opts.feasibility_threshold && problem.objective(sol.z) <= best_feasible.objective)) {
    sol = best_feasible;
  }
  if (sol.status != SolveStatus::Optimal) {
    sol.status = sol.max_violation < opts.feasibility_threshold ? SolveStatus::FeasibleSuboptimal
                 : sol.status == SolveStatus::Infeasible         ? SolveStatus::Infeasible
                                                                 : SolveStatus::IterationLimit;
  }
  sol.z = sp.project(sol.z);
  sol.objective = problem.objective(sol.z);
  sol.final_penalty = nu;
  return sol;
}

namespace detail {

/// States at the LGL nodes from integrating `control` under the problem's noise.
inline Eigen::VectorXd fill_from_control(const CollocationProblem& problem, const ControlProfile& control,
                                         const std::vector<double>& nodal_u, const IntegrationOptions& io) {
  const EngineConfig& cfg = problem.config();
  const std::vector<double> times = problem.node_times();
  const double lo = cfg.u_min(), hi = cfg.u_max();
  auto f = [&](double t, const State3& y) {
    return rhs(MomentState::from_array(y), control.sample(t, lo, hi).value, cfg.noise).as_array();
  };
  IntegrationOptions o = io;
  o.rel_tol = std::max(o.rel_tol, 1e-8);
  const auto res = solve_ivp<3>(f, 0.0, cfg.duration, MomentState::initial().as_array(), times, o);
  std::vector<MomentState> states(problem.nodes());
  for (int k = 0; k < problem.nodes(); ++k) {
    states[k] = k < static_cast<int>(res.states.size()) ? MomentState::from_array(res.states[k])
                                                        : MomentState::from_array(res.y_end);
  }
  return problem.pack(states, nodal_u);
}

/// The omega_1 profile stretched onto [0, duration].
inline std::vector<double> rescaled_reference_controls(const CollocationProblem& problem) {
  const EngineConfig& cfg = problem.config();
  const ControlProfile ref = omega_profile(1, cfg.freq_ratio);
  const double scale = ref.duration() / cfg.duration;
  std::vector<double> u(problem.nodes());
  const auto times = problem.node_times();
  for (int k = 0; k < problem.nodes(); ++k) u[k] = std::clamp(ref(times[k] * scale), cfg.u_min(), 1.0);
  u.front() = 1.0;
  u.back() = cfg.u_min();
  return u;
}

}  // namespace detail

struct InitialGuess {
  std::string origin;
  Eigen::VectorXd z;
};

/// Multistart initial points: (0) rescaled omega_1 with integrated states,
/// (1) straight-line states between the ideal endpoints with linear u,
/// (2..) random smooth perturbations of (0).
inline std::vector<InitialGuess> initial_guesses(const CollocationProblem& problem, const SolveOptions& opts) {
  const EngineConfig& cfg = problem.config();
  const int m = problem.nodes();
  const double lo = cfg.u_min();
  std::vector<InitialGuess> out;
  const std::vector<double> ref_u = detail::rescaled_reference_controls(problem);
  auto nodal_profile = [&](const std::vector<double>& u) {
    return interpolate_control(problem.grid(), u, cfg.duration);
  };
  out.push_back({"reference", detail::fill_from_control(problem, nodal_profile(ref_u), ref_u, opts.integration)});
  if (opts.multistart_count == 1) return out;

  {
    std::vector<MomentState> s(m);
    std::vector<double> u(m);
    const double r = cfg.freq_ratio;
    for (int k = 0; k < m; ++k) {
      const double w = 0.5 * (problem.grid().nodes[k] + 1.0);
      s[k] = {1.0 + w * (1.0 / r - 1.0), 1.0 + w * (r - 1.0), 0.0};
      u[k] = 1.0 + w * (lo - 1.0);
    }
    out.push_back({"linear", problem.pack(s, u)});
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int start = 2; start < opts.multistart_count; ++start) {
    // Low-order Legendre perturbation vanishing at both ends.
    std::array<double, 5> coef{};
    for (double& c : coef) c = 0.15 * normal(rng);
    std::vector<double> u(m);
    for (int k = 0; k < m; ++k) {
      const double t = problem.grid().nodes[k];
      double pert = 0.0;
      for (int q = 0; q < 5; ++q) pert += coef[q] * legendre_eval(q + 1, t).value;
      u[k] = std::clamp(ref_u[k] + (1.0 - t * t) * pert, lo, 1.0);
    }
    u.front() = 1.0;
    u.back() = lo;
    out.push_back({"perturbed-" + std::to_string(start - 1),
                   detail::fill_from_control(problem, nodal_profile(u), u, opts.integration)});
  }
  return out;
}

namespace detail {

inline void fill_resimulation(SolveReport& report, const CollocationProblem& problem, const IntegrationOptions& io) {
  const ControlProfile profile = interpolate_control(problem.grid(), report.controls, problem.config().duration);
  IntegrationOptions o = io;
  o.dense_output_samples = 2;
  const Trajectory traj = integrate(problem.config(), profile, o);
  const ControlScore sc = score_final_state(problem.config(), traj.final_state());
  report.resimulated_energy = sc.final.energy;
  report.resimulated_delta = sc.delta;
  report.resimulated_parasitic = sc.parasitic;
  report.resimulated_clamps = traj.clamped_evaluations;
}

}  // namespace detail

/// Multistart solve; best feasible objective wins, ties (1e-9) broken by the
/// smaller re-simulated parasitic energy. Extra warm starts are tried first.
inline SolveReport solve(const CollocationProblem& problem, const SolveOptions& opts,
                         const std::vector<InitialGuess>& warm_starts = {}) {
  opts.validate();
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<InitialGuess> guesses = warm_starts;
  for (auto& g : initial_guesses(problem, opts)) guesses.push_back(std::move(g));

  const int count = static_cast<int>(guesses.size());
  std::vector<LocalSolution> local(count);
  std::vector<SolveReport> candidate(count);
  std::vector<char> ran(count, 0);

  auto run_one = [&](int i) {
    local[i] = solve_local(problem, guesses[i].z, opts);
    ran[i] = 1;
    SolveReport& r = candidate[i];
    r.controls = problem.nodal_controls(local[i].z);
    r.status = local[i].status;
    if (is_feasible(local[i].status)) {
      try {
        detail::fill_resimulation(r, problem, opts.integration);
      } catch (const std::runtime_error&) {
        r.resimulated_parasitic = std::numeric_limits<double>::infinity();
      }
    }
  };

  if (opts.stop_at_first_feasible) {
    for (int i = 0; i < count; ++i) {
      run_one(i);
      if (is_feasible(local[i].status)) break;
    }
  } else {
    detail::parallel_for(count, opts.workers, run_one);
  }

  int best = -1;
  for (int i = 0; i < count; ++i) {
    if (!ran[i]) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const bool fi = is_feasible(local[i].status), fb = is_feasible(local[best].status);
    if (fi != fb) {
      if (fi) best = i;
      continue;
    }
    if (!fi) {
      if (local[i].max_violation < local[best].max_violation) best = i;
      continue;
    }
    const double di = local[i].objective, db = local[best].objective;
    if (std::abs(di - db) <= 1e-9) {
      if (candidate[i].resimulated_parasitic < candidate[best].resimulated_parasitic) best = i;
    } else if (di < db) {
      best = i;
    }
  }

  SolveReport report = candidate[best];
  const LocalSolution& b = local[best];
  report.order = problem.order();
  report.config = problem.config();
  report.node_times = problem.node_times();
  report.states = problem.nodal_states(b.z);
  report.z = b.z;
  report.status = b.status;
  report.objective = b.objective;
  const int n = problem.order();
  report.nodal_energy = 0.5 * (b.z[problem.x2(n)] + b.z[problem.u(n)] * b.z[problem.x1(n)]);
  if (report.nodal_energy > 0.0) report.nodal_delta = delta_measure(report.nodal_energy, problem.config().freq_ratio);
  report.max_violation = b.max_violation;
  report.kkt_residual = b.kkt_residual;
  report.best_start = best;
  for (int i = 0; i < count; ++i) {
    if (!ran[i]) continue;
    report.outer_iterations += local[i].outer_iterations;
    report.starts.push_back({guesses[i].origin, local[i].status, local[i].objective, local[i].max_violation,
                             candidate[i].resimulated_delta, candidate[i].resimulated_parasitic});
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

inline nlohmann::json SolveReport::to_json() const {
  nlohmann::json j;
  j["status"] = to_string(status);
  j["N"] = order;
  j["freq_ratio"] = config.freq_ratio;
  j["gamma_a"] = config.noise.gamma_a;
  j["gamma_p"] = config.noise.gamma_p;
  j["omega_h_T"] = config.duration;
  j["objective_x2N"] = objective;
  j["nodal_energy"] = nodal_energy;
  j["nodal_delta"] = nodal_delta;
  j["max_violation"] = max_violation;
  j["kkt_residual"] = kkt_residual;
  j["resimulated"] = {{"energy", resimulated_energy},
                      {"delta", resimulated_delta},
                      {"parasitic", resimulated_parasitic},
                      {"clamped_evaluations", resimulated_clamps}};
  j["best_start"] = best_start;
  j["wall_ms"] = wall_ms;
  j["iterations"] = outer_iterations;
  j["node_times"] = node_times;
  std::vector<double> a, b, c;
  for (const auto& s : states) {
    a.push_back(s.x1);
    b.push_back(s.x2);
    c.push_back(s.x3);
  }
  j["x1"] = a;
  j["x2"] = b;
  j["x3"] = c;
  j["u"] = controls;
  nlohmann::json starts_j = nlohmann::json::array();
  for (const auto& s : starts) {
    starts_j.push_back({{"origin", s.origin},
                        {"status", to_string(s.status)},
                        {"objective", s.objective},
                        {"max_violation", s.max_violation},
                        {"resimulated_delta", s.resimulated_delta},
                        {"resimulated_parasitic", s.resimulated_parasitic}});
  }
  j["starts"] = starts_j;
  j["metadata"] = {{"solver", "sqp/null-space-newton/l1-merit"},
                   {"interpolation", "barycentric-lagrange-lgl"},
                   {"resimulation", "dormand-prince-5(4)"}};
  return j;
}

/// Warm start for a new duration: nodal values carry over unchanged because the
/// grid is in normalized time.
inline InitialGuess rescaled_warm_start(const SolveReport& previous, std::string origin = "warm") {
  return {std::move(origin), previous.z};
}

struct MinTimeResult {
  double duration = 0.0;
  double infeasible_bound = 0.0;
  double feasible_bound = 0.0;
  struct Probe {
    double duration;
    bool feasible;
    double max_violation;
  };
  std::vector<Probe> history;
};

/// Bisection on the stroke duration between an infeasible and a feasible
/// duration using solve() as the feasibility oracle. If the supplied pair
/// does not bracket, the bracket is widened by scanning outward.
inline MinTimeResult min_feasible_time(const EngineConfig& family, int order, const SolveOptions& opts,
                                       double infeasible_guess, double feasible_guess, double width = 0.01) {
  SolveOptions o = opts;
  o.stop_at_first_feasible = true;
  MinTimeResult out;
  auto probe = [&](double t) {
    const auto rep = solve(transcribe(family.with_duration(t), order), o);
    const bool ok = is_feasible(rep.status);
    out.history.push_back({t, ok, rep.max_violation});
    return ok;
  };
  double lo = infeasible_guess, hi = feasible_guess;
  if (!(lo > 0.0 && hi > lo)) throw SearchError("min_feasible_time: need 0 < infeasible guess < feasible guess");
  int widen = 0;
  while (probe(lo)) {
    hi = lo;
    lo *= 0.8;
    if (++widen > 8) throw SearchError("min_feasible_time: no infeasible duration found");
  }
  widen = 0;
  while (!probe(hi)) {
    lo = hi;
    hi *= 1.25;
    if (++widen > 8) throw SearchError("min_feasible_time: no feasible duration found");
  }
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (probe(mid)) hi = mid; else lo = mid;
  }
  out.infeasible_bound = lo;
  out.feasible_bound = hi;
  out.duration = 0.5 * (lo + hi);
  return out;
}

struct SweepPoint {
  double duration = 0.0;
  SolveReport report;
  bool warm_started = false;
};

/// Solve at every duration (ascending); each point also tries the previous
/// point's solution as a warm start.
inline std::vector<SweepPoint> sweep_duration(const EngineConfig& family, int order, const std::vector<double>& durations,
                                              const SolveOptions& opts) {
  if (!std::is_sorted(durations.begin(), durations.end())) throw DomainError("sweep: durations must be ascending");
  std::vector<SweepPoint> out;
  const SolveReport* prev = nullptr;
  for (double t : durations) {
    std::vector<InitialGuess> warm;
    if (prev && is_feasible(prev->status)) warm.push_back(rescaled_warm_start(*prev));
    SweepPoint pt{t, solve(transcribe(family.with_duration(t), order), opts, warm), !warm.empty()};
    out.push_back(std::move(pt));
    prev = &out.back().report;
  }
  return out;
}

}  // namespace otto
