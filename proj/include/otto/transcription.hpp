#pragma once

// Direct transcription of the expansion-stroke control problem on an LGL grid.
//
// Decision vector z (M = N + 1 nodes):
//   z[k]       = x1_k      z[M + k]  = x2_k
//   z[2M + k]  = x3_k      z[3M + k] = u_k
// Equality constraints c(z) = 0:
//   rows rM + k, r = 0..2 : (2/T) sum_i D_ki x_{r,i} - f_r(x_k, u_k)
//   row 3M     : x1_0 - 1
//   row 3M + 1 : x2_0 - 1
//   row 3M + 2 : x3_0
//   row 3M + 3 : x2_N - u_N x1_N
//   row 3M + 4 : x3_N
// Bounds: u_0 = 1, u_N = freq_ratio^2, freq_ratio^2 <= u_k <= 1; states free.
// Objective: minimize x2_N.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <limits>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"
#include "otto/lgl.hpp"

namespace otto {

class CollocationProblem {
 public:
  CollocationProblem(const EngineConfig& config, int order) : config_(config), grid_(order) {
    config_.validate();
    if (order < 4) throw DomainError("transcribe: N must be >= 4");
  }

  const EngineConfig& config() const { return config_; }
  const LglGrid& grid() const { return grid_; }
  int order() const { return grid_.order; }
  int nodes() const { return grid_.order + 1; }
  int num_variables() const { return 4 * nodes(); }
  int num_constraints() const { return 3 * nodes() + 5; }

  int x1(int k) const { return k; }
  int x2(int k) const { return nodes() + k; }
  int x3(int k) const { return 2 * nodes() + k; }
  int u(int k) const { return 3 * nodes() + k; }
  int boundary_row(int j) const { return 3 * nodes() + j; }

  double time_scale() const { return 2.0 / config_.duration; }

  Eigen::VectorXd lower_bounds() const {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(num_variables(), -std::numeric_limits<double>::infinity());
    for (int k = 0; k < nodes(); ++k) lo[u(k)] = config_.u_min();
    lo[u(0)] = 1.0;
    return lo;
  }
  Eigen::VectorXd upper_bounds() const {
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(num_variables(), std::numeric_limits<double>::infinity());
    for (int k = 0; k < nodes(); ++k) hi[u(k)] = 1.0;
    hi[u(order())] = config_.u_min();
    return hi;
  }

  double objective(const Eigen::VectorXd& z) const { return z[x2(order())]; }
  Eigen::VectorXd objective_gradient() const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(num_variables());
    g[x2(order())] = 1.0;
    return g;
  }

  Eigen::VectorXd residuals(const Eigen::VectorXd& z) const {
    const int m = nodes();
    const double s = time_scale();
    Eigen::VectorXd c(num_constraints());
    const Eigen::VectorXd d1 = grid_.diff * z.segment(0, m);
    const Eigen::VectorXd d2 = grid_.diff * z.segment(m, m);
    const Eigen::VectorXd d3 = grid_.diff * z.segment(2 * m, m);
    for (int k = 0; k < m; ++k) {
      const MomentState f = rhs({z[x1(k)], z[x2(k)], z[x3(k)]}, z[u(k)], config_.noise);
      c[k] = s * d1[k] - f.x1;
      c[m + k] = s * d2[k] - f.x2;
      c[2 * m + k] = s * d3[k] - f.x3;
    }
    const int n = order();
    c[boundary_row(0)] = z[x1(0)] - 1.0;
    c[boundary_row(1)] = z[x2(0)] - 1.0;
    c[boundary_row(2)] = z[x3(0)];
    c[boundary_row(3)] = z[x2(n)] - z[u(n)] * z[x1(n)];
    c[boundary_row(4)] = z[x3(n)];
    return c;
  }

  /// Analytic dc/dz (dense, num_constraints x num_variables).
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
    const int m = nodes();
    const double s = time_scale();
    const double ga = config_.noise.gamma_a, gp = config_.noise.gamma_p, g = ga + gp;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(num_constraints(), num_variables());
    for (int r = 0; r < 3; ++r) j.block(r * m, r * m, m, m) = s * grid_.diff;
    for (int k = 0; k < m; ++k) {
      const double a = z[x1(k)], b = z[x2(k)], c = z[x3(k)], v = z[u(k)];
      // Row for x1 dynamics: f1 = -2 gp v a + 2 gp b + 2 c
      j(k, x1(k)) -= -2.0 * gp * v;
      j(k, x2(k)) -= 2.0 * gp;
      j(k, x3(k)) -= 2.0;
      j(k, u(k)) -= -2.0 * gp * a;
      // f2 = 2 g v^2 a - 2 gp v b - 2 v c
      j(m + k, x1(k)) -= 2.0 * g * v * v;
      j(m + k, x2(k)) -= -2.0 * gp * v;
      j(m + k, x3(k)) -= -2.0 * v;
      j(m + k, u(k)) -= 4.0 * g * v * a - 2.0 * gp * b - 2.0 * c;
      // f3 = -v a + b - 4 gp v c
      j(2 * m + k, x1(k)) -= -v;
      j(2 * m + k, x2(k)) -= 1.0;
      j(2 * m + k, x3(k)) -= -4.0 * gp * v;
      j(2 * m + k, u(k)) -= -a - 4.0 * gp * c;
    }
    const int n = order();
    j(boundary_row(0), x1(0)) = 1.0;
    j(boundary_row(1), x2(0)) = 1.0;
    j(boundary_row(2), x3(0)) = 1.0;
    j(boundary_row(3), x2(n)) = 1.0;
    j(boundary_row(3), u(n)) = -z[x1(n)];
    j(boundary_row(3), x1(n)) = -z[u(n)];
    j(boundary_row(4), x3(n)) = 1.0;
    return j;
  }

  /// Hessian of sum_i w_i c_i(z). Nonzero only in the 4x4 per-node blocks
  /// coupling u_k with the states at node k.
  Eigen::MatrixXd weighted_constraint_hessian(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const {
    const int m = nodes();
    const double ga = config_.noise.gamma_a, gp = config_.noise.gamma_p, g = ga + gp;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(num_variables(), num_variables());
    auto add_sym = [&](int p, int q, double v) {
      h(p, q) += v;
      if (p != q) h(q, p) += v;
    };
    for (int k = 0; k < m; ++k) {
      const double a = z[x1(k)], v = z[u(k)];
      const double w1 = w[k], w2 = w[m + k], w3 = w[2 * m + k];
      // Constraints are -f_r, so every second derivative enters negated.
      add_sym(u(k), x1(k), -(w1 * (-2.0 * gp) + w2 * (4.0 * g * v) + w3 * (-1.0)));
      add_sym(u(k), x2(k), -(w2 * (-2.0 * gp)));
      add_sym(u(k), x3(k), -(w2 * (-2.0) + w3 * (-4.0 * gp)));
      add_sym(u(k), u(k), -(w2 * (4.0 * g * a)));
    }
    const int n = order();
    add_sym(u(n), x1(n), -w[boundary_row(3)]);
    return h;
  }

  /// Pack nodal trajectories into a decision vector.
  Eigen::VectorXd pack(const std::vector<MomentState>& states, const std::vector<double>& controls) const {
    Eigen::VectorXd z(num_variables());
    for (int k = 0; k < nodes(); ++k) {
      z[x1(k)] = states[k].x1;
      z[x2(k)] = states[k].x2;
      z[x3(k)] = states[k].x3;
      z[u(k)] = controls[k];
    }
    return z;
  }

  std::vector<double> nodal_controls(const Eigen::VectorXd& z) const {
    std::vector<double> v(nodes());
    for (int k = 0; k < nodes(); ++k) v[k] = z[u(k)];
    return v;
  }

  std::vector<MomentState> nodal_states(const Eigen::VectorXd& z) const {
    std::vector<MomentState> v(nodes());
    for (int k = 0; k < nodes(); ++k) v[k] = {z[x1(k)], z[x2(k)], z[x3(k)]};
    return v;
  }

  std::vector<double> node_times() const {
    std::vector<double> t(nodes());
    for (int k = 0; k < nodes(); ++k) t[k] = grid_.time_at(k, config_.duration);
    return t;
  }

  /// Grid, D, bounds and layout for debugging and cross-checking.
  nlohmann::json dump() const {
    nlohmann::json j;
    j["order"] = order();
    j["freq_ratio"] = config_.freq_ratio;
    j["gamma_a"] = config_.noise.gamma_a;
    j["gamma_p"] = config_.noise.gamma_p;
    j["duration"] = config_.duration;
    j["nodes"] = grid_.nodes;
    std::vector<std::vector<double>> d(nodes(), std::vector<double>(nodes()));
    for (int k = 0; k < nodes(); ++k)
      for (int i = 0; i < nodes(); ++i) d[k][i] = grid_.diff(k, i);
    j["diff_matrix"] = d;
    const Eigen::VectorXd lo = lower_bounds(), hi = upper_bounds();
    std::vector<double> ul(nodes()), uh(nodes());
    for (int k = 0; k < nodes(); ++k) {
      ul[k] = lo[u(k)];
      uh[k] = hi[u(k)];
    }
    j["control_lower"] = ul;
    j["control_upper"] = uh;
    j["layout"] = {{"x1", {x1(0), x1(order())}},
                   {"x2", {x2(0), x2(order())}},
                   {"x3", {x3(0), x3(order())}},
                   {"u", {u(0), u(order())}},
                   {"num_variables", num_variables()},
                   {"num_constraints", num_constraints()},
                   {"collocation_rows", {0, 3 * nodes() - 1}},
                   {"initial_rows", {boundary_row(0), boundary_row(2)}},
                   {"terminal_rows", {boundary_row(3), boundary_row(4)}}};
    j["objective"] = "x2_N";
    return j;
  }

 private:
  EngineConfig config_;
  LglGrid grid_;
};

inline CollocationProblem transcribe(const EngineConfig& config, int order) { return CollocationProblem(config, order); }

/// Continuous control from nodal values, on [0, duration].
inline ControlProfile interpolate_control(const LglGrid& grid, std::vector<double> nodal_u, double duration) {
  return ControlProfile::nodal(grid, std::move(nodal_u), duration);
}

}  // namespace otto
