#pragma once

// Legendre-Gauss-Lobatto grids, spectral differentiation and barycentric
// Lagrange interpolation on [-1, 1].

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "otto/errors.hpp"

namespace otto {

struct LegendreValue {
  double value;
  double derivative;
};

/// L_N(t) and L_N'(t) by the three-term recurrence.
inline LegendreValue legendre_eval(int n, double t) {
  if (n < 0) throw DomainError("legendre_eval: negative order");
  if (n == 0) return {1.0, 0.0};
  double p_prev = 1.0, p = t;
  double d_prev = 0.0, d = 1.0;
  for (int k = 1; k < n; ++k) {
    const double p_next = ((2.0 * k + 1.0) * t * p - k * p_prev) / (k + 1.0);
    const double d_next = d_prev + (2.0 * k + 1.0) * p;
    p_prev = p;
    p = p_next;
    d_prev = d;
    d = d_next;
  }
  return {p, d};
}

/// Endpoints plus the N-1 roots of L_N', ascending. Newton iteration on
/// (1 - t^2) L_N'(t) seeded with Chebyshev-Gauss-Lobatto points.
inline std::vector<double> lgl_nodes(int n) {
  if (n < 1) throw DomainError("lgl_nodes: order must be >= 1");
  std::vector<double> nodes(n + 1);
  nodes[0] = -1.0;
  nodes[n] = 1.0;
  for (int j = 1; j < n; ++j) {
    double t = -std::cos(std::numbers::pi * j / n);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      // (1 - t^2) L_N' = N (L_{N-1} - t L_N); its derivative is -N(N+1) L_N.
      const LegendreValue ln = legendre_eval(n, t);
      const double ln1 = legendre_eval(n - 1, t).value;
      const double g = n * (ln1 - t * ln.value);
      const double dg = -n * (n + 1.0) * ln.value;
      const double step = g / dg;
      t -= step;
      if (std::abs(step) < 1e-16) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      // One final polish; if the step is still large the seed was bad.
      const double res = std::abs(legendre_eval(n, t).derivative);
      if (!(res < 1e-8 * n * n)) throw std::runtime_error("lgl_nodes: Newton iteration did not converge");
    }
    nodes[j] = t;
  }
  // Enforce exact antisymmetry; the iteration converges to each root from a
  // symmetric seed but rounding differs slightly between the two halves.
  for (int j = 0; j <= n / 2; ++j) {
    const double a = 0.5 * (nodes[n - j] - nodes[j]);
    nodes[j] = -a;
    nodes[n - j] = a;
  }
  if (n % 2 == 0) nodes[n / 2] = 0.0;
  return nodes;
}

/// Spectral differentiation matrix on LGL nodes:
///   D_ki = L_N(t_k) / (L_N(t_i) (t_k - t_i)),  k != i
///   D_00 = -N(N+1)/4,  D_NN = N(N+1)/4,  other diagonal entries 0.
inline Eigen::MatrixXd diff_matrix(std::span<const double> nodes) {
  const int n = static_cast<int>(nodes.size()) - 1;
  if (n < 1) throw DomainError("diff_matrix: need at least two nodes");
  std::vector<double> ln(n + 1);
  for (int k = 0; k <= n; ++k) ln[k] = legendre_eval(n, nodes[k]).value;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int k = 0; k <= n; ++k) {
    for (int i = 0; i <= n; ++i) {
      if (k != i) d(k, i) = ln[k] / ln[i] / (nodes[k] - nodes[i]);
    }
  }
  d(0, 0) = -n * (n + 1.0) / 4.0;
  d(n, n) = n * (n + 1.0) / 4.0;
  return d;
}

/// Weights for the second barycentric formula, normalized to unit max norm.
inline std::vector<double> barycentric_weights(std::span<const double> nodes) {
  const std::size_t m = nodes.size();
  std::vector<double> w(m, 1.0);
  for (std::size_t j = 0; j < m; ++j) {
    double prod = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != j) prod *= (nodes[j] - nodes[k]);
    }
    w[j] = 1.0 / prod;
  }
  double scale = 0.0;
  for (double v : w) scale = std::max(scale, std::abs(v));
  for (double& v : w) v /= scale;
  return w;
}

/// Evaluate the interpolant through (nodes, values) at t. Exact at the nodes.
inline double barycentric_eval(std::span<const double> nodes, std::span<const double> weights,
                               std::span<const double> values, double t) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double diff = t - nodes[j];
    if (diff == 0.0) return values[j];
    const double c = weights[j] / diff;
    num += c * values[j];
    den += c;
  }
  return num / den;
}

/// The collocation grid: order N, the N+1 nodes, D, and interpolation weights.
struct LglGrid {
  int order = 0;
  std::vector<double> nodes;
  Eigen::MatrixXd diff;
  std::vector<double> bary_weights;

  explicit LglGrid(int n) : order(n), nodes(lgl_nodes(n)), diff(diff_matrix(nodes)), bary_weights(barycentric_weights(nodes)) {}

  int size() const { return order + 1; }

  /// Node k mapped onto [0, duration].
  double time_at(int k, double duration) const { return 0.5 * duration * (nodes[k] + 1.0); }
};

}  // namespace otto
