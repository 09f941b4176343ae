#pragma once

// Independent reference computations and random generators for the tests.
// Nothing here calls into the library except for the plain value types.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "otto/control.hpp"
#include "otto/dynamics.hpp"

namespace oracle {

using Mat3 = std::array<std::array<long double, 3>, 3>;
using Vec3 = std::array<long double, 3>;

/// The moment equations at fixed u are linear, x' = A x.
inline Mat3 moment_matrix(double u, double ga, double gp) {
  const long double U = u, A = ga, P = gp;
  return {{{-2 * P * U, 2 * P, 2},
           {2 * (A + P) * U * U, -2 * P * U, -2 * U},
           {-U, 1, -4 * P * U}}};
}

inline Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Vec3 mat_vec(const Mat3& a, const Vec3& x) {
  Vec3 y{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) y[i] += a[i][k] * x[k];
  return y;
}

/// exp(A t) by scaling and squaring with a 30-term Taylor series in long double.
inline Mat3 expm(Mat3 a, double t) {
  long double norm = 0;
  for (auto& row : a)
    for (auto& v : row) {
      v *= t;
      norm = std::max(norm, std::fabs(v));
    }
  int squarings = 0;
  while (norm > 0.125L) {
    norm /= 2;
    ++squarings;
  }
  const long double scale = std::ldexp(1.0L, -squarings);
  for (auto& row : a)
    for (auto& v : row) v *= scale;
  Mat3 result{}, term{};
  for (int i = 0; i < 3; ++i) result[i][i] = term[i][i] = 1;
  for (int k = 1; k <= 30; ++k) {
    term = mul(term, a);
    for (auto& row : term)
      for (auto& v : row) v /= k;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) result[i][j] += term[i][j];
  }
  for (int s = 0; s < squarings; ++s) result = mul(result, result);
  return result;
}

/// Exact final state under a piecewise-constant control.
inline Vec3 piecewise_final_state(const std::vector<double>& switches, const std::vector<double>& values,
                                  double duration, double ga, double gp) {
  Vec3 x{1, 1, 0};
  double t0 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t1 = i < switches.size() ? switches[i] : duration;
    x = mat_vec(expm(moment_matrix(values[i], ga, gp), t1 - t0), x);
    t0 = t1;
  }
  return x;
}

/// L_n(t) from the explicit sum
/// 2^-n sum_k (-1)^k C(n,k) C(2n-2k, n) t^(n-2k), in long double.
inline long double legendre_series(int n, long double t) {
  auto binom = [](int a, int b) {
    long double r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  long double s = 0;
  for (int k = 0; 2 * k <= n; ++k) {
    const long double term = binom(n, k) * binom(2 * n - 2 * k, n) * std::pow(t, n - 2 * k);
    s += (k % 2 ? -term : term);
  }
  return std::ldexp(s, -n);
}

inline long double legendre_series_derivative(int n, long double t) {
  auto binom = [](int a, int b) {
    long double r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  long double s = 0;
  for (int k = 0; 2 * k < n; ++k) {
    const int p = n - 2 * k;
    const long double term = binom(n, k) * binom(2 * n - 2 * k, n) * p * std::pow(t, p - 1);
    s += (k % 2 ? -term : term);
  }
  return std::ldexp(s, -n);
}

// Hand-rolled generators.

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

  /// Positive moment state with x1 x2 > x3^2.
  otto::MomentState state() {
    const double x1 = uniform(0.2, 4.0), x2 = uniform(0.2, 4.0);
    const double lim = std::sqrt(x1 * x2);
    return {x1, x2, uniform(-0.9, 0.9) * lim};
  }

  otto::NoiseParams noise(double max_rate = 0.05) { return {uniform(0.0, max_rate), uniform(0.0, max_rate)}; }

  struct Piecewise {
    std::vector<double> switches;
    std::vector<double> values;
    double duration;
    otto::ControlProfile profile() const { return otto::ControlProfile::piecewise_constant(switches, values, duration); }
  };

  /// Random bang-type control in [lo, 1] with up to `max_switches` jumps.
  Piecewise piecewise(double lo, double duration, int max_switches = 6) {
    Piecewise p{{}, {}, duration};
    const int k = integer(0, max_switches);
    for (int i = 0; i < k; ++i) p.switches.push_back(uniform(0.0, duration));
    std::sort(p.switches.begin(), p.switches.end());
    for (int i = 0; i <= k; ++i) p.values.push_back(uniform(lo, 1.0));
    return p;
  }
};

}  // namespace oracle
