#pragma once

// Time-parametrized control u(t) = omega(t)^2 / omega_h^2 on [0, duration].

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "otto/errors.hpp"
#include "otto/lgl.hpp"

namespace otto {

struct ControlSample {
  double value;
  bool clamped;
};

class ControlProfile {
 public:
  enum class Kind { ClosedForm, PiecewiseConstant, NodalInterpolated, Sampled };

  /// u(t) = 1 / (1 - mu t)^2 on [0, duration].
  struct ClosedForm {
    double mu;
  };
  /// values[i] holds on [switch_times[i-1], switch_times[i]); switch_times has
  /// one fewer entry than values.
  struct PiecewiseConstant {
    std::vector<double> switch_times;
    std::vector<double> values;
  };
  /// Lagrange interpolant through nodal values on an LGL grid mapped from
  /// [-1, 1] onto [0, duration].
  struct NodalInterpolated {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> values;
  };
  /// Linear interpolation between recorded samples. A repeated time marks a
  /// jump; the later value is used from that time on.
  struct Sampled {
    std::vector<double> times;
    std::vector<double> values;
  };

  static ControlProfile closed_form(double mu, double duration) {
    return ControlProfile(ClosedForm{mu}, duration, {});
  }

  static ControlProfile constant(double u, double duration) { return piecewise_constant({}, {u}, duration); }

  static ControlProfile piecewise_constant(std::vector<double> switch_times, std::vector<double> values,
                                           double duration) {
    if (values.size() != switch_times.size() + 1) throw DomainError("piecewise_constant: need one more value than switch");
    if (!std::is_sorted(switch_times.begin(), switch_times.end())) throw DomainError("piecewise_constant: switches unsorted");
    std::vector<double> breaks = switch_times;
    return ControlProfile(PiecewiseConstant{std::move(switch_times), std::move(values)}, duration, std::move(breaks));
  }

  static ControlProfile nodal(const LglGrid& grid, std::vector<double> values, double duration) {
    if (values.size() != grid.nodes.size()) throw DomainError("nodal: value count does not match grid");
    return ControlProfile(NodalInterpolated{grid.nodes, grid.bary_weights, std::move(values)}, duration, {});
  }

  static ControlProfile sampled(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size() || times.size() < 2) throw DomainError("sampled: need matching time/value arrays");
    if (times.front() != 0.0) throw DomainError("sampled: first sample must be at t = 0");
    std::vector<double> breaks;
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (times[i] < times[i - 1]) throw DomainError("sampled: times must be nondecreasing");
      if (times[i] == times[i - 1]) breaks.push_back(times[i]);
    }
    const double duration = times.back();
    return ControlProfile(Sampled{std::move(times), std::move(values)}, duration, std::move(breaks));
  }

  Kind kind() const { return static_cast<Kind>(repr_.index()); }
  double duration() const { return duration_; }
  /// Interior times where u may jump; integrators restart there.
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  /// Unclamped u(t). Throws outside [0, duration].
  double operator()(double t) const {
    const double slack = 1e-12 * std::max(1.0, duration_);
    if (!(t >= -slack && t <= duration_ + slack)) throw DomainError("control evaluated outside [0, duration]");
    t = std::clamp(t, 0.0, duration_);
    return std::visit([&](const auto& r) { return eval(r, t); }, repr_);
  }

  /// u(t) clamped into [lo, hi].
  ControlSample sample(double t, double lo, double hi) const {
    const double v = (*this)(t);
    const double c = std::clamp(v, lo, hi);
    return {c, c != v};
  }

  const auto& repr() const { return repr_; }

  /// Two-column "t,u" CSV on a uniform grid of `samples` points.
  void write_csv(std::ostream& os, int samples) const {
    os << "t,u\n" << std::setprecision(17);
    for (int i = 0; i < samples; ++i) {
      const double t = duration_ * i / (samples - 1);
      os << t << ',' << (*this)(t) << '\n';
    }
  }

  /// Read a "t,u" CSV (header optional) as a Sampled profile.
  static ControlProfile read_csv(std::istream& is) {
    std::vector<double> ts, us;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (lineno == 1 && !line.empty() && (std::isalpha(static_cast<unsigned char>(line[0])) != 0)) continue;
      std::istringstream ls(line);
      double t = 0.0, u = 0.0;
      char comma = 0;
      if (!(ls >> t >> comma >> u) || comma != ',') {
        throw ConfigError("control csv line " + std::to_string(lineno) + ": expected 't,u'");
      }
      ts.push_back(t);
      us.push_back(u);
    }
    return sampled(std::move(ts), std::move(us));
  }

 private:
  using Repr = std::variant<ClosedForm, PiecewiseConstant, NodalInterpolated, Sampled>;

  ControlProfile(Repr r, double duration, std::vector<double> breaks)
      : repr_(std::move(r)), duration_(duration), breakpoints_(std::move(breaks)) {
    if (!(duration_ > 0.0)) throw DomainError("control duration must be positive");
  }

  static double eval(const ClosedForm& c, double t) {
    const double s = 1.0 - c.mu * t;
    return 1.0 / (s * s);
  }
  static double eval(const PiecewiseConstant& c, double t) {
    const auto it = std::upper_bound(c.switch_times.begin(), c.switch_times.end(), t);
    return c.values[static_cast<std::size_t>(it - c.switch_times.begin())];
  }
  double eval(const NodalInterpolated& c, double t) const {
    const double tau = (2.0 * t - duration_) / duration_;
    return barycentric_eval(c.nodes, c.weights, c.values, tau);
  }
  static double eval(const Sampled& c, double t) {
    const auto it = std::upper_bound(c.times.begin(), c.times.end(), t);
    if (it == c.times.end()) return c.values.back();
    const auto hi = static_cast<std::size_t>(it - c.times.begin());
    const std::size_t lo = hi - 1;
    const double span = c.times[hi] - c.times[lo];
    if (span <= 0.0) return c.values[hi];
    const double w = (t - c.times[lo]) / span;
    return (1.0 - w) * c.values[lo] + w * c.values[hi];
  }

  Repr repr_;
  double duration_;
  std::vector<double> breakpoints_;
};

}  // namespace otto
