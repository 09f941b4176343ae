#pragma once

// Run configuration for the experiment commands: a flat key = value file,
// overridden by command-line flags, validated entry by entry. Every key also
// exists as a flag with '_' spelled '-' (gamma_a <-> --gamma-a).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "otto/dynamics.hpp"
#include "otto/errors.hpp"
#include "otto/ode.hpp"
#include "otto/parallel.hpp"
#include "otto/sde.hpp"
#include "otto/solver.hpp"

namespace otto {

/// start:stop:step, inclusive of stop when it lands on the grid.
struct DurationGrid {
  double start = 2.0;
  double stop = 29.0;
  double step = 1.0;

  std::vector<double> values() const {
    std::vector<double> v;
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= count; ++i) v.push_back(start + step * static_cast<double>(i));
    return v;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ConfigError("expected a finite number, got '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  long v = 0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true/false, got '" + s + "'");
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

struct RunConfig {
  double freq_ratio = 1.0 / 3.0;
  double gamma_a = 0.0;
  double gamma_p = 0.0;
  std::optional<double> duration;
  std::optional<DurationGrid> duration_grid;
  int order = 69;
  SolveOptions solver{};
  IntegrationOptions integration{};
  SdeOptions sde{};
  std::vector<double> epsilons{0.02};
  bool baseline_only = false;
  bool warm_start = true;
  int workers = detail::default_workers();
  std::string out = "otto_out";
  /// verify-sde control source: reference:<n>, file:<path>, or feedback:<epsilon>
  std::string control = "reference:1";
  double search_lo = 1.5;
  double search_hi = 2.5;
  double search_width = 0.01;
  int output_samples = 1001;  ///< rows in control and trajectory CSVs

  struct Key {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::optional<std::string>(const RunConfig&)> get;  ///< nullopt: not set
  };

  static const std::vector<Key>& keys();

  /// Apply one key = value. `where` prefixes any error ("file:line" or "--flag").
  void set(const std::string& key, const std::string& value, const std::string& where) {
    const auto& ks = keys();
    const auto it = std::find_if(ks.begin(), ks.end(), [&](const Key& k) { return k.name == key; });
    if (it == ks.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      it->set(*this, detail::trim(value));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
  }

  /// Flat key = value lines; '#' starts a comment.
  void load(std::istream& is, const std::string& name) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = name + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      set(detail::trim(line.substr(0, eq)), line.substr(eq + 1), where);
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    load(in, path);
  }

  /// Every effective key, one per line, in a fixed order; loading it back
  /// reproduces this configuration.
  std::string canonical() const {
    std::ostringstream os;
    for (const Key& k : keys()) {
      if (const auto v = k.get(*this)) os << k.name << " = " << *v << '\n';
    }
    return os.str();
  }

  /// Copy shared settings into the per-module option structs.
  void sync() {
    solver.workers = workers;
    sde.workers = workers;
    solver.integration.rel_tol = integration.rel_tol;
    solver.integration.abs_tol = integration.abs_tol;
  }

  EngineConfig engine(double t) const { return EngineConfig::make(freq_ratio, {gamma_a, gamma_p}, t); }

  double require_duration() const {
    if (!duration) throw ConfigError("a stroke duration (T) is required");
    return *duration;
  }

  std::vector<double> require_grid() const {
    if (!duration_grid) throw ConfigError("a duration grid (T_grid = start:stop:step) is required");
    return duration_grid->values();
  }
};

inline const std::vector<RunConfig::Key>& RunConfig::keys() {
  using detail::format_double;
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_long;
  using detail::require;
  auto num = [](auto field, auto check, const char* what) {
    return std::function<void(RunConfig&, const std::string&)>([=](RunConfig& c, const std::string& s) {
      const double v = parse_double(s);
      require(check(v), what);
      c.*field = v;
    });
  };
  auto show = [](double RunConfig::*field) {
    return std::function<std::optional<std::string>(const RunConfig&)>(
        [=](const RunConfig& c) { return std::optional<std::string>(format_double(c.*field)); });
  };
  static const std::vector<Key> table = {
      {"ratio", "frequency ratio omega_c/omega_h, in (0, 1)",
       num(&RunConfig::freq_ratio, [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)"),
       show(&RunConfig::freq_ratio)},
      {"gamma_a", "amplitude noise strength omega_h*gamma_a, >= 0",
       num(&RunConfig::gamma_a, [](double v) { return v >= 0.0; }, "must be >= 0"), show(&RunConfig::gamma_a)},
      {"gamma_p", "phase noise strength omega_h*gamma_p, >= 0",
       num(&RunConfig::gamma_p, [](double v) { return v >= 0.0; }, "must be >= 0"), show(&RunConfig::gamma_p)},
      {"T", "stroke duration omega_h*T, > 0",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0, "duration must be positive");
         c.duration = v;
       },
       [](const RunConfig& c) {
         return c.duration ? std::optional<std::string>(format_double(*c.duration)) : std::nullopt;
       }},
      {"T_grid", "duration grid start:stop:step",
       [](RunConfig& c, const std::string& s) {
         std::vector<std::string> parts;
         std::stringstream ss(s);
         std::string p;
         while (std::getline(ss, p, ':')) parts.push_back(detail::trim(p));
         require(parts.size() == 3, "expected start:stop:step");
         DurationGrid g{parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])};
         require(g.start > 0.0, "durations must be positive");
         require(g.step > 0.0, "step must be positive");
         require(g.stop >= g.start, "stop must be >= start");
         require((g.stop - g.start) / g.step < 1e5, "grid too large");
         c.duration_grid = g;
       },
       [](const RunConfig& c) {
         if (!c.duration_grid) return std::optional<std::string>();
         return std::optional<std::string>(format_double(c.duration_grid->start) + ":" +
                                           format_double(c.duration_grid->stop) + ":" +
                                           format_double(c.duration_grid->step));
       }},
      {"N", "collocation order (nodes = N + 1), >= 4",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 4 && v <= 400, "must lie in [4, 400]");
         c.order = static_cast<int>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.order)); }},
      {"seed", "random seed for multistarts and the stochastic ensemble",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 0, "must be >= 0");
         c.solver.seed = static_cast<std::uint64_t>(v);
         c.sde.seed = static_cast<std::uint64_t>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.solver.seed)); }},
      {"out", "output directory",
       [](RunConfig& c, const std::string& s) {
         require(!s.empty(), "must not be empty");
         c.out = s;
       },
       [](const RunConfig& c) { return std::optional<std::string>(c.out); }},
      {"tol_constraint", "NLP constraint tolerance, in (0, 1e-2)",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 1e-2, "must lie in (0, 1e-2)");
         c.solver.constraint_tolerance = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.solver.constraint_tolerance)); }},
      {"tol_optimality", "NLP optimality tolerance, in (0, 1e-2)",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 1e-2, "must lie in (0, 1e-2)");
         c.solver.optimality_tolerance = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.solver.optimality_tolerance)); }},
      {"tol_feasibility", "violation below which a start counts as feasible",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 1.0, "must lie in (0, 1)");
         c.solver.feasibility_threshold = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.solver.feasibility_threshold)); }},
      {"tol_rel", "integrator relative tolerance, in (0, 1)",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 1.0, "must lie in (0, 1)");
         c.integration.rel_tol = v;
         c.solver.integration.rel_tol = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.integration.rel_tol)); }},
      {"tol_abs", "integrator absolute tolerance, in (0, 1)",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 1.0, "must lie in (0, 1)");
         c.integration.abs_tol = v;
         c.solver.integration.abs_tol = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.integration.abs_tol)); }},
      {"multistart", "number of NLP starting points, >= 1",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 1 && v <= 1000, "must lie in [1, 1000]");
         c.solver.multistart_count = static_cast<int>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.solver.multistart_count)); }},
      {"max_iterations", "SQP iterations per start, >= 1",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 1, "must be >= 1");
         c.solver.max_outer_iterations = static_cast<int>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.solver.max_outer_iterations)); }},
      {"penalty_growth", "growth factor of the merit penalty, > 1",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 1.0, "must exceed 1");
         c.solver.penalty_growth = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.solver.penalty_growth)); }},
      {"ensemble", "stochastic ensemble size, >= 2",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 2, "must be >= 2");
         c.sde.ensemble_size = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.sde.ensemble_size)); }},
      {"dt", "stochastic time step, in (0, 0.05)",
       [](RunConfig& c, const std::string& s) {
         const double v = parse_double(s);
         require(v > 0.0 && v < 0.05, "must lie in (0, 0.05)");
         c.sde.time_step = v;
       },
       [](const RunConfig& c) { return std::optional<std::string>(format_double(c.sde.time_step)); }},
      {"sde_samples", "output times of the stochastic comparison, >= 2",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 2 && v <= 100000, "must lie in [2, 100000]");
         c.sde.samples = static_cast<int>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.sde.samples)); }},
      {"scheme", "heun | euler-maruyama | observable-heun | observable-euler",
       [](RunConfig& c, const std::string& s) { c.sde.scheme = sde_scheme_from_string(s); },
       [](const RunConfig& c) { return std::optional<std::string>(to_string(c.sde.scheme)); }},
      {"shared_noise", "drive both noises with one Wiener path (negative control)",
       [](RunConfig& c, const std::string& s) { c.sde.shared_noise = parse_bool(s); },
       [](const RunConfig& c) { return std::optional<std::string>(c.sde.shared_noise ? "true" : "false"); }},
      {"control", "verify-sde control: reference:<n>, file:<csv>, feedback:<epsilon>",
       [](RunConfig& c, const std::string& s) {
         const auto colon = s.find(':');
         require(colon != std::string::npos, "expected reference:<n>, file:<csv> or feedback:<epsilon>");
         const std::string kind = s.substr(0, colon), arg = s.substr(colon + 1);
         if (kind == "reference") {
           require(parse_long(arg) >= 1, "reference index must be >= 1");
         } else if (kind == "feedback") {
           const double e = parse_double(arg);
           require(e > 0.0 && e <= 0.2, "feedback epsilon must lie in (0, 0.2]");
         } else {
           require(kind == "file" && !arg.empty(), "expected reference:<n>, file:<csv> or feedback:<epsilon>");
         }
         c.control = s;
       },
       [](const RunConfig& c) { return std::optional<std::string>(c.control); }},
      {"epsilon", "feedback target(s) for x3, comma separated, each in (0, 0.2]",
       [](RunConfig& c, const std::string& s) {
         std::vector<double> eps;
         std::stringstream ss(s);
         std::string p;
         while (std::getline(ss, p, ',')) {
           const double e = parse_double(detail::trim(p));
           require(e > 0.0 && e <= 0.2, "each epsilon must lie in (0, 0.2]");
           eps.push_back(e);
         }
         require(!eps.empty(), "need at least one epsilon");
         c.epsilons = eps;
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.epsilons.size(); ++i) s += (i ? "," : "") + format_double(c.epsilons[i]);
         return std::optional<std::string>(s);
       }},
      {"baseline_only", "sweep: evaluate the reference profiles only, no NLP",
       [](RunConfig& c, const std::string& s) { c.baseline_only = parse_bool(s); },
       [](const RunConfig& c) { return std::optional<std::string>(c.baseline_only ? "true" : "false"); }},
      {"warm_start", "sweep: solve points in order, seeding each with the previous solution",
       [](RunConfig& c, const std::string& s) { c.warm_start = parse_bool(s); },
       [](const RunConfig& c) { return std::optional<std::string>(c.warm_start ? "true" : "false"); }},
      {"workers", "worker threads, >= 1",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 1 && v <= 1024, "must lie in [1, 1024]");
         c.workers = static_cast<int>(v);
         c.solver.workers = c.workers;
         c.sde.workers = c.workers;
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.workers)); }},
      {"search_lo", "min-time: initial infeasible guess",
       num(&RunConfig::search_lo, [](double v) { return v > 0.0; }, "must be positive"),
       show(&RunConfig::search_lo)},
      {"search_hi", "min-time: initial feasible guess",
       num(&RunConfig::search_hi, [](double v) { return v > 0.0; }, "must be positive"),
       show(&RunConfig::search_hi)},
      {"search_width", "min-time: final bracket width",
       num(&RunConfig::search_width, [](double v) { return v > 0.0; }, "must be positive"),
       show(&RunConfig::search_width)},
      {"output_samples", "rows in control and trajectory CSVs, >= 2",
       [](RunConfig& c, const std::string& s) {
         const long v = parse_long(s);
         require(v >= 2 && v <= 1000000, "must lie in [2, 1e6]");
         c.output_samples = static_cast<int>(v);
       },
       [](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.output_samples)); }},
  };
  return table;
}

}  // namespace otto
