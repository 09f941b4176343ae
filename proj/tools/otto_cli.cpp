// otto_cli: optimize, sweep, min-time, feedback and verify-sde for the
// expansion stroke of a harmonic quantum Otto engine.
//
// Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <list>
#include <sstream>
#include <string>
#include <vector>

#include "otto/otto.hpp"

namespace fs = std::filesystem;
using namespace otto;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kInfeasible = 3;
constexpr int kNumeric = 4;

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> values;
  std::vector<CLI::Option*> options;
};

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

bool is_bool_key(const std::string& k) { return k == "baseline_only" || k == "warm_start" || k == "shared_noise"; }

void register_keys(Command& cmd) {
  const auto& keys = RunConfig::keys();
  cmd.values.resize(keys.size());
  cmd.app->add_option("--config", cmd.config_path, "key = value file; flags override it");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string name = flag_name(keys[i].name);
    if (is_bool_key(keys[i].name))
      cmd.options.push_back(cmd.app->add_flag(name + "{true}", cmd.values[i], keys[i].help));
    else
      cmd.options.push_back(cmd.app->add_option(name, cmd.values[i], keys[i].help));
  }
}

RunConfig build_config(const Command& cmd) {
  RunConfig cfg;
  if (!cmd.config_path.empty()) cfg.load_file(cmd.config_path);
  const auto& keys = RunConfig::keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (cmd.options[i]->count() > 0) cfg.set(keys[i].name, cmd.values[i], flag_name(keys[i].name));
  }
  cfg.sync();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

template <class F>
void write_with(const fs::path& p, F&& f) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  f(os);
}

fs::path prepare_out(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "config.txt", cfg.canonical());
  return dir;
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string duration_dir(double t) {
  std::ostringstream os;
  os << "T_" << std::fixed << std::setprecision(6) << t;
  return os.str();
}

// Control CSV with the actuated (clamped) values and omega/omega_h = sqrt(u).
void write_control_csv(std::ostream& os, const ControlProfile& control, const EngineConfig& engine, int samples) {
  os << "t,u,omega\n" << std::setprecision(17);
  const double lo = engine.u_min(), hi = engine.u_max();
  for (int i = 0; i < samples; ++i) {
    const double t = engine.duration * i / (samples - 1);
    const double u = control.sample(t, lo, hi).value;
    os << t << ',' << u << ',' << std::sqrt(u) << '\n';
  }
}

// solution.json, problem.json and, for feasible results, control.csv and
// trajectory.csv.
void write_solution(const fs::path& dir, const RunConfig& cfg, const CollocationProblem& problem,
                    const SolveReport& report) {
  fs::create_directories(dir);
  write_file(dir / "solution.json", report.to_json().dump(2) + "\n");
  write_file(dir / "problem.json", problem.dump().dump() + "\n");
  if (!is_feasible(report.status)) return;
  const EngineConfig& engine = problem.config();
  const ControlProfile control = interpolate_control(problem.grid(), report.controls, engine.duration);
  write_with(dir / "control.csv", [&](std::ostream& os) { write_control_csv(os, control, engine, cfg.output_samples); });
  IntegrationOptions io = cfg.integration;
  io.dense_output_samples = cfg.output_samples;
  const Trajectory traj = integrate(engine, control, io);
  write_with(dir / "trajectory.csv", [&](std::ostream& os) { traj.write_csv(os); });
}

int status_code(SolveStatus s) {
  if (is_feasible(s)) return kOk;
  return s == SolveStatus::Infeasible ? kInfeasible : kNumeric;
}

int cmd_optimize(const RunConfig& cfg) {
  const double t = cfg.require_duration();
  const fs::path out = prepare_out(cfg, cfg.out);
  const auto problem = transcribe(cfg.engine(t), cfg.order);
  const SolveReport report = solve(problem, cfg.solver);
  write_solution(out, cfg, problem, report);
  std::cout << "status=" << to_string(report.status) << " T=" << num(t) << " delta=" << num(report.resimulated_delta)
            << " nodal_delta=" << num(report.nodal_delta) << " parasitic=" << num(report.resimulated_parasitic)
            << " violation=" << num(report.max_violation) << " wall_ms=" << num(report.wall_ms) << '\n';
  return status_code(report.status);
}

// Grid plus every T_n inside it, ascending, near-duplicates merged.
std::vector<double> sweep_durations(const RunConfig& cfg, std::vector<std::pair<int, double>>& marks) {
  std::vector<double> ts = cfg.require_grid();
  const double lo = cfg.duration_grid->start, hi = cfg.duration_grid->stop;
  for (int n = 1;; ++n) {
    const double tn = t_n(n, cfg.freq_ratio);
    if (tn > hi + 1e-9) break;
    if (tn >= lo - 1e-9) marks.emplace_back(n, tn);
  }
  for (const auto& m : marks) ts.push_back(m.second);
  std::sort(ts.begin(), ts.end());
  std::vector<double> merged;
  for (double t : ts)
    if (merged.empty() || t - merged.back() > 1e-9) merged.push_back(t);
  return merged;
}

int cmd_sweep(const RunConfig& cfg) {
  std::vector<std::pair<int, double>> marks;
  const std::vector<double> ts = sweep_durations(cfg, marks);
  const fs::path out = prepare_out(cfg, cfg.out);
  const EngineConfig family = cfg.engine(1.0);

  std::vector<ControlScore> refs;
  for (const auto& [n, tn] : marks) refs.push_back(score_control(family.with_duration(tn), omega_profile(n, cfg.freq_ratio), cfg.integration));

  std::vector<SweepPoint> points;
  if (!cfg.baseline_only) {
    if (cfg.warm_start) {
      points = sweep_duration(family, cfg.order, ts, cfg.solver);
      for (const auto& p : points) write_solution(out / "points" / duration_dir(p.duration), cfg, transcribe(family.with_duration(p.duration), cfg.order), p.report);
    } else {
      points.resize(ts.size());
      SolveOptions inner = cfg.solver;
      inner.workers = 1;
      detail::parallel_for(static_cast<int>(ts.size()), cfg.workers, [&](int i) {
        const auto problem = transcribe(family.with_duration(ts[i]), cfg.order);
        points[i] = {ts[i], solve(problem, inner), false};
        write_solution(out / "points" / duration_dir(ts[i]), cfg, problem, points[i].report);
      });
    }
    for (const auto& p : points) {
      std::cerr << "T=" << num(p.duration) << " status=" << to_string(p.report.status)
                << " delta=" << num(p.report.resimulated_delta) << '\n';
    }
  }

  auto ref_at = [&](double t) -> const ControlScore* {
    for (std::size_t i = 0; i < marks.size(); ++i)
      if (std::abs(marks[i].second - t) <= 1e-9) return &refs[i];
    return nullptr;
  };
  auto point_at = [&](double t) -> const SweepPoint* {
    for (const auto& p : points)
      if (std::abs(p.duration - t) <= 1e-9) return &p;
    return nullptr;
  };

  if (!cfg.baseline_only) {
    write_with(out / "sweep.csv", [&](std::ostream& os) {
      os << "omega_h_T,delta_opt,delta_ref_if_applicable,parasitic_opt,status,wall_ms\n";
      for (const auto& p : points) {
        const bool ok = is_feasible(p.report.status);
        const ControlScore* r = ref_at(p.duration);
        os << num(p.duration) << ',' << (ok ? num(p.report.resimulated_delta) : "") << ','
           << (r ? num(r->delta) : "") << ',' << (ok ? num(p.report.resimulated_parasitic) : "") << ','
           << to_string(p.report.status) << ',' << num(p.report.wall_ms) << '\n';
      }
    });
  }
  write_with(out / "baseline.csv", [&](std::ostream& os) {
    os << "n,omega_h_T,delta_ref,parasitic_ref,delta_opt,parasitic_opt\n";
    for (std::size_t i = 0; i < marks.size(); ++i) {
      const SweepPoint* p = point_at(marks[i].second);
      const bool ok = p && is_feasible(p->report.status);
      os << marks[i].first << ',' << num(marks[i].second) << ',' << num(refs[i].delta) << ','
         << num(refs[i].parasitic) << ',' << (ok ? num(p->report.resimulated_delta) : "") << ','
         << (ok ? num(p->report.resimulated_parasitic) : "") << '\n';
    }
  });
  std::cout << "points=" << points.size() << " reference_points=" << marks.size() << " out=" << out.string() << '\n';
  return kOk;
}

int cmd_min_time(const RunConfig& cfg) {
  if (!(cfg.search_lo < cfg.search_hi)) throw ConfigError("search_lo must be below search_hi");
  const fs::path out = prepare_out(cfg, cfg.out);
  const MinTimeResult res =
      min_feasible_time(cfg.engine(1.0), cfg.order, cfg.solver, cfg.search_lo, cfg.search_hi, cfg.search_width);
  nlohmann::json j;
  j["min_time"] = res.duration;
  j["infeasible_bound"] = res.infeasible_bound;
  j["feasible_bound"] = res.feasible_bound;
  j["probes"] = res.history.size();
  write_file(out / "min_time.json", j.dump(2) + "\n");
  write_with(out / "history.csv", [&](std::ostream& os) {
    os << "omega_h_T,feasible,max_violation\n";
    for (const auto& p : res.history) os << num(p.duration) << ',' << (p.feasible ? 1 : 0) << ',' << num(p.max_violation) << '\n';
  });
  std::cout << "min_time=" << num(res.duration) << " bracket=[" << num(res.infeasible_bound) << ", "
            << num(res.feasible_bound) << "]\n";
  return kOk;
}

FeedbackMode feedback_mode(const RunConfig& cfg) {
  if (cfg.gamma_a == 0.0 && cfg.gamma_p == 0.0) return FeedbackMode::Noiseless;
  if (cfg.gamma_a == 0.0) return FeedbackMode::Dephasing;
  throw ConfigError("feedback protocols exist only without noise or with pure phase noise (gamma_a = 0)");
}

int cmd_feedback(const RunConfig& cfg) {
  const FeedbackMode mode = feedback_mode(cfg);
  const fs::path out = prepare_out(cfg, cfg.out);
  int code = kOk;
  std::ostringstream table;
  table << "epsilon,mode,bang_duration,total_duration,delta,parasitic,invariant_start,max_invariant_drift,"
           "max_abs_x3_rate,control_monotone,status\n";
  const char* mode_name = mode == FeedbackMode::Noiseless ? "noiseless" : "dephasing";
  for (double eps : cfg.epsilons) {
    std::ostringstream name;
    name << "eps_" << std::fixed << std::setprecision(6) << eps;
    const fs::path dir = out / name.str();
    fs::create_directories(dir);
    try {
      const FeedbackResult r = run_feedback(cfg.engine(1.0), {eps, mode}, cfg.integration);
      write_with(dir / "trajectory.csv", [&](std::ostream& os) { r.trajectory.write_csv(os); });
      write_with(dir / "control.csv", [&](std::ostream& os) {
        write_control_csv(os, r.control, cfg.engine(r.total_duration), cfg.output_samples);
      });
      table << num(eps) << ',' << mode_name << ',' << num(r.bang_duration) << ',' << num(r.total_duration) << ','
            << num(r.score.delta) << ',' << num(r.score.parasitic) << ',' << num(r.invariant_start) << ','
            << num(r.max_invariant_drift) << ',' << num(r.max_abs_x3_rate) << ',' << (r.control_monotone ? 1 : 0)
            << ",ok\n";
      std::cout << "epsilon=" << num(eps) << " T=" << num(r.total_duration) << " delta=" << num(r.score.delta)
                << " drift=" << num(r.max_invariant_drift) << '\n';
    } catch (const ProtocolError& e) {
      table << num(eps) << ',' << mode_name << ",,,,,,,,,protocol-error\n";
      std::cerr << "epsilon=" << num(eps) << ": " << e.what() << '\n';
      code = kNumeric;
    }
  }
  write_file(out / "feedback.csv", table.str());
  return code;
}

struct ControlSource {
  ControlProfile profile;
  double duration;
};

ControlSource control_source(const RunConfig& cfg) {
  const auto colon = cfg.control.find(':');
  const std::string kind = cfg.control.substr(0, colon), arg = cfg.control.substr(colon + 1);
  if (kind == "reference") {
    const int n = static_cast<int>(detail::parse_long(arg));
    const double tn = t_n(n, cfg.freq_ratio);
    if (cfg.duration && *cfg.duration > tn * (1.0 + 1e-12))
      throw ConfigError("T exceeds the reference profile duration " + num(tn));
    return {omega_profile(n, cfg.freq_ratio), cfg.duration.value_or(tn)};
  }
  if (kind == "feedback") {
    const FeedbackResult r = run_feedback(cfg.engine(1.0), {detail::parse_double(arg), feedback_mode(cfg)}, cfg.integration);
    return {r.control, r.total_duration};
  }
  std::ifstream in(arg);
  if (!in) throw ConfigError("cannot open control file " + arg);
  ControlProfile p = ControlProfile::read_csv(in);
  const double d = p.duration();
  return {std::move(p), cfg.duration.value_or(d)};
}

int cmd_verify_sde(const RunConfig& cfg) {
  const ControlSource src = control_source(cfg);
  const EngineConfig engine = cfg.engine(src.duration);
  cfg.sde.validate(engine);
  const fs::path out = prepare_out(cfg, cfg.out);
  const EnsembleSeries series = simulate_ensemble(engine, src.profile, cfg.sde);
  const Trajectory ode = moment_reference(engine, src.profile, cfg.sde, cfg.integration);
  const MomentComparison cmp = compare_moments(series, ode);
  write_with(out / "sde.csv", [&](std::ostream& os) { write_comparison_csv(os, series, ode); });
  const bool agree = cmp.overall_max_z < 4.0 && cmp.overall_fraction_above_3 <= 0.01;
  nlohmann::json j;
  j["control"] = cfg.control;
  j["duration"] = src.duration;
  j["scheme"] = to_string(cfg.sde.scheme);
  j["shared_noise"] = cfg.sde.shared_noise;
  j["ensemble_size"] = series.ensemble_size;
  j["diverged"] = series.diverged;
  j["time_step"] = series.time_step;
  j["samples"] = series.times.size();
  j["max_z"] = {{"E", cmp.max_z[0]}, {"L", cmp.max_z[1]}, {"C", cmp.max_z[2]}};
  j["fraction_above_3"] = {{"E", cmp.fraction_above_3[0]}, {"L", cmp.fraction_above_3[1]}, {"C", cmp.fraction_above_3[2]}};
  j["overall_max_z"] = cmp.overall_max_z;
  j["overall_fraction_above_3"] = cmp.overall_fraction_above_3;
  j["agrees"] = agree;
  write_file(out / "sde.json", j.dump(2) + "\n");
  std::cout << "scheme=" << to_string(cfg.sde.scheme) << " max_z(E,L,C)=" << num(cmp.max_z[0]) << ','
            << num(cmp.max_z[1]) << ',' << num(cmp.max_z[2]) << " above3=" << num(cmp.overall_fraction_above_3)
            << " agrees=" << (agree ? "yes" : "no") << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of the expansion stroke of a noisy harmonic quantum Otto engine"};
  app.require_subcommand(1);
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Entry entries[] = {
      {"optimize", "solve the collocation NLP at one duration (--T)", cmd_optimize},
      {"sweep", "solve over a duration grid (--T-grid) and compare with the reference profiles", cmd_sweep},
      {"min-time", "bisect for the shortest duration with a feasible solution", cmd_min_time},
      {"feedback", "run the adiabatic feedback protocol for each --epsilon", cmd_feedback},
      {"verify-sde", "compare a stochastic ensemble with the moment equations", cmd_verify_sde},
  };
  std::list<Command> commands;
  for (const Entry& e : entries) {
    Command& c = commands.emplace_back();
    c.app = app.add_subcommand(e.name, e.help);
    register_keys(c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  auto it = commands.begin();
  for (const Entry& e : entries) {
    const Command& c = *it++;
    if (!c.app->parsed()) continue;
    try {
      return e.run(build_config(c));
    } catch (const ConfigError& ex) {
      std::cerr << "config error: " << ex.what() << '\n';
      return kConfig;
    } catch (const DomainError& ex) {
      std::cerr << "config error: " << ex.what() << '\n';
      return kConfig;
    } catch (const std::exception& ex) {
      std::cerr << "error: " << ex.what() << '\n';
      return kNumeric;
    }
  }
  return kConfig;
}
