#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "otto/config.hpp"

using namespace otto;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otto_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(OTTO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drop the last CSV column (wall_ms) from every line.
std::string without_last_column(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST(RunConfig, DefaultsAndCanonicalRoundTrip) {
  RunConfig c;
  c.set("ratio", "0.25", "test");
  c.set("gamma_p", "0.01", "test");
  c.set("T_grid", "2:29:1", "test");
  c.set("epsilon", "0.1, 0.05,0.025", "test");
  c.set("shared_noise", "true", "test");
  const std::string text = c.canonical();
  RunConfig d;
  std::istringstream is(text);
  d.load(is, "canonical");
  EXPECT_EQ(d.canonical(), text);
  EXPECT_EQ(d.freq_ratio, 0.25);
  EXPECT_EQ(d.order, 69);
  ASSERT_EQ(d.epsilons.size(), 3u);
  EXPECT_TRUE(d.sde.shared_noise);
  EXPECT_EQ(d.require_grid().size(), 28u);
  EXPECT_THROW(d.require_duration(), ConfigError);
}

TEST(RunConfig, FileDiagnosticsCarryLineNumbers) {
  RunConfig c;
  std::istringstream good("# comment\nratio = 0.3  # trailing\n\nT = 2.5\n");
  c.load(good, "run.cfg");
  EXPECT_EQ(c.freq_ratio, 0.3);
  EXPECT_EQ(*c.duration, 2.5);
  auto message = [](const std::string& text) {
    RunConfig r;
    std::istringstream is(text);
    try {
      r.load(is, "run.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("ratio = 0.3\nT = 0\n").rfind("run.cfg:2: T:", 0), 0u);
  EXPECT_EQ(message("ratio = 1.5\n").rfind("run.cfg:1: ratio:", 0), 0u);
  EXPECT_EQ(message("\n\nbogus = 1\n").rfind("run.cfg:3: unknown key", 0), 0u);
  EXPECT_EQ(message("gamma_a\n").rfind("run.cfg:1:", 0), 0u);
  EXPECT_NE(message("gamma_a = -0.1\n"), "");
  EXPECT_NE(message("N = 3\n"), "");
  EXPECT_NE(message("T_grid = 5:2:1\n"), "");
  EXPECT_NE(message("epsilon = 0.5\n"), "");
  EXPECT_NE(message("scheme = rk4\n"), "");
  EXPECT_NE(message("control = shape:3\n"), "");
  EXPECT_NE(message("tol_constraint = 0.5\n"), "");
  EXPECT_NE(message("dt = 0.1\n"), "");
  EXPECT_EQ(message("control = feedback:0.05\nscheme = observable-euler\n"), "");
}

TEST(RunConfig, SeedDrivesSolverAndEnsemble) {
  RunConfig c;
  c.set("seed", "17", "x");
  EXPECT_EQ(c.solver.seed, 17u);
  EXPECT_EQ(c.sde.seed, 17u);
  c.set("workers", "3", "x");
  c.sync();
  EXPECT_EQ(c.solver.workers, 3);
  EXPECT_EQ(c.sde.workers, 3);
}

TEST(Cli, OptimizeWritesArtifactsAndReportsIdealDelta) {
  const fs::path out = scratch("opt");
  ASSERT_EQ(cli("optimize --gamma-a 0 --gamma-p 0 --T 3 --multistart 2 --out " + out.string()), 0);
  for (const char* f : {"solution.json", "control.csv", "trajectory.csv", "problem.json", "config.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto j = nlohmann::json::parse(slurp(out / "solution.json"));
  EXPECT_EQ(j["status"], "optimal");
  EXPECT_LT(j["resimulated"]["delta"].get<double>(), 1e-3);
  EXPECT_EQ(slurp(out / "control.csv").substr(0, 10), "t,u,omega\n");
}

TEST(Cli, InfeasibleExitCode) {
  const fs::path out = scratch("infeasible");
  EXPECT_EQ(cli("optimize --T 1.0 --gamma-a 0.02 --multistart 2 --out " + out.string()), 3);
  EXPECT_TRUE(fs::exists(out / "solution.json"));
  EXPECT_FALSE(fs::exists(out / "control.csv"));
}

TEST(Cli, ConfigErrorsExitWith2) {
  const fs::path out = scratch("config");
  EXPECT_EQ(cli("optimize --T -1 --out " + out.string()), 2);
  EXPECT_EQ(cli("optimize --out " + out.string()), 2);  // no duration
  EXPECT_EQ(cli("optimize --no-such-flag 1"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("optimize --config " + (out / "missing.cfg").string()), 2);
  EXPECT_EQ(cli("feedback --gamma-a 0.01 --out " + out.string()), 2);
  EXPECT_EQ(cli("sweep --out " + out.string()), 2);  // no grid
}

TEST(Cli, MinTimeWithoutBracketExitsWith4) {
  const fs::path out = scratch("mintime");
  EXPECT_EQ(cli("min-time --gamma-a 0.02 --N 20 --multistart 1 --search-lo 0.1 --search-hi 0.2 --out " + out.string()),
            4);
}

TEST(Cli, SweepIsDeterministicAndReproducibleFromItsConfig) {
  const fs::path a = scratch("sweep_a"), b = scratch("sweep_b"), c = scratch("sweep_c");
  const std::string args = "sweep --gamma-p 0.01 --T-grid 2:6:2 --N 20 --multistart 2 --workers 2 ";
  ASSERT_EQ(cli(args + "--out " + a.string()), 0);
  ASSERT_EQ(cli(args + "--out " + b.string()), 0);
  const std::string sa = slurp(a / "sweep.csv");
  EXPECT_EQ(sa.substr(0, sa.find('\n')), "omega_h_T,delta_opt,delta_ref_if_applicable,parasitic_opt,status,wall_ms");
  EXPECT_EQ(without_last_column(sa), without_last_column(slurp(b / "sweep.csv")));
  EXPECT_EQ(slurp(a / "baseline.csv"), slurp(b / "baseline.csv"));
  // T_1 = 5.806 is inserted into the grid and carries the reference value.
  EXPECT_NE(sa.find("5.80596835"), std::string::npos);
  for (const auto& e : fs::directory_iterator(a / "points")) {
    const fs::path other = b / "points" / e.path().filename();
    EXPECT_EQ(slurp(e.path() / "control.csv"), slurp(other / "control.csv"));
    EXPECT_EQ(slurp(e.path() / "trajectory.csv"), slurp(other / "trajectory.csv"));
  }
  // Re-run from the echoed configuration; only the output directory differs.
  ASSERT_EQ(cli("sweep --config " + (a / "config.txt").string() + " --out " + c.string()), 0);
  EXPECT_EQ(without_last_column(slurp(c / "sweep.csv")), without_last_column(sa));
}

TEST(Cli, BaselineOnlySkipsTheSolver) {
  const fs::path out = scratch("baseline");
  ASSERT_EQ(cli("sweep --gamma-a 0.02 --T-grid 2:29:1 --baseline-only --out " + out.string()), 0);
  EXPECT_FALSE(fs::exists(out / "points"));
  const std::string csv = slurp(out / "baseline.csv");
  int rows = 0;
  for (char ch : csv) rows += ch == '\n';
  EXPECT_EQ(rows, 6);  // header + n = 1..5
}

TEST(Cli, FeedbackWritesOneDirectoryPerEpsilon) {
  const fs::path out = scratch("feedback");
  ASSERT_EQ(cli("feedback --gamma-p 0.01 --epsilon 0.1,0.05 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "eps_0.100000" / "trajectory.csv"));
  EXPECT_TRUE(fs::exists(out / "eps_0.050000" / "control.csv"));
  EXPECT_NE(slurp(out / "feedback.csv").find("dephasing"), std::string::npos);
}

TEST(Cli, VerifySdeReplaysAnOptimizedControlFile) {
  const fs::path opt = scratch("sde_opt"), out = scratch("sde");
  ASSERT_EQ(cli("optimize --gamma-p 0.01 --T 3 --N 30 --multistart 1 --out " + opt.string()), 0);
  ASSERT_EQ(cli("verify-sde --gamma-p 0.01 --ensemble 2000 --dt 0.002 --control file:" + (opt / "control.csv").string() +
                " --out " + out.string()),
            0);
  const auto j = nlohmann::json::parse(slurp(out / "sde.json"));
  EXPECT_NEAR(j["duration"].get<double>(), 3.0, 1e-12);
  EXPECT_EQ(j["ensemble_size"], 2000);
  EXPECT_TRUE(fs::exists(out / "sde.csv"));
}
