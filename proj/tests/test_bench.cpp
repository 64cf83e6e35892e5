#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mlilu/bench.hpp"

using namespace mlilu;
namespace fs = std::filesystem;

namespace {

ReportRow sample_row(const std::string& name, int iterations) {
  ReportRow r;
  r.name = name;
  r.problem = "stokes";
  r.dim = 3;
  r.nx = 16;
  r.partition = "parallelepiped";
  r.subdomain_size = 8;
  r.levels = 2;
  r.retain = "1;all";
  r.reynolds = 0.1 + iterations;
  r.unknowns = 16384;
  r.iterations = iterations;
  r.newton_steps = 1;
  r.converged = true;
  r.final_residual = 1.0 / 3.0 * 1e-8;
  r.reduced_dims = "1234;56";
  return r;
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mlilu_bench_" + name);
  fs::remove_all(d);
  return d;
}

RunConfig small_cavity() {
  RunConfig c = preset("exact2d");
  c.name = "tiny_cavity";
  c.problem = CaseKind::Cavity;
  c.nx = 8;
  c.retain = {1};
  c.gmres.tol = 1e-12;
  c.reynolds = 200;
  return c;
}

}  // namespace

TEST(Config, ListsEveryProblem) {
  auto j = nlohmann::json::parse(R"({"dim": 4, "nx": 10, "subdomain_size": 4, "partition": "hex",
                                     "retain": [0], "gmres": {"tol": -1, "colour": 1}, "typo": true})");
  try {
    config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string m = e.what();
    for (const char* needle : {"dim", "multiple of", "hex", "retain", "gmres.tol", "colour", "typo"})
      EXPECT_NE(m.find(needle), std::string::npos) << needle << " missing from:\n" << m;
  }
}

TEST(Config, TypeErrorsAreReported) {
  auto j = nlohmann::json::parse(R"({"nx": "sixteen", "levels": "many"})");
  try {
    config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string m = e.what();
    EXPECT_NE(m.find("nx"), std::string::npos) << m;
    EXPECT_NE(m.find("levels"), std::string::npos) << m;
  }
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, DefaultsAndRoundTrip) {
  auto c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.gmres.restart, 250);
  EXPECT_DOUBLE_EQ(c.gmres.tol, 1e-8);
  EXPECT_EQ(c.gmres.max_iterations, 10000);
  EXPECT_DOUBLE_EQ(c.newton.tol, 1e-10);
  EXPECT_DOUBLE_EQ(c.re_step, 100.0);
  EXPECT_TRUE(validate(c).empty());

  auto p = preset("stokes32-retain4");
  auto back = config_from_json(config_to_json(p));
  EXPECT_EQ(config_to_json(back), config_to_json(p));
  EXPECT_TRUE(back.levels_rule);
  EXPECT_EQ(back.effective_levels(), 3);
  EXPECT_EQ(back.retain, (std::vector<int>{1, 1, 4}));

  auto j = nlohmann::json::parse(R"({"retain": [1, "all"], "levels": "log2(nx)-2", "nx": 64, "dim": 3})");
  auto r = config_from_json(j);
  EXPECT_EQ(r.retain, (std::vector<int>{1, kRetainAll}));
  EXPECT_EQ(r.effective_levels(), 4);
}

TEST(Config, LoadFromFile) {
  auto d = scratch("cfg");
  fs::create_directories(d);
  {
    std::ofstream f(d / "ok.json");
    f << R"({"name": "x", "dim": 2, "nx": 16, "partition": "skew", "subdomain_size": 4})";
  }
  {
    std::ofstream f(d / "broken.json");
    f << "{ not json";
  }
  EXPECT_EQ(load_config((d / "ok.json").string()).name, "x");
  EXPECT_THROW(load_config((d / "broken.json").string()), ConfigError);
  EXPECT_THROW(load_config((d / "missing.json").string()), ConfigError);
  fs::remove_all(d);
}

TEST(Presets, ResolveAndValidate) {
  for (const auto& p : presets()) {
    EXPECT_TRUE(validate(p.config).empty()) << p.name;
    EXPECT_EQ(p.config.name, p.name);
    EXPECT_FALSE(p.budget.empty());
  }
  for (const auto& s : suite_names()) EXPECT_FALSE(suite(s).empty()) << s;
  EXPECT_EQ(suite("stokes16").size(), 1u);
  EXPECT_THROW(preset("no-such-preset"), ConfigError);
}

TEST(Report, SingleRowIsTwoLines) {
  std::ostringstream os;
  write_report(os, {sample_row("a", 101)});
  std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
  EXPECT_EQ(s.substr(0, s.find('\n')), report_header());
}

TEST(Report, ColumnOrderIsStable) {
  EXPECT_STREQ(report_header(),
               "name,problem,dim,nx,partition,subdomain_size,levels,retain,reynolds,unknowns,iterations,"
               "newton_steps,converged,final_residual,reduced_dims");
}

TEST(Report, ConcatenatedReportsRoundTrip) {
  std::vector<ReportRow> a{sample_row("a", 101), sample_row("b", 143)}, b{sample_row("c", 197)};
  std::ostringstream os;
  write_report(os, a);
  write_report(os, b);
  std::istringstream is(os.str());
  auto back = parse_report(is);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0], a[0]);
  EXPECT_EQ(back[1], a[1]);
  EXPECT_EQ(back[2], b[0]);

  std::istringstream bad("name,problem\n");
  EXPECT_THROW(parse_report(bad), Error);
}

TEST(Report, AppendWritesOneHeader) {
  auto d = scratch("append");
  fs::create_directories(d);
  append_report(d / "r.csv", {sample_row("a", 1)});
  append_report(d / "r.csv", {sample_row("b", 2), sample_row("c", 3)});
  std::ifstream f(d / "r.csv");
  std::stringstream ss;
  ss << f.rdbuf();
  std::string s = ss.str();
  EXPECT_EQ(s.find(report_header()), 0u);
  EXPECT_EQ(s.find(report_header(), 1), std::string::npos);
  std::istringstream is(s);
  EXPECT_EQ(parse_report(is).size(), 3u);
  fs::remove_all(d);
}

TEST(RunCase, ExactPresetAndOutputs) {
  auto cfg = preset("exact2d");
  auto res = run_case(cfg);
  EXPECT_TRUE(res.row.converged);
  EXPECT_EQ(res.row.iterations, 1);
  EXPECT_LE(res.row.final_residual, 1e-10);
  EXPECT_EQ(res.row.unknowns, 3 * 16 * 16);
  EXPECT_EQ(res.row.retain, "all");

  auto d = scratch("exact");
  emit_report(d, {cfg}, {res});
  for (const char* f : {"report.csv", "timings.csv", "config.json", "exact2d_history.csv", "exact2d_precond.csv"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  std::ifstream r(d / "report.csv");
  auto rows = parse_report(r);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], res.row);
  std::ifstream cj(d / "config.json");
  EXPECT_EQ(config_to_json(config_from_json(nlohmann::json::parse(cj))), config_to_json(cfg));
  fs::remove_all(d);
}

TEST(RunCase, ReportIsIndependentOfThreads) {
  auto cfg = preset("stokes2d");
  cfg.threads = 1;
  auto one = run_case(cfg);
  cfg.threads = 4;
  auto four = run_case(cfg);
  EXPECT_TRUE(one.row.converged);
  EXPECT_EQ(one.row, four.row);
  std::ostringstream a, b;
  write_report(a, {one.row});
  write_report(b, {four.row});
  EXPECT_EQ(a.str(), b.str());
}

TEST(RunCase, UnconvergedRowIsReported) {
  auto cfg = preset("stokes2d");
  cfg.gmres.max_iterations = 3;
  auto res = run_case(cfg);
  EXPECT_FALSE(res.row.converged);
  EXPECT_EQ(res.row.iterations, 3);
}

TEST(RunCase, SmallCavity) {
  auto cfg = small_cavity();
  auto res = run_case(cfg);
  ASSERT_TRUE(res.row.converged) << res.failure;
  EXPECT_EQ(res.row.problem, "cavity");
  EXPECT_EQ(res.continuation.steps.size(), 2u);
  EXPECT_DOUBLE_EQ(res.row.reynolds, 200.0);
  EXPECT_EQ(res.row.iterations, res.continuation.steps.back().first_step_iterations());
  auto d = scratch("cavity");
  emit_report(d, {cfg}, {res});
  EXPECT_TRUE(fs::exists(d / "tiny_cavity_continuation.csv"));
  fs::remove_all(d);
}

TEST(RunCase, ImportedSystemMustMatch) {
  auto cfg = preset("exact2d");
  ImportedSystem sys;
  sys.matrix = SparseMatrix::identity(5);
  EXPECT_THROW(run_case(cfg, {}, &sys), ConfigError);
}
