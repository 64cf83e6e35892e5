// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "mlilu/discretize.hpp"
#include "mlilu/error.hpp"
#include "mlilu/krylov.hpp"
#include "mlilu/nonlinear.hpp"
#include "mlilu/parallel.hpp"
#include "mlilu/partition.hpp"
#include "mlilu/precond/multilevel.hpp"

namespace mlilu {

enum class CaseKind { Stokes, Cavity };

struct RunConfig {
  std::string name = "case";
  CaseKind problem = CaseKind::Stokes;
  int dim = 3;
  int nx = 16;
  std::string forcing = "random";  // Stokes only: "random" or "zero"
  std::uint64_t seed = 42;
  double lid_velocity = 1.0;       // cavity only
  double reynolds = 500.0;         // cavity: last Re of the continuation
  double re_start = 100.0;
  double re_step = 100.0;
  std::string partition = "parallelepiped";
  int subdomain_size = 8;
  int levels = 2;
  bool levels_rule = false;        // "log2(nx)-2"
  int coarsening_factor = 2;
  std::vector<int> retain{1};      // 0 = all
  GmresConfig gmres;
  NewtonConfig newton;
  int threads = 0;                 // 0 = available cores
  bool write_history = true;
  bool dump_matrices = false;

  int effective_levels() const {
    if (!levels_rule) return levels;
    return std::max(0, static_cast<int>(std::lround(std::log2(static_cast<double>(nx)))) - 2);
  }
  int effective_threads() const { return threads > 0 ? threads : default_thread_count(); }
};

inline PartitionKind parse_partition_kind(const std::string& s) {
  if (s == "parallelepiped") return PartitionKind::Parallelepiped;
  if (s == "skew") return PartitionKind::Skew;
  if (s == "cartesian") return PartitionKind::Cartesian;
  throw ConfigError("unknown partition '" + s + "'");
}

// Every problem with the configuration, empty when it is usable.
inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> e;
  if (c.dim != 2 && c.dim != 3) e.push_back("dim must be 2 or 3");
  if (c.nx < 2) e.push_back("nx must be at least 2");
  PartitionKind kind = PartitionKind::Cartesian;
  bool kind_ok = true;
  try {
    kind = parse_partition_kind(c.partition);
  } catch (const ConfigError& ex) {
    e.push_back(ex.what());
    kind_ok = false;
  }
  if (kind_ok && c.dim == 2 && kind == PartitionKind::Parallelepiped)
    e.push_back("parallelepiped partitioning needs dim 3");
  if (kind_ok && c.dim == 3 && kind == PartitionKind::Skew) e.push_back("skew partitioning needs dim 2");
  const int levels = c.effective_levels();
  if (levels < 0) e.push_back("levels must be non-negative");
  if (c.coarsening_factor < 2) e.push_back("coarsening_factor must be at least 2");
  if (levels > 0) {
    if (c.subdomain_size < 2) e.push_back("subdomain_size must be at least 2");
    else if (c.nx % c.subdomain_size != 0)
      e.push_back("nx=" + std::to_string(c.nx) + " is not a multiple of subdomain_size=" +
                  std::to_string(c.subdomain_size));
    if (kind == PartitionKind::Skew && (c.subdomain_size < 4 || c.subdomain_size % 2 != 0))
      e.push_back("skew partitioning needs an even subdomain_size of at least 4");
  }
  for (int r : c.retain)
    if (r < 0) e.push_back("retain entries must be positive or \"all\"");
  if (c.gmres.restart < 1) e.push_back("gmres.restart must be at least 1");
  if (!(c.gmres.tol > 0.0)) e.push_back("gmres.tol must be positive");
  if (c.gmres.max_iterations < 0) e.push_back("gmres.max_iterations must be non-negative");
  if (!(c.newton.tol > 0.0)) e.push_back("newton.tol must be positive");
  if (c.newton.max_steps < 1) e.push_back("newton.max_steps must be at least 1");
  if (c.forcing != "random" && c.forcing != "zero") e.push_back("forcing must be \"random\" or \"zero\"");
  if (c.problem == CaseKind::Cavity) {
    if (!(c.re_start > 0.0)) e.push_back("re_start must be positive");
    if (!(c.re_step > 0.0)) e.push_back("re_step must be positive");
    if (c.reynolds < c.re_start) e.push_back("reynolds must be at least re_start");
  }
  if (c.threads < 0) e.push_back("threads must be non-negative");
  return e;
}

inline void check_config(const RunConfig& c) {
  auto e = validate(c);
  if (e.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& s : e) msg += "\n  - " + s;
  throw ConfigError(msg);
}

// Parses a JSON object. Unknown keys and type errors are collected and
// reported together with the range checks of validate().
inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::vector<std::string> known = {
      "name",     "problem",        "dim",    "nx",     "forcing",  "seed",    "lid_velocity",
      "reynolds", "re_start",       "re_step", "partition", "subdomain_size", "levels", "coarsening_factor",
      "retain",   "gmres",          "newton", "threads", "write_history", "dump_matrices"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      errors.push_back("unknown key '" + it.key() + "'");

  auto get = [&](const nlohmann::json& obj, const char* key, auto& out, const std::string& prefix = "") {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      errors.push_back("wrong type for '" + prefix + key + "'");
    }
  };
  get(j, "name", c.name);
  if (j.contains("problem")) {
    std::string p;
    get(j, "problem", p);
    if (p == "stokes") c.problem = CaseKind::Stokes;
    else if (p == "cavity") c.problem = CaseKind::Cavity;
    else errors.push_back("problem must be \"stokes\" or \"cavity\"");
  }
  get(j, "dim", c.dim);
  get(j, "nx", c.nx);
  get(j, "forcing", c.forcing);
  get(j, "seed", c.seed);
  get(j, "lid_velocity", c.lid_velocity);
  get(j, "reynolds", c.reynolds);
  get(j, "re_start", c.re_start);
  get(j, "re_step", c.re_step);
  get(j, "partition", c.partition);
  get(j, "subdomain_size", c.subdomain_size);
  if (j.contains("levels")) {
    const auto& l = j.at("levels");
    if (l.is_number_integer()) c.levels = l.get<int>();
    else if (l.is_string() && l.get<std::string>() == "log2(nx)-2") c.levels_rule = true;
    else errors.push_back("levels must be an integer or \"log2(nx)-2\"");
  }
  get(j, "coarsening_factor", c.coarsening_factor);
  if (j.contains("retain")) {
    const auto& r = j.at("retain");
    c.retain.clear();
    auto one = [&](const nlohmann::json& v) {
      if (v.is_number_integer() && v.get<int>() >= 1) c.retain.push_back(v.get<int>());
      else if (v.is_string() && v.get<std::string>() == "all") c.retain.push_back(kRetainAll);
      else errors.push_back("retain entries must be positive integers or \"all\"");
    };
    if (r.is_array()) {
      for (const auto& v : r) one(v);
    } else {
      one(r);
    }
    if (r.is_array() && r.empty()) errors.push_back("retain must not be empty");
  }
  if (j.contains("gmres")) {
    const auto& g = j.at("gmres");
    if (!g.is_object()) errors.push_back("gmres must be an object");
    else {
      for (auto it = g.begin(); it != g.end(); ++it)
        if (it.key() != "restart" && it.key() != "tol" && it.key() != "max_iterations")
          errors.push_back("unknown key 'gmres." + it.key() + "'");
      get(g, "restart", c.gmres.restart, "gmres.");
      get(g, "tol", c.gmres.tol, "gmres.");
      get(g, "max_iterations", c.gmres.max_iterations, "gmres.");
    }
  }
  if (j.contains("newton")) {
    const auto& n = j.at("newton");
    if (!n.is_object()) errors.push_back("newton must be an object");
    else {
      for (auto it = n.begin(); it != n.end(); ++it)
        if (it.key() != "tol" && it.key() != "max_steps" && it.key() != "linearization")
          errors.push_back("unknown key 'newton." + it.key() + "'");
      get(n, "tol", c.newton.tol, "newton.");
      get(n, "max_steps", c.newton.max_steps, "newton.");
      if (n.contains("linearization")) {
        std::string l;
        get(n, "linearization", l, "newton.");
        if (l == "newton") c.newton.linearization = Linearization::Newton;
        else if (l == "picard") c.newton.linearization = Linearization::Picard;
        else errors.push_back("newton.linearization must be \"newton\" or \"picard\"");
      }
    }
  }
  get(j, "threads", c.threads);
  get(j, "write_history", c.write_history);
  get(j, "dump_matrices", c.dump_matrices);
  for (auto& s : validate(c)) errors.push_back(s);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& s : errors) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// Full configuration with every default filled in.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["problem"] = c.problem == CaseKind::Stokes ? "stokes" : "cavity";
  j["dim"] = c.dim;
  j["nx"] = c.nx;
  j["forcing"] = c.forcing;
  j["seed"] = c.seed;
  j["lid_velocity"] = c.lid_velocity;
  j["reynolds"] = c.reynolds;
  j["re_start"] = c.re_start;
  j["re_step"] = c.re_step;
  j["partition"] = c.partition;
  j["subdomain_size"] = c.subdomain_size;
  if (c.levels_rule) j["levels"] = "log2(nx)-2";
  else j["levels"] = c.levels;
  j["coarsening_factor"] = c.coarsening_factor;
  nlohmann::json r = nlohmann::json::array();
  for (int k : c.retain) {
    if (k == kRetainAll) r.push_back("all");
    else r.push_back(k);
  }
  j["retain"] = r;
  j["gmres"] = {{"restart", c.gmres.restart}, {"tol", c.gmres.tol}, {"max_iterations", c.gmres.max_iterations}};
  j["newton"] = {{"tol", c.newton.tol},
                 {"max_steps", c.newton.max_steps},
                 {"linearization", c.newton.linearization == Linearization::Newton ? "newton" : "picard"}};
  j["threads"] = c.threads;
  j["write_history"] = c.write_history;
  j["dump_matrices"] = c.dump_matrices;
  return j;
}

// Named desk-scale configurations. Budgets are single-core wall times.
struct Preset {
  std::string name;
  std::string description;
  std::string budget;
  RunConfig config;
};

inline std::vector<Preset> presets() {
  std::vector<Preset> out;
  auto stokes3d = [](std::string name, int nx) {
    RunConfig c;
    c.name = std::move(name);
    c.nx = nx;
    return c;
  };
  {
    RunConfig c = stokes3d("stokes16", 16);
    out.push_back({c.name, "3D Stokes 16^3, s=8, L=2, retain 1", "10 s", c});
  }
  {
    RunConfig c = stokes3d("stokes32", 32);
    out.push_back({c.name, "3D Stokes 32^3, s=8, L=2, retain 1", "2 min", c});
  }
  {
    RunConfig c = stokes3d("stokes32-levels", 32);
    c.levels_rule = true;
    out.push_back({c.name, "3D Stokes 32^3, L=log2(nx)-2, retain 1", "2 min", c});
  }
  {
    RunConfig c = stokes3d("stokes32-retain4", 32);
    c.levels_rule = true;
    c.retain = {1, 1, 4};
    out.push_back({c.name, "3D Stokes 32^3, L=log2(nx)-2, retain 4 after two levels", "2 min", c});
  }
  {
    RunConfig c;
    c.name = "stokes2d";
    c.dim = 2;
    c.nx = 64;
    c.partition = "skew";
    c.subdomain_size = 8;
    c.levels = 3;
    out.push_back({c.name, "2D Stokes 64^2, skew s=8, L=3, retain 1", "5 s", c});
  }
  {
    RunConfig c;
    c.name = "exact2d";
    c.dim = 2;
    c.nx = 16;
    c.partition = "skew";
    c.subdomain_size = 4;
    c.levels = 2;
    c.retain = {kRetainAll};
    c.gmres.tol = 1e-10;
    out.push_back({c.name, "2D Stokes 16^2, retain all (exact factorization)", "1 s", c});
  }
  {
    RunConfig c = stokes3d("cavity500", 16);
    c.problem = CaseKind::Cavity;
    c.reynolds = 500;
    out.push_back({c.name, "3D lid-driven cavity 16^3, continuation to Re=500, L=2", "3 min", c});
  }
  {
    RunConfig c = stokes3d("cavity2000", 16);
    c.problem = CaseKind::Cavity;
    c.reynolds = 2000;
    out.push_back({c.name, "3D lid-driven cavity 16^3, continuation to Re=2000, L=2", "7 min", c});
  }
  return out;
}

inline RunConfig preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p.config;
  std::string msg = "unknown preset '" + name + "'; available:";
  for (const auto& p : presets()) msg += " " + p.name;
  throw ConfigError(msg);
}

// Named groups of presets for the bench subcommand; a single preset name is
// a suite of one.
inline std::vector<std::string> suite_names() { return {"quick", "fig5", "fig5-levels", "cavity"}; }

inline std::vector<RunConfig> suite(const std::string& name) {
  auto pick = [](std::initializer_list<const char*> names) {
    std::vector<RunConfig> out;
    for (const char* n : names) out.push_back(preset(n));
    return out;
  };
  if (name == "quick") return pick({"exact2d", "stokes2d", "stokes16"});
  if (name == "fig5") return pick({"stokes16", "stokes32"});
  if (name == "fig5-levels") {
    auto out = pick({"stokes16", "stokes32-levels", "stokes32-retain4"});
    out[0].name = "stokes16-levels";
    out[0].levels_rule = true;
    return out;
  }
  if (name == "cavity") return pick({"cavity500"});
  return {preset(name)};
}

// Deterministic outcome of one case: no timings or thread counts, so that
// repeated runs and runs with other thread counts give identical rows.
struct ReportRow {
  std::string name;
  std::string problem;
  int dim = 0;
  int nx = 0;
  std::string partition;
  int subdomain_size = 0;
  int levels = 0;
  std::string retain;
  double reynolds = 0.0;
  int unknowns = 0;
  int iterations = 0;        // Stokes: GMRES; cavity: first Newton step at the last Re
  int newton_steps = 0;
  bool converged = false;
  double final_residual = 0.0;
  std::string reduced_dims;  // S_sigma_sigma size per level, ';'-separated

  bool operator==(const ReportRow&) const = default;
};

inline const char* report_header() {
  return "name,problem,dim,nx,partition,subdomain_size,levels,retain,reynolds,unknowns,iterations,newton_steps,"
         "converged,final_residual,reduced_dims";
}

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string retain_string(const std::vector<int>& r) {
  std::string s;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (k) s += ';';
    s += r[k] == kRetainAll ? "all" : std::to_string(r[k]);
  }
  return s;
}

}  // namespace detail

inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows, bool header = true) {
  if (header) os << report_header() << '\n';
  for (const auto& r : rows)
    os << r.name << ',' << r.problem << ',' << r.dim << ',' << r.nx << ',' << r.partition << ',' << r.subdomain_size
       << ',' << r.levels << ',' << r.retain << ',' << detail::format_double(r.reynolds) << ',' << r.unknowns << ','
       << r.iterations << ',' << r.newton_steps << ',' << (r.converged ? 1 : 0) << ','
       << detail::format_double(r.final_residual) << ',' << r.reduced_dims << '\n';
}

// Reads rows written by write_report. Repeated header lines (from appended
// reports) are skipped.
inline std::vector<ReportRow> parse_report(std::istream& is) {
  std::vector<ReportRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == report_header()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 15) throw Error("report line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                                    " fields, expected 15");
    ReportRow r;
    try {
      r.name = f[0];
      r.problem = f[1];
      r.dim = std::stoi(f[2]);
      r.nx = std::stoi(f[3]);
      r.partition = f[4];
      r.subdomain_size = std::stoi(f[5]);
      r.levels = std::stoi(f[6]);
      r.retain = f[7];
      r.reynolds = std::stod(f[8]);
      r.unknowns = std::stoi(f[9]);
      r.iterations = std::stoi(f[10]);
      r.newton_steps = std::stoi(f[11]);
      r.converged = f[12] == "1";
      r.final_residual = std::stod(f[13]);
      r.reduced_dims = f[14];
    } catch (const std::logic_error&) {
      throw Error("report line " + std::to_string(lineno) + " is malformed");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

struct Timing {
  std::string name;
  int threads = 1;
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
  double total_seconds = 0.0;
  long peak_rss_kb = 0;  // indicative
};

inline void write_timings(std::ostream& os, const std::vector<Timing>& rows, bool header = true) {
  if (header) os << "name,threads,build_seconds,solve_seconds,total_seconds,peak_rss_kb_indicative\n";
  for (const auto& t : rows)
    os << t.name << ',' << t.threads << ',' << t.build_seconds << ',' << t.solve_seconds << ',' << t.total_seconds
       << ',' << t.peak_rss_kb << '\n';
}

inline long peak_rss_kb() {
  rusage u{};
  if (getrusage(RUSAGE_SELF, &u) != 0) return 0;
  return u.ru_maxrss;  // kilobytes on Linux
}

struct CaseResult {
  ReportRow row;
  Timing timing;
  SolveStats last_solve;          // Stokes solve, or first Newton step at the last Re
  ContinuationRun continuation;   // cavity only
  std::string diagnostics;        // preconditioner diagnostics CSV of the last build
  std::vector<double> solution;
  std::string failure;            // empty when the case converged
};

inline ProblemSpec problem_spec(const RunConfig& c) {
  ProblemSpec s;
  s.grid = c.dim == 2 ? StaggeredGrid::square(c.nx) : StaggeredGrid::cube(c.nx);
  s.seed = c.seed;
  if (c.problem == CaseKind::Stokes) {
    s.kind = ProblemKind::Stokes;
    s.forcing = c.forcing == "random" ? Forcing::Random : Forcing::Zero;
    s.lid_velocity = 0.0;
  } else {
    s.kind = ProblemKind::NavierStokes;
    s.forcing = Forcing::Zero;
    s.lid_velocity = c.lid_velocity;
    s.reynolds = c.reynolds;
  }
  return s;
}

inline PrecondPolicy precond_policy(const RunConfig& c) {
  PrecondPolicy p;
  p.partition = parse_partition_kind(c.partition);
  p.subdomain_size = c.subdomain_size;
  p.levels = c.effective_levels();
  p.coarsening_factor = c.coarsening_factor;
  p.retain = c.retain;
  p.threads = c.effective_threads();
  return p;
}

namespace detail {

inline std::string reduced_dims(const MultilevelPreconditioner& m) {
  std::string s;
  for (const auto& lev : m.levels()) {
    if (!s.empty()) s += ';';
    s += std::to_string(lev.transformed.reduced.rows());
  }
  return s;
}

}  // namespace detail

// A flux-scaled system read from MatrixMarket, replacing the assembled one
// of a Stokes case. The grid of the configuration still drives partitioning.
struct ImportedSystem {
  SparseMatrix matrix;
  std::vector<double> rhs;  // scaled; empty = the configuration's right-hand side
};

// Called with the system and the preconditioner a case ends with.
using PrecondInspector = std::function<void(const SaddleMatrix&, const MultilevelPreconditioner&)>;

// Assemble, partition, build and solve one case. Stokes: one preconditioned
// GMRES solve of the flux-scaled system. Cavity: Stokes start followed by
// continuation in Re. Non-convergence is reported in the row, not thrown.
inline CaseResult run_case(const RunConfig& cfg, const std::filesystem::path& dump_dir = {},
                           const ImportedSystem* imported = nullptr, const PrecondInspector& inspect = {}) {
  check_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemSpec spec = problem_spec(cfg);
  const PrecondPolicy policy = precond_policy(cfg);
  CaseResult res;
  auto& row = res.row;
  row.name = cfg.name;
  row.problem = cfg.problem == CaseKind::Stokes ? "stokes" : "cavity";
  row.dim = cfg.dim;
  row.nx = cfg.nx;
  row.partition = cfg.partition;
  row.subdomain_size = cfg.subdomain_size;
  row.levels = policy.levels;
  row.retain = detail::retain_string(cfg.retain);
  row.reynolds = cfg.problem == CaseKind::Stokes ? 0.0 : cfg.reynolds;
  row.unknowns = spec.grid.num_unknowns();
  res.timing.name = cfg.name;
  res.timing.threads = policy.threads;
  auto finish_diagnostics = [&](const SaddleMatrix& sys, const MultilevelPreconditioner& m) {
    const SparseMatrix& a = sys.matrix;
    if (inspect) inspect(sys, m);
    row.reduced_dims = detail::reduced_dims(m);
    std::ostringstream d;
    write_precond_diagnostics(d, m);
    res.diagnostics = d.str();
    if (cfg.dump_matrices && !dump_dir.empty()) {
      std::filesystem::create_directories(dump_dir);
      write_matrix_market((dump_dir / (cfg.name + "_matrix.mtx")).string(), a);
      dump_reduced_matrices(dump_dir / (cfg.name + "_reduced"), m);
    }
  };

  if (cfg.problem == CaseKind::Stokes) {
    const auto tb = std::chrono::steady_clock::now();
    SaddleMatrix a = assemble_stokes(spec);
    auto rhs = boundary_rhs(spec);
    std::vector<double> b(rhs.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = a.scaling[i] * rhs[i];
    if (imported) {
      if (imported->matrix.rows() != a.size() || imported->matrix.cols() != a.size())
        throw ConfigError("imported matrix is " + std::to_string(imported->matrix.rows()) + "x" +
                          std::to_string(imported->matrix.cols()) + ", the configured grid has " +
                          std::to_string(a.size()) + " unknowns");
      a.matrix = imported->matrix;
      if (!imported->rhs.empty()) {
        if (static_cast<int>(imported->rhs.size()) != a.size())
          throw ConfigError("imported right-hand side has " + std::to_string(imported->rhs.size()) + " entries, expected " +
                            std::to_string(a.size()));
        b = imported->rhs;
      }
    }
    auto m = build_multilevel(a, spec.grid, policy);
    res.timing.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tb).count();
    auto y = gmres(matrix_operator(a.matrix), [&m](const double* in, double* out) { m.apply(in, out); }, b,
                   cfg.gmres, res.last_solve);
    res.timing.solve_seconds = res.last_solve.solve_seconds;
    row.iterations = res.last_solve.iterations;
    row.converged = res.last_solve.converged;
    row.final_residual = res.last_solve.final_residual;
    if (!row.converged)
      res.failure = "GMRES stopped after " + std::to_string(row.iterations) + " iterations at relative residual " +
                    detail::format_double(row.final_residual);
    finish_diagnostics(a, m);
    res.solution.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) res.solution[i] = a.scaling[i] * y[i];
  } else {
    if (imported) throw ConfigError("an imported matrix can only be solved as a Stokes case");
    ContinuationRun run;
    run.re_start = cfg.re_start;
    run.re_step = cfg.re_step;
    run.re_end = cfg.reynolds;
    try {
      run.state = solve_stokes(spec, cfg.gmres, policy);
      run = run_continuation(spec, run, cfg.newton, cfg.gmres, policy);
    } catch (const NonConvergence& e) {
      run.failure = std::string("Stokes start: ") + e.what();
    }
    res.continuation = run;
    res.failure = run.failure;
    row.converged = run.failure.empty() && !run.steps.empty();
    if (!run.steps.empty()) {
      const auto& last = run.steps.back();
      row.iterations = last.first_step_iterations();
      row.newton_steps = last.newton_steps();
      row.final_residual = last.result.final_residual;
      if (!last.result.steps.empty()) res.last_solve = last.result.steps.front().linear;
      for (const auto& s : run.steps)
        for (const auto& ns : s.result.steps) {
          res.timing.build_seconds += ns.linear.setup_seconds;
          res.timing.solve_seconds += ns.linear.solve_seconds;
        }
      res.solution = run.steps.back().result.x;
    }
    // Diagnostics of the preconditioner for the Jacobian at the last state.
    SaddleMatrix j = assemble_jacobian(spec, run.state.empty() ? std::vector<double>(row.unknowns, 0.0) : run.state);
    auto m = build_multilevel(j, spec.grid, policy);
    finish_diagnostics(j, m);
  }
  res.timing.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.timing.peak_rss_kb = peak_rss_kb();
  return res;
}

// Appends rows to a report file, writing the header only when the file is
// new or empty.
inline void append_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot write " + path.string());
  write_report(f, rows, fresh);
}

// Writes report.csv, timings.csv, config.json and the per-case history,
// continuation and diagnostics files into `dir`. With `append`, report.csv
// and timings.csv are extended instead of replaced.
inline void emit_report(const std::filesystem::path& dir, const std::vector<RunConfig>& cfgs,
                        const std::vector<CaseResult>& results, bool append = false) {
  if (results.empty()) throw Error("emit_report needs at least one row");
  std::filesystem::create_directories(dir);
  std::vector<ReportRow> rows;
  std::vector<Timing> timings;
  for (const auto& r : results) {
    rows.push_back(r.row);
    timings.push_back(r.timing);
  }
  auto open = [&](const std::string& file, bool app = false) {
    std::ofstream f(dir / file, app ? std::ios::app : std::ios::trunc);
    if (!f) throw Error("cannot write " + (dir / file).string());
    return f;
  };
  if (!append) {
    std::filesystem::remove(dir / "report.csv");
    std::filesystem::remove(dir / "timings.csv");
  }
  append_report(dir / "report.csv", rows);
  {
    const bool fresh = !std::filesystem::exists(dir / "timings.csv") || std::filesystem::file_size(dir / "timings.csv") == 0;
    auto f = open("timings.csv", true);
    write_timings(f, timings, fresh);
  }
  {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cfgs) j.push_back(config_to_json(c));
    auto f = open("config.json");
    f << (cfgs.size() == 1 ? j[0] : j).dump(2) << '\n';
  }
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    if (k >= cfgs.size() || cfgs[k].write_history) {
      auto f = open(r.row.name + "_history.csv");
      write_residual_history(f, r.last_solve);
    }
    {
      auto f = open(r.row.name + "_precond.csv");
      f << r.diagnostics;
    }
    if (r.row.problem == "cavity") {
      auto f = open(r.row.name + "_continuation.csv");
      write_continuation_csv(f, r.continuation);
    }
  }
}

}  // namespace mlilu
