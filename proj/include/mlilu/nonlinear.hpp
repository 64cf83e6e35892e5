// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlilu/discretize.hpp"
#include "mlilu/error.hpp"
#include "mlilu/krylov.hpp"
#include "mlilu/partition.hpp"
#include "mlilu/precond/multilevel.hpp"

namespace mlilu {

enum class Linearization { Newton, Picard };

struct NewtonConfig {
  double tol = 1e-10;  // on |F(x)| / |rhs| in the flux-scaled norm
  int max_steps = 20;
  Linearization linearization = Linearization::Newton;
  int growth_limit = 3;  // consecutive residual increases that abort the run

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("Newton tolerance must be positive");
    if (max_steps < 1) throw ConfigError("Newton needs at least one step");
  }
};

struct NewtonStep {
  double residual = 0.0;  // relative residual before the step
  SolveStats linear;
};

struct NewtonResult {
  std::vector<double> x;
  std::vector<NewtonStep> steps;
  double final_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline double scaled_norm(const std::vector<double>& v, const std::vector<double>& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (d[i] * v[i]) * (d[i] * v[i]);
  return std::sqrt(s);
}

// The range of J is orthogonal to the constant pressure; rounding in the
// continuity residual leaves a component there that GMRES can not remove.
inline void remove_pressure_mean(const SaddleMatrix& j, std::vector<double>& b) {
  double sum = 0.0;
  int np = 0;
  for (int i = 0; i < j.size(); ++i)
    if (j.is_pressure(i)) {
      sum += b[i];
      ++np;
    }
  if (np == 0) return;
  const double mean = sum / np;
  for (int i = 0; i < j.size(); ++i)
    if (j.is_pressure(i)) b[i] -= mean;
}

}  // namespace detail

// Newton (or Picard) iteration on F(x) = 0. Each step assembles the flux
// scaled linearization J_s = D J D, builds a fresh preconditioner on the
// shared level-1 partition and solves J_s y = -D F with GMRES; x += D y.
inline NewtonResult newton_solve(const ProblemSpec& spec, std::vector<double> x0, const NewtonConfig& cfg,
                                 const GmresConfig& lin, const PrecondPolicy& policy,
                                 const Partition* partition = nullptr) {
  cfg.validate();
  lin.validate();
  const auto& g = spec.grid;
  require_dims(static_cast<int>(x0.size()) == g.num_unknowns(), "newton_solve");
  std::optional<Partition> own;
  if (!partition && policy.levels > 0) {
    own = make_partition(g, policy.partition, policy.subdomain_size);
    partition = &*own;
  }
  const auto d = flux_scaling(g);
  double fnorm = detail::scaled_norm(boundary_rhs(spec), d);
  if (fnorm == 0.0) fnorm = 1.0;

  NewtonResult res;
  res.x = std::move(x0);
  auto r = residual(spec, res.x);
  double rel = detail::scaled_norm(r, d) / fnorm;
  int growth = 0;
  for (int step = 0;; ++step) {
    res.final_residual = rel;
    if (rel <= cfg.tol) {
      res.converged = true;
      break;
    }
    if (step == cfg.max_steps) break;
    const auto t0 = std::chrono::steady_clock::now();
    SaddleMatrix j = cfg.linearization == Linearization::Newton
                         ? assemble_jacobian_unscaled(spec, res.x)
                         : assemble_picard_unscaled(spec, res.x);
    j = scale_to_fluxes(j, g);
    std::vector<char> is_p(j.size());
    for (int i = 0; i < j.size(); ++i) is_p[i] = j.is_pressure(i);
    MultilevelPreconditioner m = build_multilevel(j.matrix, is_p, policy.levels > 0 ? *partition : Partition(), policy);
    const double setup = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<double> b(r.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -d[i] * r[i];
    detail::remove_pressure_mean(j, b);
    NewtonStep ns;
    ns.residual = rel;
    auto y = gmres(matrix_operator(j.matrix), [&m](const double* in, double* out) { m.apply(in, out); }, b, lin,
                   ns.linear);
    ns.linear.setup_seconds = setup;
    res.steps.push_back(ns);
    if (!ns.linear.converged)
      throw NonConvergence("linear solve of Newton step " + std::to_string(step + 1) + " at Re=" +
                           std::to_string(spec.reynolds) + " stopped after " +
                           std::to_string(ns.linear.iterations) + " iterations at relative residual " +
                           std::to_string(ns.linear.final_residual));
    for (std::size_t i = 0; i < y.size(); ++i) res.x[i] += d[i] * y[i];
    check_finite(res.x, "newton_solve");

    r = residual(spec, res.x);
    double next = detail::scaled_norm(r, d) / fnorm;
    growth = next > rel ? growth + 1 : 0;
    rel = next;
    if (growth >= cfg.growth_limit) {
      res.final_residual = rel;
      throw NonConvergence("nonlinear residual grew for " + std::to_string(growth) +
                           " consecutive steps at Re=" + std::to_string(spec.reynolds) +
                           " (relative residual " + std::to_string(rel) + ")");
    }
  }
  return res;
}

struct ContinuationStep {
  double reynolds = 0.0;
  NewtonResult result;

  int newton_steps() const { return static_cast<int>(result.steps.size()); }
  int first_step_iterations() const { return result.steps.empty() ? 0 : result.steps.front().linear.iterations; }
};

struct ContinuationRun {
  double re_start = 100.0;
  double re_end = 500.0;
  double re_step = 100.0;
  std::vector<double> state;  // start state, replaced by the last converged state
  std::vector<ContinuationStep> steps;
  std::string failure;        // empty unless a step failed

  void validate() const {
    if (!(re_step > 0.0)) throw ConfigError("continuation step must be positive");
    if (!(re_start > 0.0) || re_end < re_start) throw ConfigError("continuation range must satisfy 0 < start <= end");
  }
};

// Stokes solution with the spec's lid velocity and forcing; the usual start
// of a continuation run.
inline std::vector<double> solve_stokes(const ProblemSpec& spec, const GmresConfig& lin, const PrecondPolicy& policy,
                                        const Partition* partition = nullptr) {
  ProblemSpec s = spec;
  s.kind = ProblemKind::Stokes;
  NewtonConfig one;
  one.max_steps = 1;
  one.tol = lin.tol;
  return newton_solve(s, std::vector<double>(spec.grid.num_unknowns(), 0.0), one, lin, policy, partition).x;
}

// Steps Re from re_start to re_end, each step starting from the previous
// converged state. Stops at the first failing step and records why in
// `failure`; `steps` then holds the converged steps only.
inline ContinuationRun run_continuation(const ProblemSpec& spec, ContinuationRun run, const NewtonConfig& cfg,
                                        const GmresConfig& lin, const PrecondPolicy& policy) {
  run.validate();
  require_dims(static_cast<int>(run.state.size()) == spec.grid.num_unknowns(), "continue_in_re");
  run.failure.clear();
  std::optional<Partition> part;
  if (policy.levels > 0) part = make_partition(spec.grid, policy.partition, policy.subdomain_size);
  const int n = static_cast<int>(std::floor((run.re_end - run.re_start) / run.re_step + 1e-9)) + 1;
  for (int k = 0; k < n; ++k) {
    ProblemSpec s = spec;
    s.kind = ProblemKind::NavierStokes;
    s.reynolds = run.re_start + k * run.re_step;
    ContinuationStep cs;
    cs.reynolds = s.reynolds;
    try {
      cs.result = newton_solve(s, run.state, cfg, lin, policy, part ? &*part : nullptr);
    } catch (const NonConvergence& e) {
      run.failure = e.what();
      return run;
    }
    if (!cs.result.converged) {
      run.failure = "Newton did not converge at Re=" + std::to_string(s.reynolds) + " within " +
                    std::to_string(cfg.max_steps) + " steps";
      return run;
    }
    run.state = cs.result.x;
    run.steps.push_back(std::move(cs));
  }
  return run;
}

// As run_continuation, but an unconverged step throws NonConvergence.
inline ContinuationRun continue_in_re(const ProblemSpec& spec, ContinuationRun run, const NewtonConfig& cfg,
                                      const GmresConfig& lin, const PrecondPolicy& policy) {
  run = run_continuation(spec, std::move(run), cfg, lin, policy);
  if (!run.failure.empty()) throw NonConvergence(run.failure);
  return run;
}

inline void write_continuation_csv(std::ostream& os, const ContinuationRun& run, bool header = true) {
  if (header) os << "reynolds,newton_steps,first_step_gmres_iterations,final_residual\n";
  os.precision(17);
  for (const auto& s : run.steps)
    os << s.reynolds << ',' << s.newton_steps() << ',' << s.first_step_iterations() << ','
       << s.result.final_residual << '\n';
}

}  // namespace mlilu
