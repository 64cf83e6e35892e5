// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "mlilu/error.hpp"
#include "mlilu/linalg/sparse_matrix.hpp"

namespace mlilu {

// y = Op(x) for vectors of a fixed length.
using LinearOperator = std::function<void(const double*, double*)>;

inline LinearOperator matrix_operator(const SparseMatrix& a) {
  return [&a](const double* x, double* y) { matvec(a, x, y); };
}

inline LinearOperator identity_operator(int n) {
  return [n](const double* x, double* y) { std::copy(x, x + n, y); };
}

struct GmresConfig {
  int restart = 250;
  double tol = 1e-8;
  int max_iterations = 10000;
  double reorth_threshold = 1e-8;

  void validate() const {
    if (restart < 1) throw ConfigError("GMRES restart length must be at least 1");
    if (!(tol > 0.0)) throw ConfigError("GMRES tolerance must be positive");
    if (max_iterations < 0) throw ConfigError("GMRES iteration cap must be non-negative");
  }
};

struct SolveStats {
  int iterations = 0;
  std::vector<double> history;  // relative residual estimate, entry 0 is the start
  double final_residual = 0.0;  // true relative residual
  bool converged = false;
  bool breakdown = false;
  int restarts = 0;
  double setup_seconds = 0.0;  // filled by callers that build a preconditioner
  double solve_seconds = 0.0;
};

// Right-preconditioned restarted GMRES: solves A M^{-1} u = b, x = M^{-1} u.
// Iterations count Arnoldi steps over all cycles.
inline std::vector<double> gmres(const LinearOperator& a, const LinearOperator& m, const std::vector<double>& b,
                                 const GmresConfig& cfg, SolveStats& stats, std::vector<double> x0 = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(b.size());
  std::vector<double> x = x0.empty() ? std::vector<double>(n, 0.0) : std::move(x0);
  require_dims(static_cast<int>(x.size()) == n, "gmres initial guess");
  stats = SolveStats();

  auto dot = [n](const double* p, const double* q) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += p[i] * q[i];
    return s;
  };
  auto norm = [&](const double* p) { return std::sqrt(dot(p, p)); };

  const double bnorm = norm(b.data());
  std::vector<double> r(n), z(n), w(n);
  auto true_residual = [&] {
    a(x.data(), r.data());
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    return norm(r.data());
  };
  auto finish = [&] {
    stats.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return x;
  };
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    stats.history = {0.0};
    stats.converged = true;
    return finish();
  }

  const int mr = cfg.restart;
  std::vector<std::vector<double>> v(mr + 1, std::vector<double>(n));
  std::vector<double> h(static_cast<std::size_t>(mr + 1) * mr), cs(mr), sn(mr), g(mr + 1), h2(mr + 1);
  auto H = [&](int i, int j) -> double& { return h[static_cast<std::size_t>(j) * (mr + 1) + i]; };

  double beta = true_residual();
  stats.history.push_back(beta / bnorm);
  stats.final_residual = beta / bnorm;
  if (beta / bnorm <= cfg.tol) {
    stats.converged = true;
    return finish();
  }

  while (stats.iterations < cfg.max_iterations) {
    for (int i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int k = 0;
    bool done = false;
    for (; k < mr && stats.iterations < cfg.max_iterations; ++k) {
      m(v[k].data(), z.data());
      a(z.data(), w.data());
      double wnorm0 = norm(w.data());
      for (int i = 0; i <= k; ++i) {
        double c = dot(v[i].data(), w.data());
        H(i, k) = c;
        for (int q = 0; q < n; ++q) w[q] -= c * v[i][q];
      }
      double wn = norm(w.data());
      double loss = 0.0;
      for (int i = 0; i <= k; ++i) {
        h2[i] = dot(v[i].data(), w.data());
        loss = std::max(loss, std::abs(h2[i]));
      }
      if (loss > cfg.reorth_threshold * wn) {
        for (int i = 0; i <= k; ++i) {
          H(i, k) += h2[i];
          for (int q = 0; q < n; ++q) w[q] -= h2[i] * v[i][q];
        }
        wn = norm(w.data());
      }
      H(k + 1, k) = wn;
      ++stats.iterations;
      bool lucky = wn <= 1e-14 * wnorm0 || wn == 0.0;
      if (!lucky)
        for (int q = 0; q < n; ++q) v[k + 1][q] = w[q] / wn;

      for (int i = 0; i < k; ++i) {
        double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
        H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
        H(i, k) = t;
      }
      double den = std::hypot(H(k, k), H(k + 1, k));
      if (den == 0.0) {
        stats.breakdown = true;
        break;
      }
      cs[k] = H(k, k) / den;
      sn[k] = H(k + 1, k) / den;
      H(k, k) = den;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      double est = std::abs(g[k + 1]) / bnorm;
      stats.history.push_back(est);
      if (est <= cfg.tol || lucky) {
        stats.breakdown = lucky && est > cfg.tol;
        ++k;
        done = true;
        break;
      }
    }
    // Update x with the k Arnoldi vectors of this cycle.
    std::vector<double> y(g.begin(), g.begin() + k);
    for (int i = k - 1; i >= 0; --i) {
      for (int j = i + 1; j < k; ++j) y[i] -= H(i, j) * y[j];
      y[i] /= H(i, i);
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int j = 0; j < k; ++j)
      for (int q = 0; q < n; ++q) w[q] += y[j] * v[j][q];
    m(w.data(), z.data());
    for (int q = 0; q < n; ++q) x[q] += z[q];

    beta = true_residual();
    stats.final_residual = beta / bnorm;
    if (stats.final_residual <= cfg.tol) {
      stats.converged = true;
      break;
    }
    if (stats.breakdown || (done && k == 0)) break;
    ++stats.restarts;
  }
  return finish();
}

inline void write_residual_history(std::ostream& os, const SolveStats& s, bool header = true) {
  if (header) os << "iteration,relative_residual\n";
  os.precision(17);
  for (std::size_t i = 0; i < s.history.size(); ++i) os << i << ',' << s.history[i] << '\n';
}

}  // namespace mlilu
