// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "mlilu/discretize.hpp"
#include "mlilu/linalg/dense.hpp"
#include "mlilu/linalg/sparse_lu.hpp"
#include "mlilu/parallel.hpp"
#include "mlilu/partition.hpp"
#include "mlilu/precond/elimination.hpp"
#include "mlilu/precond/transform.hpp"

namespace mlilu {

struct PrecondPolicy {
  PartitionKind partition = PartitionKind::Parallelepiped;
  int subdomain_size = 8;
  int levels = 2;             // elimination levels; 0 factorizes A directly
  int coarsening_factor = 2;
  std::vector<int> retain{1};  // per level, the last entry repeats; kRetainAll keeps every node
  int threads = 1;
  int dense_threshold = 500;  // coarse systems below this size use a dense LU
  bool keep_schur = false;    // keep the unreduced Schur complement of every level

  int retain_at(int level) const {
    if (retain.empty()) return 1;
    std::size_t k = static_cast<std::size_t>(level - 1);
    return k < retain.size() ? retain[k] : retain.back();
  }
};

struct LevelFactorization {
  int level = 1;
  int size = 0;
  long matrix_nnz = 0;
  int retain = 1;
  Partition partition;
  InteriorElimination elim;
  TransformedSchur transformed;
  long schur_nnz = 0;
  int promoted_pressures = 0;
};

// Direct solver for the last reduced system. When the all-ones pressure
// vector is a null vector the last pressure is pinned to zero.
class CoarseSolver {
 public:
  CoarseSolver() = default;

  CoarseSolver(const SparseMatrix& a, const std::vector<char>& is_pressure, int dense_threshold = 500) {
    require_dims(a.rows() == a.cols() && static_cast<int>(is_pressure.size()) == a.rows(), "CoarseSolver");
    n_ = a.rows();
    if (n_ == 0) return;
    std::vector<double> e(n_, 0.0), y(n_, 0.0);
    int last = -1;
    for (int i = 0; i < n_; ++i)
      if (is_pressure[i]) {
        e[i] = 1.0;
        last = i;
      }
    if (last >= 0) {
      matvec(a, e.data(), y.data());
      double ymax = 0.0;
      for (double v : y) ymax = std::max(ymax, std::abs(v));
      if (ymax <= 1e-12 * a.max_abs()) pin_ = last;
    }
    SparseMatrix m = a;
    if (pin_ >= 0) {
      std::vector<Triplet> t;
      t.reserve(a.nnz());
      for (int i = 0; i < n_; ++i)
        for (int q = a.row_begin(i); q < a.row_end(i); ++q) {
          int j = a.col_indices()[q];
          if (i != pin_ && j != pin_) t.push_back({i, j, a.values()[q]});
        }
      t.push_back({pin_, pin_, 1.0});
      m = SparseMatrix::from_triplets(n_, n_, std::move(t), true);
    }
    dense_ = n_ < dense_threshold;
    if (dense_) {
      DenseMatrix d(n_, n_);
      for (int i = 0; i < n_; ++i)
        for (int q = m.row_begin(i); q < m.row_end(i); ++q) d(i, m.col_indices()[q]) = m.values()[q];
      dense_lu_ = DenseLU(std::move(d), 1e-14, -1);
    } else {
      LUOptions lo;
      lo.pivot_tol = 1e-14;
      sparse_lu_ = lu_factor(m, lo);
    }
  }

  int size() const { return n_; }
  int pinned() const { return pin_; }
  bool dense() const { return dense_; }
  long factor_nnz() const {
    return dense_ ? static_cast<long>(n_) * n_ : sparse_lu_.fill_in();
  }

  void solve_inplace(double* b) const {
    if (n_ == 0) return;
    if (pin_ >= 0) b[pin_] = 0.0;
    if (dense_) {
      dense_lu_.solve_inplace(b);
    } else {
      std::vector<double> work(n_);
      lu_solve_inplace(sparse_lu_, b, work.data());
    }
    if (pin_ >= 0) b[pin_] = 0.0;
  }

 private:
  int n_ = 0;
  int pin_ = -1;
  bool dense_ = true;
  DenseLU dense_lu_;
  LUFactor sparse_lu_;
};

class MultilevelPreconditioner {
 public:
  MultilevelPreconditioner() = default;
  MultilevelPreconditioner(std::vector<LevelFactorization> levels, CoarseSolver coarse, SparseMatrix coarse_matrix,
                           int n, PrecondPolicy policy)
      : levels_(std::move(levels)),
        coarse_(std::move(coarse)),
        coarse_matrix_(std::move(coarse_matrix)),
        n_(n),
        policy_(std::move(policy)) {}

  int size() const { return n_; }
  const std::vector<LevelFactorization>& levels() const { return levels_; }
  const CoarseSolver& coarse() const { return coarse_; }
  const SparseMatrix& coarse_matrix() const { return coarse_matrix_; }
  const PrecondPolicy& policy() const { return policy_; }

  void apply(const double* r, double* x) const { apply_level(0, r, x); }

  std::vector<double> apply(const std::vector<double>& r) const {
    require_dims(static_cast<int>(r.size()) == n_, "MultilevelPreconditioner::apply");
    std::vector<double> x(n_);
    apply(r.data(), x.data());
    return x;
  }

 private:
  void apply_level(std::size_t l, const double* r, double* x) const {
    if (l == levels_.size()) {
      const int n = coarse_.size();
      std::copy(r, r + n, x);
      coarse_.solve_inplace(x);
      return;
    }
    const auto& lev = levels_[l];
    const auto& el = lev.elim;
    const auto& tr = lev.transformed;
    const int m = static_cast<int>(el.separators.size());
    const int ns = static_cast<int>(el.subdomains.size());
    const int threads = policy_.threads;

    // Forward: interior solves and the separator right-hand side.
    std::vector<std::vector<double>> y(ns), coupling(ns);
    parallel_for(ns, threads, [&](int s) {
      const auto& f = el.subdomains[s];
      if (f.interior.empty()) return;
      const int ni = static_cast<int>(f.interior.size());
      auto& ys = y[s];
      ys.resize(ni);
      for (int i = 0; i < ni; ++i) ys[i] = r[f.interior[i]];
      std::vector<double> work(ni);
      lu_solve_inplace(f.lu, ys.data(), work.data());
      coupling[s].assign(f.coupled.size(), 0.0);
      matvec(f.a_si, ys.data(), coupling[s].data());
    });
    std::vector<double> z(m);
    for (int k = 0; k < m; ++k) z[k] = r[el.separators[k]];
    for (int s = 0; s < ns; ++s)
      for (std::size_t k = 0; k < coupling[s].size(); ++k) z[el.subdomains[s].coupled[k]] -= coupling[s][k];

    // Householder transform, block solves and the reduced system.
    const int ng = static_cast<int>(tr.groups.size());
    std::vector<std::vector<double>> w(ng);
    std::vector<double> zr(ng), xr(ng);
    parallel_for(ng, threads, [&](int g) {
      const auto& h = tr.groups[g];
      auto& wg = w[g];
      wg.resize(h.size());
      for (int k = 0; k < h.size(); ++k) wg[k] = z[h.members[k]];
      h.apply(wg.data());
      zr[tr.rank[g]] = wg[0];
      if (h.size() > 1) tr.blocks[g].solve_inplace(wg.data() + 1);
    });
    apply_level(l + 1, zr.data(), xr.data());
    std::vector<double> xs(m);
    parallel_for(ng, threads, [&](int g) {
      const auto& h = tr.groups[g];
      auto& wg = w[g];
      wg[0] = xr[tr.rank[g]];
      h.apply(wg.data());
      for (int k = 0; k < h.size(); ++k) xs[h.members[k]] = wg[k];
    });

    // Backward: interior correction.
    for (int k = 0; k < m; ++k) x[el.separators[k]] = xs[k];
    parallel_for(ns, threads, [&](int s) {
      const auto& f = el.subdomains[s];
      if (f.interior.empty()) return;
      const int ni = static_cast<int>(f.interior.size());
      std::vector<double> xc(f.coupled.size()), t(ni, 0.0), work(ni);
      for (std::size_t k = 0; k < f.coupled.size(); ++k) xc[k] = xs[f.coupled[k]];
      matvec(f.a_is, xc.data(), t.data());
      lu_solve_inplace(f.lu, t.data(), work.data());
      for (int i = 0; i < ni; ++i) x[f.interior[i]] = y[s][i] - t[i];
    });
  }

  std::vector<LevelFactorization> levels_;
  CoarseSolver coarse_;
  SparseMatrix coarse_matrix_;
  int n_ = 0;
  PrecondPolicy policy_;
};

// Builds the multilevel factorization of `a` on the level-1 partition `p`.
// The recursion stops early when the partition can not be coarsened further.
inline MultilevelPreconditioner build_multilevel(const SparseMatrix& a, const std::vector<char>& is_pressure,
                                                 Partition p, const PrecondPolicy& policy) {
  require_dims(a.rows() == a.cols() && static_cast<int>(is_pressure.size()) == a.rows(), "build_multilevel");
  if (policy.levels < 0) throw ConfigError("number of levels must be non-negative");
  if (policy.coarsening_factor < 2) throw ConfigError("coarsening factor must be at least 2");
  const int n = a.rows();
  std::vector<LevelFactorization> levels;
  SparseMatrix cur = a;
  std::vector<char> is_p = is_pressure;
  std::vector<double> t(n, 1.0);
  for (int l = 1; l <= policy.levels; ++l) {
    if (l == 1) require_dims(p.classes.size() == n, "build_multilevel partition");
    LevelFactorization lev;
    lev.level = l;
    lev.size = cur.rows();
    lev.matrix_nnz = cur.nnz();
    lev.retain = policy.retain_at(l);
    if (l > 1) lev.promoted_pressures = promote_isolated_pressures(p, cur);
    EliminationOptions eo;
    eo.threads = policy.threads;
    lev.elim = eliminate_interiors(cur, p.classes, is_p, eo);
    lev.schur_nnz = lev.elim.schur.nnz();
    const auto& seps = lev.elim.separators;
    std::vector<double> tsep(seps.size());
    for (std::size_t k = 0; k < seps.size(); ++k) tsep[k] = t[seps[k]];
    auto groups = build_householder_set(p.classes, lev.elim.sep_index, tsep, lev.retain);
    lev.transformed = transform_and_drop(lev.elim.schur, std::move(groups), tsep, policy.threads);
    if (!policy.keep_schur) lev.elim.schur = SparseMatrix();

    std::vector<int> survivors;
    std::vector<char> next_p;
    for (int k : lev.transformed.sigma) {
      survivors.push_back(seps[k]);
      next_p.push_back(is_p[seps[k]]);
    }
    cur = lev.transformed.reduced;
    t = lev.transformed.test_vector;
    is_p = std::move(next_p);
    const bool last = l == policy.levels || p.num_subdomains() <= 1;
    Partition next;
    if (!last) next = coarsen(p, policy.coarsening_factor, survivors);
    lev.partition = std::move(p);
    levels.push_back(std::move(lev));
    if (last) break;
    p = std::move(next);
  }
  CoarseSolver coarse(cur, is_p, policy.dense_threshold);
  return MultilevelPreconditioner(std::move(levels), std::move(coarse), std::move(cur), n, policy);
}

inline MultilevelPreconditioner build_multilevel(const SaddleMatrix& a, const StaggeredGrid& g,
                                                 const PrecondPolicy& policy) {
  std::vector<char> is_p(a.size());
  for (int i = 0; i < a.size(); ++i) is_p[i] = a.is_pressure(i);
  Partition p;
  if (policy.levels > 0) p = make_partition(g, policy.partition, policy.subdomain_size);
  return build_multilevel(a.matrix, is_p, std::move(p), policy);
}

// Per-level dimensions and nonzero counts, one row per level plus the coarse
// system.
inline void write_precond_diagnostics(std::ostream& os, const MultilevelPreconditioner& m) {
  os << "level,size,matrix_nnz,subdomains,interior,separators,groups,retained_pressures,interior_lu_nnz,"
        "schur_nnz,reduced_size,reduced_nnz,retain,promoted_pressures\n";
  for (const auto& lev : m.levels()) {
    long interior = 0, lu = 0;
    for (const auto& f : lev.elim.subdomains) {
      interior += static_cast<long>(f.interior.size());
      lu += f.lu.fill_in();
    }
    long retained = 0;
    for (char c : lev.partition.classes.retained) retained += c ? 1 : 0;
    os << lev.level << ',' << lev.size << ',' << lev.matrix_nnz << ',' << lev.partition.num_subdomains() << ','
       << interior << ',' << lev.elim.separators.size() << ',' << lev.transformed.groups.size() << ',' << retained
       << ',' << lu << ',' << lev.schur_nnz << ',' << lev.transformed.reduced.rows() << ','
       << lev.transformed.reduced.nnz() << ',' << lev.retain << ',' << lev.promoted_pressures << '\n';
  }
  const auto& c = m.coarse();
  os << "coarse," << c.size() << ',' << m.coarse_matrix().nnz() << ",,,,,," << c.factor_nnz() << ",,,,,\n";
}

// Writes S_sigma_sigma of every level as level<k>_reduced.mtx into `dir`.
inline void dump_reduced_matrices(const std::filesystem::path& dir, const MultilevelPreconditioner& m) {
  std::filesystem::create_directories(dir);
  for (const auto& lev : m.levels())
    write_matrix_market((dir / ("level" + std::to_string(lev.level) + "_reduced.mtx")).string(), lev.transformed.reduced);
}

}  // namespace mlilu
