// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "mlilu/grid.hpp"
#include "mlilu/linalg/dense.hpp"
#include "mlilu/linalg/schur.hpp"
#include "mlilu/linalg/sparse_lu.hpp"
#include "mlilu/parallel.hpp"
#include "mlilu/partition.hpp"

namespace mlilu {

// Interior block of one subdomain and its couplings to the separators.
struct SubdomainFactor {
  int id = -1;
  std::vector<int> interior;  // positions on the level
  std::vector<int> coupled;   // separator indices reached from the interior
  LUFactor lu;
  SparseMatrix a_is;  // |interior| x |coupled|
  SparseMatrix a_si;  // |coupled| x |interior|
  bool pressure_identity = false;
};

// A_SI A_II^{-1} A_IS restricted to the coupled separators, row-major.
struct SchurContribution {
  std::vector<int> coupled;
  DenseMatrix c;
};

struct InteriorElimination {
  std::vector<int> separators;  // positions on the level
  std::vector<int> sep_index;   // position -> separator index, -1 for interior nodes
  std::vector<SubdomainFactor> subdomains;
  std::vector<SchurContribution> contributions;  // kept only on request
  SparseMatrix schur;
};

struct EliminationOptions {
  int threads = 1;
  bool keep_contributions = false;
  std::vector<int> order;  // order in which contributions are summed (default: by id)
};

namespace detail {

// True when A_II^{-1} A_{I,p} = -(0; 1) holds for the retained pressure p:
// every interior velocity row and column has pressure entries only inside
// I + {p} and they sum to zero, and the interior pressure block is empty.
inline bool pressure_identity_holds(const SparseMatrix& a, const SparseMatrix& at, const std::vector<char>& is_p,
                                    const std::vector<char>& in_block, int p) {
  for (const SparseMatrix* m : {&a, &at})
    for (int r = 0; r < m->rows(); ++r) {
      if (!in_block[r]) continue;
      double sum = 0.0, mx = 0.0;
      for (int q = m->row_begin(r); q < m->row_end(r); ++q) {
        int c = m->col_indices()[q];
        double v = m->values()[q];
        if (!is_p[c]) continue;
        if (is_p[r]) {
          if (v != 0.0) return false;
          continue;
        }
        if (!in_block[c] && c != p) return false;
        sum += v;
        mx = std::max(mx, std::abs(v));
      }
      if (std::abs(sum) > 1e-12 * mx) return false;
    }
  return true;
}

}  // namespace detail

// Factorizes every subdomain interior and assembles
//   S = A_SS - sum_alpha A_{S,I_alpha} A_{I_alpha,I_alpha}^{-1} A_{I_alpha,S}
// over the separator nodes of `nc`. `is_pressure` flags pressure nodes.
inline InteriorElimination eliminate_interiors(const SparseMatrix& a, const NodeClassification& nc,
                                               const std::vector<char>& is_pressure,
                                               const EliminationOptions& opt = {}) {
  require_dims(a.rows() == nc.size() && a.cols() == nc.size() && static_cast<int>(is_pressure.size()) == nc.size(),
               "eliminate_interiors");
  check_decoupling(nc, a);
  InteriorElimination el;
  el.separators = nc.separators();
  el.sep_index.assign(nc.size(), -1);
  for (std::size_t k = 0; k < el.separators.size(); ++k) el.sep_index[el.separators[k]] = static_cast<int>(k);
  const int m = static_cast<int>(el.separators.size());
  const SparseMatrix at = a.transpose();

  auto interiors = nc.interiors();
  const int ns = nc.num_subdomains;
  el.subdomains.resize(ns);
  std::vector<SchurContribution> contrib(ns);

  parallel_for(ns, opt.threads, [&](int s) {
    SubdomainFactor& f = el.subdomains[s];
    f.id = s;
    f.interior = interiors[s];
    if (f.interior.empty()) return;
    std::vector<char> in_block(nc.size(), 0);
    for (int i : f.interior) in_block[i] = 1;
    std::vector<int> coupled_pos;
    for (const SparseMatrix* mtx : {&a, &at})
      for (int i : f.interior)
        for (int q = mtx->row_begin(i); q < mtx->row_end(i); ++q)
          if (int c = mtx->col_indices()[q]; el.sep_index[c] >= 0) coupled_pos.push_back(c);
    std::sort(coupled_pos.begin(), coupled_pos.end());
    coupled_pos.erase(std::unique(coupled_pos.begin(), coupled_pos.end()), coupled_pos.end());
    f.coupled.resize(coupled_pos.size());
    for (std::size_t k = 0; k < coupled_pos.size(); ++k) f.coupled[k] = el.sep_index[coupled_pos[k]];

    LUOptions lo;
    lo.block_id = s;
    f.lu = lu_factor(a.submatrix(f.interior, f.interior), lo);
    f.a_is = a.submatrix(f.interior, coupled_pos);
    f.a_si = a.submatrix(coupled_pos, f.interior);

    // Retained pressure of this subdomain among the coupled separators.
    int pr = -1, npres = 0;
    for (std::size_t k = 0; k < coupled_pos.size(); ++k)
      if (is_pressure[coupled_pos[k]]) {
        ++npres;
        pr = static_cast<int>(k);
      }
    f.pressure_identity =
        npres == 1 && nc.retained[coupled_pos[pr]] &&
        detail::pressure_identity_holds(a, at, is_pressure, in_block, coupled_pos[pr]);

    const int nc_ = static_cast<int>(coupled_pos.size()), ni = static_cast<int>(f.interior.size());
    std::vector<int> numeric;
    for (int k = 0; k < nc_; ++k)
      if (!(f.pressure_identity && k == pr)) numeric.push_back(k);
    std::vector<int> numeric_pos;
    for (int k : numeric) numeric_pos.push_back(coupled_pos[k]);
    std::vector<double> x = interior_solve_columns(f.lu, a.submatrix(f.interior, numeric_pos));

    SchurContribution& sc = contrib[s];
    sc.coupled = f.coupled;
    sc.c = DenseMatrix(nc_, nc_);
    for (int r = 0; r < nc_; ++r) {
      int rb = f.a_si.row_begin(r), re = f.a_si.row_end(r);
      if (rb == re) continue;
      for (std::size_t jj = 0; jj < numeric.size(); ++jj) {
        const double* xj = x.data() + jj * static_cast<std::size_t>(ni);
        double sum = 0.0;
        for (int q = rb; q < re; ++q) sum += f.a_si.values()[q] * xj[f.a_si.col_indices()[q]];
        sc.c(r, numeric[jj]) = sum;
      }
    }
    if (f.pressure_identity) {
      // Row and column of the retained pressure from the F-matrix identity.
      std::vector<char> interior_p(ni);
      for (int i = 0; i < ni; ++i) interior_p[i] = is_pressure[f.interior[i]];
      for (int r = 0; r < nc_; ++r) {
        double sum = 0.0;
        for (int q = f.a_si.row_begin(r); q < f.a_si.row_end(r); ++q)
          if (interior_p[f.a_si.col_indices()[q]]) sum += f.a_si.values()[q];
        sc.c(r, pr) = -sum;
      }
      SparseMatrix cols = f.a_is.transpose();
      for (int k = 0; k < nc_; ++k) {
        double sum = 0.0;
        for (int q = cols.row_begin(k); q < cols.row_end(k); ++q)
          if (interior_p[cols.col_indices()[q]]) sum += cols.values()[q];
        sc.c(pr, k) = -sum;
      }
      sc.c(pr, pr) = 0.0;
    }
  });

  std::vector<int> order = opt.order;
  if (order.empty()) {
    order.resize(ns);
    std::iota(order.begin(), order.end(), 0);
  }
  require_dims(static_cast<int>(order.size()) == ns, "eliminate_interiors order");

  std::vector<Triplet> t;
  const SparseMatrix ass = a.submatrix(el.separators, el.separators);
  std::size_t total = ass.nnz();
  for (int s : order) total += contrib[s].c.data.size();
  t.reserve(total);
  for (int i = 0; i < m; ++i)
    for (int q = ass.row_begin(i); q < ass.row_end(i); ++q) t.push_back({i, ass.col_indices()[q], ass.values()[q]});
  for (int s : order) {
    const auto& sc = contrib[s];
    const int k = static_cast<int>(sc.coupled.size());
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c)
        if (double v = sc.c(r, c); v != 0.0) t.push_back({sc.coupled[r], sc.coupled[c], -v});
  }
  el.schur = SparseMatrix::from_triplets(m, m, std::move(t), true).pruned(kSchurPruneThreshold);
  if (opt.keep_contributions) el.contributions = std::move(contrib);
  return el;
}

}  // namespace mlilu
