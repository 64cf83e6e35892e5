// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>
#include <cmath>
#include <string>
#include <vector>

#include "mlilu/linalg/sparse_matrix.hpp"

namespace mlilu {

enum class Ordering { Natural, Amd };

// P_r A P_c = L U. Row k of the permuted matrix is row row_perm[k] of A,
// column k is column col_perm[k]. L is unit lower triangular with the unit
// diagonal not stored; U holds the diagonal.
struct LUFactor {
  int n = 0;
  std::vector<int> row_perm;
  std::vector<int> col_perm;
  SparseMatrix lower;
  SparseMatrix upper;

  long fill_in() const { return static_cast<long>(lower.nnz()) + upper.nnz(); }
};

struct LUOptions {
  Ordering ordering = Ordering::Amd;
  double pivot_tol = 1e-12;        // relative to the largest entry of the column
  double diagonal_preference = 0.1;  // keep the diagonal if within this factor of the max
  int block_id = -1;               // reported in SingularBlock
};

namespace detail {

inline std::vector<int> amd_order(const SparseMatrix& a) {
  int n = a.rows();
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(a.nnz());
  for (int i = 0; i < n; ++i)
    for (int p = a.row_begin(i); p < a.row_end(i); ++p) t.emplace_back(i, a.col_indices()[p], 1.0);
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  Eigen::AMDOrdering<int> amd;
  Eigen::AMDOrdering<int>::PermutationType perm;
  amd(m, perm);
  // perm maps old index -> new position.
  std::vector<int> q(n);
  for (int i = 0; i < n; ++i) q[perm.indices()[i]] = i;
  return q;
}

}  // namespace detail

// Left-looking sparse LU (Gilbert-Peierls) with threshold partial pivoting.
inline LUFactor lu_factor(const SparseMatrix& a, const LUOptions& opt = {}) {
  require_dims(a.rows() == a.cols(), "lu_factor");
  const int n = a.rows();
  LUFactor f;
  f.n = n;
  f.col_perm = opt.ordering == Ordering::Amd && n > 2 ? detail::amd_order(a) : [n] {
    std::vector<int> q(n);
    for (int i = 0; i < n; ++i) q[i] = i;
    return q;
  }();

  const SparseMatrix at = a.transpose();  // CSC view of A
  const auto& ap = at.row_offsets();
  const auto& ai = at.col_indices();
  const auto& ax = at.values();

  // Columns of L (rows in original numbering until the end) and U (rows in
  // pivot numbering).
  std::vector<int> lp(1, 0), li, up(1, 0), ui;
  std::vector<double> lx, ux;
  std::size_t guess = static_cast<std::size_t>(a.nnz()) * 4;
  li.reserve(guess);
  lx.reserve(guess);
  ui.reserve(guess);
  ux.reserve(guess);

  std::vector<int> pinv(n, -1), xi(2 * n), mark(n, -1), pstack(n);
  std::vector<double> x(n, 0.0);

  for (int k = 0; k < n; ++k) {
    const int col = f.col_perm[k];
    // Reach of A(:,col) in the graph of L, topologically ordered in xi[top..n).
    int top = n;
    for (int p = ap[col]; p < ap[col + 1]; ++p) {
      int start = ai[p];
      if (mark[start] == k) continue;
      int head = 0;
      xi[n] = start;  // scratch stack in xi[n..2n)
      int* stack = xi.data() + n;
      stack[0] = start;
      while (head >= 0) {
        int j = stack[head];
        int jnew = pinv[j];
        if (mark[j] != k) {
          mark[j] = k;
          pstack[head] = jnew < 0 ? 0 : lp[jnew];
        }
        bool done = true;
        int pend = jnew < 0 ? 0 : lp[jnew + 1];
        for (int q = pstack[head]; q < pend; ++q) {
          int i = li[q];
          if (mark[i] == k) continue;
          pstack[head] = q + 1;
          stack[++head] = i;
          done = false;
          break;
        }
        if (done) {
          --head;
          xi[--top] = j;
        }
      }
    }

    double colmax = 0.0;
    for (int p = top; p < n; ++p) x[xi[p]] = 0.0;
    for (int p = ap[col]; p < ap[col + 1]; ++p) {
      x[ai[p]] = ax[p];
      colmax = std::max(colmax, std::abs(ax[p]));
    }
    for (int p = top; p < n; ++p) {
      int j = xi[p];
      int jnew = pinv[j];
      if (jnew < 0) continue;
      double xj = x[j];
      if (xj == 0.0) continue;
      for (int q = lp[jnew]; q < lp[jnew + 1]; ++q) x[li[q]] -= lx[q] * xj;
    }

    int ipiv = -1;
    double amax = -1.0;
    for (int p = top; p < n; ++p) {
      int i = xi[p];
      if (pinv[i] < 0) {
        if (double v = std::abs(x[i]); v > amax) {
          amax = v;
          ipiv = i;
        }
      } else {
        ui.push_back(pinv[i]);
        ux.push_back(x[i]);
      }
    }
    if (ipiv < 0 || amax <= opt.pivot_tol * colmax || colmax == 0.0)
      throw SingularBlock(opt.block_id, col,
                          "singular block " + std::to_string(opt.block_id) + ": pivot below tolerance in column " +
                              std::to_string(col));
    if (pinv[col] < 0 && std::abs(x[col]) >= opt.diagonal_preference * amax) ipiv = col;

    double pivot = x[ipiv];
    ui.push_back(k);
    ux.push_back(pivot);
    up.push_back(static_cast<int>(ui.size()));
    pinv[ipiv] = k;
    for (int p = top; p < n; ++p) {
      int i = xi[p];
      if (pinv[i] < 0 && x[i] != 0.0) {
        li.push_back(i);
        lx.push_back(x[i] / pivot);
      }
      x[i] = 0.0;
    }
    lp.push_back(static_cast<int>(li.size()));
  }

  f.row_perm.assign(n, 0);
  for (int i = 0; i < n; ++i) f.row_perm[pinv[i]] = i;
  for (int& i : li) i = pinv[i];

  // Column-compressed L and U are the transposes of CSR matrices; build
  // them as such and transpose to get row-oriented factors for the solves.
  auto to_csr = [n](std::vector<int>& cp, std::vector<int>& ci, std::vector<double>& cx) {
    // Sort within each column so the transposed structure is valid CSR.
    for (int j = 0; j < n; ++j) {
      std::vector<std::pair<int, double>> col;
      for (int p = cp[j]; p < cp[j + 1]; ++p) col.emplace_back(ci[p], cx[p]);
      std::sort(col.begin(), col.end(), [](auto& l, auto& r) { return l.first < r.first; });
      for (int p = cp[j]; p < cp[j + 1]; ++p) {
        ci[p] = col[p - cp[j]].first;
        cx[p] = col[p - cp[j]].second;
      }
    }
    SparseMatrix t(n, n, std::move(cp), std::move(ci), std::move(cx));
    return t.transpose();
  };
  f.lower = to_csr(lp, li, lx);
  f.upper = to_csr(up, ui, ux);
  return f;
}

inline LUFactor lu_factor(const SparseMatrix& a, Ordering ordering, double pivot_tol = 1e-12) {
  LUOptions o;
  o.ordering = ordering;
  o.pivot_tol = pivot_tol;
  return lu_factor(a, o);
}

// Solves A x = b in place; work must have length n.
inline void lu_solve_inplace(const LUFactor& f, double* b, double* work) {
  const int n = f.n;
  for (int k = 0; k < n; ++k) work[k] = b[f.row_perm[k]];
  const auto& lo = f.lower.row_offsets();
  const auto& lc = f.lower.col_indices();
  const auto& lv = f.lower.values();
  for (int i = 0; i < n; ++i) {
    double s = work[i];
    for (int p = lo[i]; p < lo[i + 1]; ++p) s -= lv[p] * work[lc[p]];
    work[i] = s;
  }
  const auto& uo = f.upper.row_offsets();
  const auto& uc = f.upper.col_indices();
  const auto& uv = f.upper.values();
  for (int i = n - 1; i >= 0; --i) {
    // The diagonal is the first stored entry of each U row.
    double s = work[i];
    for (int p = uo[i] + 1; p < uo[i + 1]; ++p) s -= uv[p] * work[uc[p]];
    work[i] = s / uv[uo[i]];
  }
  for (int k = 0; k < n; ++k) b[f.col_perm[k]] = work[k];
}

inline std::vector<double> lu_solve(const LUFactor& f, const std::vector<double>& b) {
  require_dims(static_cast<int>(b.size()) == f.n, "lu_solve");
  std::vector<double> x = b, work(f.n);
  lu_solve_inplace(f, x.data(), work.data());
  return x;
}

}  // namespace mlilu
