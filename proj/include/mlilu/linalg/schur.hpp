// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "mlilu/linalg/sparse_lu.hpp"
#include "mlilu/linalg/sparse_matrix.hpp"

namespace mlilu {

inline constexpr double kSchurPruneThreshold = 1e-14;

// Dense block X = A_II^{-1} A_IS, column-major (one column per S index).
inline std::vector<double> interior_solve_columns(const LUFactor& fii, const SparseMatrix& a_is) {
  const int ni = fii.n, ns = a_is.cols();
  require_dims(a_is.rows() == ni, "interior_solve_columns");
  const SparseMatrix cols = a_is.transpose();
  std::vector<double> x(static_cast<std::size_t>(ni) * ns, 0.0), work(ni);
  for (int j = 0; j < ns; ++j) {
    double* xj = x.data() + static_cast<std::size_t>(j) * ni;
    for (int p = cols.row_begin(j); p < cols.row_end(j); ++p) xj[cols.col_indices()[p]] = cols.values()[p];
    if (cols.row_begin(j) != cols.row_end(j)) lu_solve_inplace(fii, xj, work.data());
  }
  return x;
}

// A_SS - A_SI A_II^{-1} A_IS for index sets I and S of A. Entries with
// magnitude at most 1e-14 are pruned.
inline SparseMatrix schur_complement(const SparseMatrix& a, const std::vector<int>& interior,
                                     const std::vector<int>& sep, const LUFactor& fii) {
  require_dims(a.rows() == a.cols() && fii.n == static_cast<int>(interior.size()), "schur_complement");
  const SparseMatrix a_is = a.submatrix(interior, sep);
  const SparseMatrix a_si = a.submatrix(sep, interior);
  const SparseMatrix a_ss = a.submatrix(sep, sep);
  const int ni = static_cast<int>(interior.size()), ns = static_cast<int>(sep.size());
  std::vector<double> x = interior_solve_columns(fii, a_is);
  std::vector<Triplet> t;
  for (int i = 0; i < ns; ++i)
    for (int p = a_ss.row_begin(i); p < a_ss.row_end(i); ++p)
      t.push_back({i, a_ss.col_indices()[p], a_ss.values()[p]});
  for (int i = 0; i < ns; ++i) {
    if (a_si.row_begin(i) == a_si.row_end(i)) continue;
    for (int j = 0; j < ns; ++j) {
      const double* xj = x.data() + static_cast<std::size_t>(j) * ni;
      double s = 0.0;
      for (int p = a_si.row_begin(i); p < a_si.row_end(i); ++p) s += a_si.values()[p] * xj[a_si.col_indices()[p]];
      if (s != 0.0) t.push_back({i, j, -s});
    }
  }
  return SparseMatrix::from_triplets(ns, ns, std::move(t)).pruned(kSchurPruneThreshold);
}

}  // namespace mlilu
