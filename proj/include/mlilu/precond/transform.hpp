// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "mlilu/linalg/dense.hpp"
#include "mlilu/linalg/sparse_matrix.hpp"
#include "mlilu/parallel.hpp"
#include "mlilu/partition.hpp"
#include "mlilu/precond/householder.hpp"

namespace mlilu {

inline constexpr int kRetainAll = 0;

// Splits the id-ordered members into k contiguous runs of near-equal length
// (k = kRetainAll gives singletons).
inline std::vector<std::vector<int>> split_group(const std::vector<int>& members, int k) {
  const int m = static_cast<int>(members.size());
  if (k == kRetainAll || k > m) k = m;
  std::vector<std::vector<int>> out(k);
  int base = m / k, extra = m % k, p = 0;
  for (int c = 0; c < k; ++c) {
    int len = base + (c < extra ? 1 : 0);
    out[c].assign(members.begin() + p, members.begin() + p + len);
    p += len;
  }
  return out;
}

// Householder reflections for every (sub)group of separators. Members are
// separator indices; `t_sep` is the test vector over the separators.
inline std::vector<HouseholderGroup> build_householder_set(const NodeClassification& nc,
                                                           const std::vector<int>& sep_index,
                                                           const std::vector<double>& t_sep, int retain) {
  std::vector<HouseholderGroup> out;
  for (const auto& grp : nc.groups) {
    std::vector<int> members;
    for (int pos : grp.members) members.push_back(sep_index[pos]);
    if (!is_velocity(grp.kind)) {
      for (int mbr : members) out.push_back(identity_group(static_cast<int>(out.size()), mbr));
      continue;
    }
    for (auto& chunk : split_group(members, retain)) {
      std::vector<double> e;
      for (int mbr : chunk) e.push_back(t_sep[mbr]);
      out.push_back(build_householder(static_cast<int>(out.size()), chunk, e));
    }
  }
  return out;
}

struct TransformedSchur {
  std::vector<HouseholderGroup> groups;  // members are separator indices
  std::vector<DenseLU> blocks;           // non-sigma diagonal block per group (may be empty)
  std::vector<int> rank;                 // group -> row of the reduced matrix
  std::vector<int> sigma;                // reduced row -> separator index, ascending
  SparseMatrix reduced;                  // S_sigma_sigma
  std::vector<double> test_vector;       // over reduced rows
};

// Applies H S H group-blockwise and keeps the non-sigma diagonal blocks of
// every group plus the sigma-sigma couplings; everything else is dropped.
inline TransformedSchur transform_and_drop(const SparseMatrix& s, std::vector<HouseholderGroup> groups,
                                           const std::vector<double>& t_sep, int threads = 1) {
  const int m = s.rows();
  require_dims(s.cols() == m && static_cast<int>(t_sep.size()) == m, "transform_and_drop");
  TransformedSchur tr;
  std::vector<int> group_of(m, -1), pos_of(m, -1);
  for (const auto& h : groups)
    for (int k = 0; k < h.size(); ++k) {
      if (group_of[h.members[k]] >= 0) throw Error("separator node in two groups");
      group_of[h.members[k]] = h.group;
      pos_of[h.members[k]] = k;
    }
  for (int i = 0; i < m; ++i)
    if (group_of[i] < 0) throw Error("separator node without group");

  const int ng = static_cast<int>(groups.size());
  std::vector<int> by_sigma(ng);
  for (int k = 0; k < ng; ++k) by_sigma[k] = k;
  std::sort(by_sigma.begin(), by_sigma.end(), [&](int a, int b) { return groups[a].sigma < groups[b].sigma; });
  tr.rank.assign(ng, -1);
  tr.sigma.resize(ng);
  for (int r = 0; r < ng; ++r) {
    tr.rank[by_sigma[r]] = r;
    tr.sigma[r] = groups[by_sigma[r]].sigma;
  }

  std::vector<std::vector<double>> w(ng);
  tr.test_vector.assign(ng, 0.0);
  for (int k = 0; k < ng; ++k) {
    w[k] = groups[k].first_column();
    std::vector<double> e;
    for (int mbr : groups[k].members) e.push_back(t_sep[mbr]);
    tr.test_vector[tr.rank[k]] = groups[k].reduced_value(e.data());
  }

  std::vector<Triplet> t;
  t.reserve(s.nnz());
  for (int i = 0; i < m; ++i) {
    int gi = group_of[i];
    double wi = w[gi][pos_of[i]];
    for (int q = s.row_begin(i); q < s.row_end(i); ++q) {
      int j = s.col_indices()[q];
      int gj = group_of[j];
      t.push_back({tr.rank[gi], tr.rank[gj], wi * s.values()[q] * w[gj][pos_of[j]]});
    }
  }
  tr.reduced = SparseMatrix::from_triplets(ng, ng, std::move(t), true);

  tr.blocks.resize(ng);
  parallel_for(ng, threads, [&](int k) {
    const auto& h = groups[k];
    const int n = h.size();
    if (n == 1) return;
    DenseMatrix b(n, n);
    for (int a = 0; a < n; ++a)
      for (int q = s.row_begin(h.members[a]); q < s.row_end(h.members[a]); ++q) {
        int j = s.col_indices()[q];
        if (group_of[j] == k) b(a, pos_of[j]) = s.values()[q];
      }
    // H B H, columns then rows.
    std::vector<double> col(n);
    for (int c = 0; c < n; ++c) {
      for (int a = 0; a < n; ++a) col[a] = b(a, c);
      h.apply(col.data());
      for (int a = 0; a < n; ++a) b(a, c) = col[a];
    }
    for (int a = 0; a < n; ++a) h.apply(&b(a, 0));
    DenseMatrix nonsigma(n - 1, n - 1);
    for (int a = 1; a < n; ++a)
      for (int c = 1; c < n; ++c) nonsigma(a - 1, c - 1) = b(a, c);
    tr.blocks[k] = DenseLU(std::move(nonsigma), 1e-12, k);
  });
  tr.groups = std::move(groups);
  return tr;
}

}  // namespace mlilu
