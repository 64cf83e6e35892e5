// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "mlilu/error.hpp"

namespace mlilu {

// H = I - beta v v^T with beta = 2 / (v^T v), built so that H e = -sign(e_1)|e| e_1
// for the test vector e on the group. The sigma node is the first member.
struct HouseholderGroup {
  int group = -1;
  std::vector<int> members;
  std::vector<double> v;
  double beta = 0.0;
  int sigma = -1;

  int size() const { return static_cast<int>(members.size()); }

  // x <- H x for a vector gathered over the members.
  void apply(double* x) const {
    if (beta == 0.0) return;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * x[i];
    s *= beta;
    for (std::size_t i = 0; i < v.size(); ++i) x[i] -= s * v[i];
  }

  // Image of the test vector: value left on the sigma node.
  double reduced_value(const double* e) const {
    std::vector<double> x(e, e + size());
    apply(x.data());
    return x[0];
  }

  // First column of H.
  std::vector<double> first_column() const {
    std::vector<double> w(size(), 0.0);
    w[0] = 1.0;
    apply(w.data());
    return w;
  }
};

// `e` holds the test vector restricted to the members (same order).
inline HouseholderGroup build_householder(int group, std::vector<int> members, const std::vector<double>& e) {
  require_dims(!members.empty() && e.size() == members.size(), "build_householder");
  double norm2 = 0.0;
  for (double x : e) norm2 += x * x;
  if (norm2 == 0.0) throw DegenerateGroup("test vector vanishes on separator group " + std::to_string(group));
  HouseholderGroup h;
  h.group = group;
  h.sigma = members.front();
  h.members = std::move(members);
  h.v = e;
  h.v[0] += (e[0] < 0.0 ? -1.0 : 1.0) * std::sqrt(norm2);
  double vv = 0.0;
  for (double x : h.v) vv += x * x;
  h.beta = 2.0 / vv;
  return h;
}

// Identity transformation for groups that are carried over unchanged
// (retained pressures).
inline HouseholderGroup identity_group(int group, int member) {
  HouseholderGroup h;
  h.group = group;
  h.members = {member};
  h.v = {0.0};
  h.beta = 0.0;
  h.sigma = member;
  return h;
}

}  // namespace mlilu
