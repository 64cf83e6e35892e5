// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mlilu/error.hpp"

namespace mlilu {

// Row-major dense matrix.
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// LU with partial pivoting, in place.
class DenseLU {
 public:
  DenseLU() = default;

  explicit DenseLU(DenseMatrix a, double pivot_tol = 1e-12, int block_id = -1)
      : lu_(std::move(a)), piv_(lu_.rows) {
    require_dims(lu_.rows == lu_.cols, "DenseLU");
    const int n = lu_.rows;
    std::vector<double> colmax(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) colmax[j] = std::max(colmax[j], std::abs(lu_(i, j)));
    for (int k = 0; k < n; ++k) {
      int p = k;
      double m = std::abs(lu_(k, k));
      for (int i = k + 1; i < n; ++i)
        if (double v = std::abs(lu_(i, k)); v > m) {
          m = v;
          p = i;
        }
      if (m <= pivot_tol * colmax[k] || colmax[k] == 0.0)
        throw SingularBlock(block_id, k,
                            "singular dense block " + std::to_string(block_id) + " at column " + std::to_string(k));
      piv_[k] = p;
      if (p != k)
        for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
      double d = lu_(k, k);
      for (int i = k + 1; i < n; ++i) {
        double l = lu_(i, k) /= d;
        if (l == 0.0) continue;
        double* ri = &lu_(i, 0);
        const double* rk = &lu_(k, 0);
        for (int j = k + 1; j < n; ++j) ri[j] -= l * rk[j];
      }
    }
  }

  int size() const { return lu_.rows; }

  void solve_inplace(double* b) const {
    const int n = lu_.rows;
    for (int k = 0; k < n; ++k)
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    for (int i = 0; i < n; ++i) {
      double s = b[i];
      const double* r = lu_.data.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < i; ++j) s -= r[j] * b[j];
      b[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = b[i];
      const double* r = lu_.data.data() + static_cast<std::size_t>(i) * n;
      for (int j = i + 1; j < n; ++j) s -= r[j] * b[j];
      b[i] = s / r[i];
    }
  }

  std::vector<double> solve(std::vector<double> b) const {
    require_dims(static_cast<int>(b.size()) == size(), "DenseLU::solve");
    solve_inplace(b.data());
    return b;
  }

 private:
  DenseMatrix lu_;
  std::vector<int> piv_;
};

}  // namespace mlilu
