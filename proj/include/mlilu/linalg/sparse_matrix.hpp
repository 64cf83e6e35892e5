// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mlilu/error.hpp"

namespace mlilu {

struct Triplet {
  int row;
  int col;
  double value;
};

// Compressed sparse row storage. Column indices are strictly increasing in
// every row; entries that were never assembled are not stored.
class SparseMatrix {
 public:
  SparseMatrix() : offsets_(1, 0) {}

  SparseMatrix(int nrows, int ncols, std::vector<int> offsets, std::vector<int> cols,
               std::vector<double> vals)
      : nrows_(nrows),
        ncols_(ncols),
        offsets_(std::move(offsets)),
        cols_(std::move(cols)),
        vals_(std::move(vals)) {
    validate();
  }

  static SparseMatrix identity(int n) {
    std::vector<int> off(n + 1), cols(n);
    for (int i = 0; i <= n; ++i) off[i] = i;
    for (int i = 0; i < n; ++i) cols[i] = i;
    return SparseMatrix(n, n, std::move(off), std::move(cols), std::vector<double>(n, 1.0));
  }

  // Duplicates are summed. With drop_zeros, entries that sum to exactly zero
  // are removed.
  static SparseMatrix from_triplets(int nrows, int ncols, std::vector<Triplet> t,
                                    bool drop_zeros = false) {
    for (const auto& e : t)
      if (e.row < 0 || e.row >= nrows || e.col < 0 || e.col >= ncols)
        throw DimensionMismatch("triplet index out of range");
    std::stable_sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<int> off(nrows + 1, 0), cols;
    std::vector<double> vals;
    cols.reserve(t.size());
    vals.reserve(t.size());
    std::size_t p = 0;
    for (int r = 0; r < nrows; ++r) {
      while (p < t.size() && t[p].row == r) {
        int c = t[p].col;
        double v = 0.0;
        while (p < t.size() && t[p].row == r && t[p].col == c) v += t[p++].value;
        if (drop_zeros && v == 0.0) continue;
        cols.push_back(c);
        vals.push_back(v);
      }
      off[r + 1] = static_cast<int>(cols.size());
    }
    return SparseMatrix(nrows, ncols, std::move(off), std::move(cols), std::move(vals));
  }

  static SparseMatrix from_dense(int nrows, int ncols, const std::vector<double>& rowmajor) {
    std::vector<Triplet> t;
    for (int i = 0; i < nrows; ++i)
      for (int j = 0; j < ncols; ++j)
        if (double v = rowmajor[static_cast<std::size_t>(i) * ncols + j]; v != 0.0)
          t.push_back({i, j, v});
    return from_triplets(nrows, ncols, std::move(t));
  }

  int rows() const { return nrows_; }
  int cols() const { return ncols_; }
  int nnz() const { return static_cast<int>(cols_.size()); }
  const std::vector<int>& row_offsets() const { return offsets_; }
  const std::vector<int>& col_indices() const { return cols_; }
  const std::vector<double>& values() const { return vals_; }
  std::vector<double>& values() { return vals_; }

  int row_begin(int i) const { return offsets_[i]; }
  int row_end(int i) const { return offsets_[i + 1]; }

  double at(int i, int j) const {
    auto b = cols_.begin() + offsets_[i], e = cols_.begin() + offsets_[i + 1];
    auto it = std::lower_bound(b, e, j);
    return (it != e && *it == j) ? vals_[it - cols_.begin()] : 0.0;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : vals_) m = std::max(m, std::abs(v));
    return m;
  }

  std::vector<double> to_dense() const {
    std::vector<double> d(static_cast<std::size_t>(nrows_) * ncols_, 0.0);
    for (int i = 0; i < nrows_; ++i)
      for (int p = offsets_[i]; p < offsets_[i + 1]; ++p)
        d[static_cast<std::size_t>(i) * ncols_ + cols_[p]] = vals_[p];
    return d;
  }

  SparseMatrix transpose() const {
    std::vector<int> off(ncols_ + 1, 0);
    for (int c : cols_) ++off[c + 1];
    for (int j = 0; j < ncols_; ++j) off[j + 1] += off[j];
    std::vector<int> next(off.begin(), off.end() - 1), cols(nnz());
    std::vector<double> vals(nnz());
    for (int i = 0; i < nrows_; ++i)
      for (int p = offsets_[i]; p < offsets_[i + 1]; ++p) {
        int q = next[cols_[p]]++;
        cols[q] = i;
        vals[q] = vals_[p];
      }
    return SparseMatrix(ncols_, nrows_, std::move(off), std::move(cols), std::move(vals));
  }

  // Rows `r` and columns `c` of this matrix, renumbered by their position in
  // the lists.
  SparseMatrix submatrix(const std::vector<int>& r, const std::vector<int>& c) const {
    std::vector<int> map(ncols_, -1);
    for (std::size_t j = 0; j < c.size(); ++j) map[c[j]] = static_cast<int>(j);
    std::vector<int> off(r.size() + 1, 0), cols;
    std::vector<double> vals;
    std::vector<std::pair<int, double>> row;
    for (std::size_t i = 0; i < r.size(); ++i) {
      row.clear();
      for (int p = offsets_[r[i]]; p < offsets_[r[i] + 1]; ++p)
        if (int m = map[cols_[p]]; m >= 0) row.emplace_back(m, vals_[p]);
      std::sort(row.begin(), row.end());
      for (auto& [m, v] : row) {
        cols.push_back(m);
        vals.push_back(v);
      }
      off[i + 1] = static_cast<int>(cols.size());
    }
    return SparseMatrix(static_cast<int>(r.size()), static_cast<int>(c.size()), std::move(off),
                        std::move(cols), std::move(vals));
  }

  // Removes stored entries with |value| <= threshold.
  SparseMatrix pruned(double threshold) const {
    std::vector<int> off(nrows_ + 1, 0), cols;
    std::vector<double> vals;
    for (int i = 0; i < nrows_; ++i) {
      for (int p = offsets_[i]; p < offsets_[i + 1]; ++p)
        if (std::abs(vals_[p]) > threshold) {
          cols.push_back(cols_[p]);
          vals.push_back(vals_[p]);
        }
      off[i + 1] = static_cast<int>(cols.size());
    }
    return SparseMatrix(nrows_, ncols_, std::move(off), std::move(cols), std::move(vals));
  }

  bool operator==(const SparseMatrix& o) const {
    return nrows_ == o.nrows_ && ncols_ == o.ncols_ && offsets_ == o.offsets_ &&
           cols_ == o.cols_ && vals_ == o.vals_;
  }

 private:
  void validate() const {
    if (nrows_ < 0 || ncols_ < 0 || offsets_.size() != static_cast<std::size_t>(nrows_) + 1 ||
        offsets_.front() != 0 || offsets_.back() != static_cast<int>(cols_.size()) ||
        cols_.size() != vals_.size())
      throw DimensionMismatch("malformed CSR arrays");
    for (int i = 0; i < nrows_; ++i) {
      if (offsets_[i] > offsets_[i + 1]) throw DimensionMismatch("CSR offsets decrease");
      for (int p = offsets_[i]; p < offsets_[i + 1]; ++p) {
        if (cols_[p] < 0 || cols_[p] >= ncols_) throw DimensionMismatch("CSR column out of range");
        if (p > offsets_[i] && cols_[p] <= cols_[p - 1])
          throw DimensionMismatch("CSR columns not strictly increasing");
      }
    }
  }

  int nrows_ = 0;
  int ncols_ = 0;
  std::vector<int> offsets_;
  std::vector<int> cols_;
  std::vector<double> vals_;
};

inline void matvec(const SparseMatrix& a, const double* x, double* y) {
  const auto& off = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int p = off[i]; p < off[i + 1]; ++p) s += vals[p] * x[cols[p]];
    y[i] = s;
  }
}

inline std::vector<double> matvec(const SparseMatrix& a, const std::vector<double>& x) {
  require_dims(static_cast<int>(x.size()) == a.cols(), "matvec");
  std::vector<double> y(a.rows());
  matvec(a, x.data(), y.data());
  return y;
}

// C = alpha*A + beta*B with the union pattern.
inline SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0,
                        double beta = 1.0) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  std::vector<int> off(a.rows() + 1, 0), cols;
  std::vector<double> vals;
  for (int i = 0; i < a.rows(); ++i) {
    int p = a.row_begin(i), pe = a.row_end(i), q = b.row_begin(i), qe = b.row_end(i);
    while (p < pe || q < qe) {
      int ca = p < pe ? a.col_indices()[p] : std::numeric_limits<int>::max();
      int cb = q < qe ? b.col_indices()[q] : std::numeric_limits<int>::max();
      if (ca < cb) {
        cols.push_back(ca);
        vals.push_back(alpha * a.values()[p++]);
      } else if (cb < ca) {
        cols.push_back(cb);
        vals.push_back(beta * b.values()[q++]);
      } else {
        cols.push_back(ca);
        vals.push_back(alpha * a.values()[p++] + beta * b.values()[q++]);
      }
    }
    off[i + 1] = static_cast<int>(cols.size());
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(off), std::move(cols), std::move(vals));
}

// Diagonal scaling diag(dr) * A * diag(dc). The factor dr[i]*dc[j] is formed
// first so that A_ij and A_ji of a symmetric pattern scale identically.
inline SparseMatrix scale(const SparseMatrix& a, const std::vector<double>& dr,
                          const std::vector<double>& dc) {
  require_dims(static_cast<int>(dr.size()) == a.rows() && static_cast<int>(dc.size()) == a.cols(),
               "scale");
  std::vector<double> v = a.values();
  for (int i = 0; i < a.rows(); ++i)
    for (int p = a.row_begin(i); p < a.row_end(i); ++p) v[p] *= dr[i] * dc[a.col_indices()[p]];
  return SparseMatrix(a.rows(), a.cols(), a.row_offsets(), a.col_indices(), std::move(v));
}

// ---------------------------------------------------------------------------
// MatrixMarket coordinate format (real general; symmetric files are expanded)

inline void write_matrix_market(std::ostream& os, const SparseMatrix& a) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < a.rows(); ++i)
    for (int p = a.row_begin(i); p < a.row_end(i); ++p)
      os << i + 1 << ' ' << a.col_indices()[p] + 1 << ' ' << a.values()[p] << '\n';
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& a) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_matrix_market(os, a);
  if (!os) throw Error("write failed: " + path);
}

inline SparseMatrix read_matrix_market(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("MatrixMarket: empty input");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  if (tag != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate")
    throw Error("MatrixMarket: only coordinate matrices are supported");
  field = lower(field);
  symmetry = lower(symmetry);
  bool pattern = field == "pattern";
  if (!pattern && field != "real" && field != "integer" && field != "double")
    throw Error("MatrixMarket: unsupported field " + field);
  bool symmetric = symmetry == "symmetric";
  bool skew = symmetry == "skew-symmetric";
  if (!symmetric && !skew && symmetry != "general")
    throw Error("MatrixMarket: unsupported symmetry " + symmetry);
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '%') break;
  std::istringstream header(line);
  long nr = 0, nc = 0, nz = 0;
  if (!(header >> nr >> nc >> nz)) throw Error("MatrixMarket: bad size line");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nz) * (symmetric || skew ? 2 : 1));
  for (long k = 0; k < nz; ++k) {
    long i, j;
    double v = 1.0;
    if (!(is >> i >> j)) throw Error("MatrixMarket: truncated entry list");
    if (!pattern && !(is >> v)) throw Error("MatrixMarket: missing value");
    t.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1), v});
    if ((symmetric || skew) && i != j)
      t.push_back({static_cast<int>(j - 1), static_cast<int>(i - 1), skew ? -v : v});
  }
  return SparseMatrix::from_triplets(static_cast<int>(nr), static_cast<int>(nc), std::move(t));
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_matrix_market(is);
}

inline void write_vector(const std::string& path, const std::vector<double>& v) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << std::setprecision(17);
  for (double x : v) os << x << '\n';
}

// One value per line, as written by write_vector.
inline std::vector<double> read_vector(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::vector<double> v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '%') continue;
    try {
      v.push_back(std::stod(line));
    } catch (const std::logic_error&) {
      throw Error("bad vector entry '" + line + "' in " + path);
    }
  }
  return v;
}

}  // namespace mlilu
