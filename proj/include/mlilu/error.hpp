// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mlilu {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Raised when a pivot falls below the pivot tolerance. `block` identifies the
// factorized block (subdomain id, or -1 for a stand-alone matrix).
class SingularBlock : public Error {
 public:
  SingularBlock(int block, int column, const std::string& what)
      : Error(what), block_(block), column_(column) {}
  int block() const { return block_; }
  int column() const { return column_; }

 private:
  int block_;
  int column_;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class DegenerateGroup : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Linear or nonlinear iteration that failed to reach its tolerance, or a
// nonlinear iteration that diverged.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

inline void require_dims(bool ok, const char* where) {
  if (!ok) throw DimensionMismatch(std::string("dimension mismatch in ") + where);
}

}  // namespace mlilu
