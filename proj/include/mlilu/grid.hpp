// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "mlilu/error.hpp"

namespace mlilu {

enum class VarKind : unsigned char { U = 0, V = 1, W = 2, P = 3 };

inline char kind_char(VarKind k) { return "UVWP"[static_cast<int>(k)]; }

inline bool is_velocity(VarKind k) { return k != VarKind::P; }

struct VarIndex {
  int i = 0;
  int j = 0;
  int k = 0;
  VarKind kind = VarKind::U;

  bool operator==(const VarIndex&) const = default;
};

// Arakawa C-grid on the unit square/cube. u sits on the east face of a cell,
// v on the north face and w on the top face; p at the centre. Unknowns are
// numbered cell by cell (i fastest, then j, then k) with u, v, (w), p inside
// each cell.
struct StaggeredGrid {
  int dim = 2;
  int nx = 0;
  int ny = 0;
  int nz = 1;

  StaggeredGrid() = default;
  StaggeredGrid(int d, int x, int y, int z = 1) : dim(d), nx(x), ny(y), nz(d == 2 ? 1 : z) {
    if (dim != 2 && dim != 3) throw Error("grid dimension must be 2 or 3");
    if (nx < 1 || ny < 1 || nz < 1 || (dim == 3 && z < 1)) throw Error("grid sizes must be positive");
  }

  static StaggeredGrid square(int n) { return {2, n, n}; }
  static StaggeredGrid cube(int n) { return {3, n, n, n}; }

  int vars_per_cell() const { return dim + 1; }
  int num_cells() const { return nx * ny * nz; }
  int num_unknowns() const { return num_cells() * vars_per_cell(); }
  int extent(int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  double h() const { return 1.0 / nx; }

  int slot(VarKind kind) const { return kind == VarKind::P ? dim : static_cast<int>(kind); }
  VarKind kind_of_slot(int s) const { return s == dim ? VarKind::P : static_cast<VarKind>(s); }

  bool contains(int i, int j, int k) const {
    return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
  }
  bool contains(const std::array<int, 3>& c) const { return contains(c[0], c[1], c[2]); }

  int cell_index(int i, int j, int k) const { return i + nx * (j + ny * k); }
  int cell_index(const std::array<int, 3>& c) const { return cell_index(c[0], c[1], c[2]); }
  std::array<int, 3> cell_coords(int cell) const {
    return {cell % nx, (cell / nx) % ny, cell / (nx * ny)};
  }

  int id(int cell, VarKind kind) const { return cell * vars_per_cell() + slot(kind); }
  int cell_of(int id) const { return id / vars_per_cell(); }
  VarKind kind_of(int id) const { return kind_of_slot(id % vars_per_cell()); }
};

inline int linear_index(const StaggeredGrid& g, const VarIndex& v) {
  if (!g.contains(v.i, v.j, v.k) || (v.kind == VarKind::W && g.dim != 3))
    throw Error("variable index out of bounds");
  return g.id(g.cell_index(v.i, v.j, v.k), v.kind);
}

inline VarIndex decode_index(const StaggeredGrid& g, int id) {
  if (id < 0 || id >= g.num_unknowns()) throw Error("global id out of range: " + std::to_string(id));
  auto c = g.cell_coords(g.cell_of(id));
  return {c[0], c[1], c[2], g.kind_of(id)};
}

// A velocity on a wall (the east face of the last column for u, and so on)
// is kept as an unknown but carries no coupling; its value is zero.
inline bool is_wall_velocity(const StaggeredGrid& g, int id) {
  VarKind kind = g.kind_of(id);
  if (!is_velocity(kind)) return false;
  int axis = static_cast<int>(kind);
  auto c = g.cell_coords(g.cell_of(id));
  return c[axis] == g.extent(axis) - 1;
}

}  // namespace mlilu
