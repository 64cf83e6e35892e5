// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "mlilu/error.hpp"
#include "mlilu/grid.hpp"
#include "mlilu/linalg/sparse_matrix.hpp"

namespace mlilu {

enum class PartitionKind { Cartesian, Skew, Parallelepiped };

inline const char* partition_name(PartitionKind k) {
  switch (k) {
    case PartitionKind::Cartesian: return "cartesian";
    case PartitionKind::Skew: return "skew";
    case PartitionKind::Parallelepiped: return "parallelepiped";
  }
  return "?";
}

enum class WSide { NotApplicable, Inside, Outside };

struct Subdomain {
  int id = 0;
  int level = 1;
  std::array<int, 3> lattice{};  // lattice index at this level
  int size = 0;                  // separator length s at this level
  std::vector<int> cells;
};

struct SeparatorGroup {
  int id = 0;
  VarKind kind = VarKind::U;
  std::vector<int> adjacent;  // subdomain ids
  std::vector<int> members;   // positions in NodeClassification::nodes, ascending
  WSide side = WSide::NotApplicable;
};

// Classification of the unknowns that live on one level. Level 1 holds every
// grid unknown; deeper levels hold the survivors of the previous level.
// `nodes` is sorted by global id so positions and ids order the same way.
struct NodeClassification {
  std::vector<int> nodes;
  std::vector<int> subdomain;  // interior subdomain, -1 for separators
  std::vector<int> group;      // separator group, -1 for interior nodes
  std::vector<char> retained;  // retained pressure of its subdomain
  std::vector<std::vector<int>> touch;  // subdomains reached by the node's stencil
  std::vector<SeparatorGroup> groups;
  int num_subdomains = 0;

  int size() const { return static_cast<int>(nodes.size()); }
  bool is_interior(int i) const { return subdomain[i] >= 0; }
  bool is_separator(int i) const { return group[i] >= 0; }

  std::vector<std::vector<int>> interiors() const {
    std::vector<std::vector<int>> out(num_subdomains);
    for (int i = 0; i < size(); ++i)
      if (subdomain[i] >= 0) out[subdomain[i]].push_back(i);
    return out;
  }
  std::vector<int> separators() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (group[i] >= 0) out.push_back(i);
    return out;
  }
};

struct Partition {
  StaggeredGrid grid;
  PartitionKind kind = PartitionKind::Cartesian;
  int level = 1;
  int size = 0;  // separator length at this level
  std::vector<Subdomain> subdomains;
  std::vector<int> cell_subdomain;
  NodeClassification classes;

  int num_subdomains() const { return static_cast<int>(subdomains.size()); }
};

namespace detail {

inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Unscaled lattice coordinates of a cell; floor-dividing them by the level's
// separator length gives the subdomain index.
//   skew:           (i + j, i - j)
//   parallelepiped: (i + j + 1, i - j + 3, i + j + k + 1)
inline std::array<int, 3> lattice_coords(PartitionKind kind, const std::array<int, 3>& c) {
  switch (kind) {
    case PartitionKind::Cartesian: return c;
    case PartitionKind::Skew: return {c[0] + c[1], c[0] - c[1], 0};
    case PartitionKind::Parallelepiped: return {c[0] + c[1] + 1, c[0] - c[1] + 3, c[0] + c[1] + c[2] + 1};
  }
  return c;
}

inline std::array<int, 3> lattice_index(PartitionKind kind, const std::array<int, 3>& c, int s) {
  auto l = lattice_coords(kind, c);
  return {floor_div(l[0], s), floor_div(l[1], s), floor_div(l[2], s)};
}

inline std::array<int, 3> shifted(std::array<int, 3> c, int axis, int s) {
  c[axis] += s;
  return c;
}

// Geometry of a velocity unknown: its owning cell and the cell across the face.
struct FaceCells {
  std::array<int, 3> minus;
  std::array<int, 3> plus;
};

inline FaceCells face_cells(const StaggeredGrid& g, int id) {
  auto c = g.cell_coords(g.cell_of(id));
  return {c, shifted(c, static_cast<int>(g.kind_of(id)), 1)};
}

inline bool active_velocity(const StaggeredGrid& g, const std::array<int, 3>& c, int axis) {
  return g.contains(c) && c[axis] < g.extent(axis) - 1;
}

}  // namespace detail

// Unknowns coupled to `id` by the Navier-Stokes Jacobian stencil (Laplacian,
// gradient, divergence and both convection terms), excluding `id` itself.
inline std::vector<int> stencil_neighbors(const StaggeredGrid& g, int id) {
  using detail::shifted;
  std::vector<int> out;
  VarKind kind = g.kind_of(id);
  auto c = g.cell_coords(g.cell_of(id));
  auto vel = [&](const std::array<int, 3>& cc, int axis) {
    if (detail::active_velocity(g, cc, axis)) out.push_back(g.id(g.cell_index(cc), static_cast<VarKind>(axis)));
  };
  if (kind == VarKind::P) {
    for (int d = 0; d < g.dim; ++d) {
      vel(c, d);
      vel(shifted(c, d, -1), d);
    }
  } else {
    int d = static_cast<int>(kind);
    if (!detail::active_velocity(g, c, d)) return out;
    out.push_back(g.id(g.cell_index(c), VarKind::P));
    out.push_back(g.id(g.cell_index(shifted(c, d, 1)), VarKind::P));
    for (int a = 0; a < g.dim; ++a)
      for (int s : {-1, 1}) {
        vel(shifted(c, a, s), d);
        if (a == d) continue;
        auto f1 = s > 0 ? c : shifted(c, a, -1);
        vel(f1, a);
        vel(shifted(f1, d, 1), a);
      }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace detail {

inline std::vector<Subdomain> build_subdomains(const StaggeredGrid& g, PartitionKind kind, int size, int level,
                                               std::vector<int>& cell_subdomain) {
  std::map<std::array<int, 3>, int> ids;
  std::vector<std::array<int, 3>> idx(g.num_cells());
  for (int c = 0; c < g.num_cells(); ++c) {
    idx[c] = lattice_index(kind, g.cell_coords(c), size);
    ids.emplace(idx[c], 0);
  }
  std::vector<Subdomain> subs;
  for (auto& [key, id] : ids) {
    id = static_cast<int>(subs.size());
    Subdomain s;
    s.id = id;
    s.level = level;
    s.lattice = key;
    s.size = size;
    subs.push_back(std::move(s));
  }
  cell_subdomain.assign(g.num_cells(), -1);
  for (int c = 0; c < g.num_cells(); ++c) {
    int id = ids[idx[c]];
    cell_subdomain[c] = id;
    subs[id].cells.push_back(c);
  }
  return subs;
}

inline int subdomain_of_cell(const StaggeredGrid& g, const std::vector<int>& cell_subdomain,
                             const std::array<int, 3>& c) {
  return g.contains(c) ? cell_subdomain[g.cell_index(c)] : -1;
}

// Separator decision for an active velocity at level 1.
// `alternate` flips the choice with the parity of the z index (parallelepiped
// partitions only).
inline bool is_level1_separator(const StaggeredGrid& g, const std::vector<int>& sub, int id, bool alternate) {
  int d = static_cast<int>(g.kind_of(id));
  auto [cm, cp] = face_cells(g, id);
  int alpha = subdomain_of_cell(g, sub, cm);
  if (alpha != subdomain_of_cell(g, sub, cp)) return true;
  // A same-kind neighbour across a transverse direction that lies entirely
  // inside another subdomain: exactly one of the two must be a separator.
  bool odd = alternate && cm[2] % 2 == 1;
  for (int t = 0; t < g.dim; ++t) {
    if (t == d) continue;
    for (int s : {-1, 1}) {
      auto nm = shifted(cm, t, s);
      if (!active_velocity(g, nm, d)) continue;
      int beta = subdomain_of_cell(g, sub, nm);
      if (beta == alpha || beta != subdomain_of_cell(g, sub, shifted(nm, d, 1))) continue;
      if ((alpha < beta) != odd) return true;
    }
  }
  return false;
}

using GroupKey = std::tuple<int, std::vector<int>, int, int>;

// Groups separators by (kind, touch set, subdomains of the two face cells).
inline void build_groups(const StaggeredGrid& g, PartitionKind kind, const std::vector<int>& cell_subdomain,
                         NodeClassification& nc) {
  std::map<GroupKey, int> index;
  nc.groups.clear();
  nc.group.assign(nc.size(), -1);
  for (int i = 0; i < nc.size(); ++i) {
    if (nc.subdomain[i] >= 0) continue;
    int gid = nc.nodes[i];
    VarKind k = g.kind_of(gid);
    int sm = -1, sp = -1;
    if (is_velocity(k)) {
      auto fc = face_cells(g, gid);
      sm = subdomain_of_cell(g, cell_subdomain, fc.minus);
      sp = subdomain_of_cell(g, cell_subdomain, fc.plus);
    } else {
      sm = nc.touch[i].front();
    }
    GroupKey key{static_cast<int>(k), nc.touch[i], sm, sp};
    auto [it, fresh] = index.emplace(key, static_cast<int>(nc.groups.size()));
    if (fresh) {
      SeparatorGroup grp;
      grp.id = it->second;
      grp.kind = k;
      grp.adjacent = nc.touch[i];
      if (kind == PartitionKind::Parallelepiped && k == VarKind::W)
        grp.side = sm == sp ? WSide::Inside : WSide::Outside;
      nc.groups.push_back(std::move(grp));
    }
    nc.group[i] = it->second;
    nc.groups[it->second].members.push_back(i);
  }
}

// Splits every group into its connected pieces, where two members are
// neighbours when their cells share at least a vertex. Needs a level-1
// classification (position == global id).
inline void split_disconnected_groups(const StaggeredGrid& g, NodeClassification& nc) {
  std::vector<SeparatorGroup> out;
  std::vector<int> comp(nc.size(), -1);
  const int dz = g.dim == 3 ? 1 : 0;
  for (const auto& grp : nc.groups) {
    int pieces = 0;
    for (int m : grp.members) {
      if (comp[m] >= 0) continue;
      std::vector<int> stack{m};
      comp[m] = pieces;
      while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        auto c = g.cell_coords(g.cell_of(x));
        for (int a = -1; a <= 1; ++a)
          for (int b = -1; b <= 1; ++b)
            for (int e = -dz; e <= dz; ++e) {
              std::array<int, 3> d{c[0] + a, c[1] + b, c[2] + e};
              if (!g.contains(d)) continue;
              int y = g.id(g.cell_index(d), grp.kind);
              if (nc.group[y] != grp.id || comp[y] >= 0) continue;
              comp[y] = pieces;
              stack.push_back(y);
            }
      }
      ++pieces;
    }
    for (int k = 0; k < pieces; ++k) {
      SeparatorGroup piece = grp;
      piece.id = static_cast<int>(out.size());
      piece.members.clear();
      for (int m : grp.members)
        if (comp[m] == k) piece.members.push_back(m);
      out.push_back(std::move(piece));
    }
  }
  for (const auto& grp : out)
    for (int m : grp.members) nc.group[m] = grp.id;
  nc.groups = std::move(out);
}

// Marks the smallest-id interior pressure of every subdomain as retained and
// turns it into a separator.
inline void retain_pressures(const StaggeredGrid& g, NodeClassification& nc) {
  std::vector<char> done(nc.num_subdomains, 0);
  nc.retained.assign(nc.size(), 0);
  for (int i = 0; i < nc.size(); ++i) {
    int s = nc.subdomain[i];
    if (s < 0 || g.kind_of(nc.nodes[i]) != VarKind::P || done[s]) continue;
    done[s] = 1;
    nc.retained[i] = 1;
    nc.subdomain[i] = -1;
    nc.touch[i] = {s};
  }
}

}  // namespace detail

// Level-1 classification from the geometry of the partition.
inline NodeClassification classify_geometric(const StaggeredGrid& g, PartitionKind kind,
                                             const std::vector<int>& cell_subdomain, int num_subdomains) {
  NodeClassification nc;
  const int n = g.num_unknowns();
  nc.num_subdomains = num_subdomains;
  nc.nodes.resize(n);
  nc.subdomain.assign(n, -1);
  nc.touch.assign(n, {});
  for (int id = 0; id < n; ++id) {
    nc.nodes[id] = id;
    int owner = cell_subdomain[g.cell_of(id)];
    VarKind k = g.kind_of(id);
    const bool alternate = kind == PartitionKind::Parallelepiped;
    if (k == VarKind::P || is_wall_velocity(g, id) || !detail::is_level1_separator(g, cell_subdomain, id, alternate)) {
      nc.subdomain[id] = owner;
      continue;
    }
    auto& t = nc.touch[id];
    auto add_cells = [&](int node) {
      auto c = g.cell_coords(g.cell_of(node));
      t.push_back(cell_subdomain[g.cell_of(node)]);
      if (VarKind kk = g.kind_of(node); is_velocity(kk)) {
        int other = detail::subdomain_of_cell(g, cell_subdomain, detail::shifted(c, static_cast<int>(kk), 1));
        if (other >= 0) t.push_back(other);
      }
    };
    add_cells(id);
    for (int nb : stencil_neighbors(g, id)) add_cells(nb);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
  }
  detail::retain_pressures(g, nc);
  detail::build_groups(g, kind, cell_subdomain, nc);
  detail::split_disconnected_groups(g, nc);
  return nc;
}

// Throws PartitionError if two interior nodes of different subdomains are
// coupled in `a` (a matrix over the classification's nodes).
inline void check_decoupling(const NodeClassification& nc, const SparseMatrix& a) {
  require_dims(a.rows() == nc.size() && a.cols() == nc.size(), "check_decoupling");
  for (int i = 0; i < a.rows(); ++i) {
    int si = nc.subdomain[i];
    if (si < 0) continue;
    for (int p = a.row_begin(i); p < a.row_end(i); ++p) {
      int j = a.col_indices()[p];
      int sj = nc.subdomain[j];
      if (sj >= 0 && sj != si && a.values()[p] != 0.0)
        throw PartitionError("decoupling violated: interior nodes " + std::to_string(nc.nodes[i]) + " (subdomain " +
                             std::to_string(si) + ") and " + std::to_string(nc.nodes[j]) + " (subdomain " +
                             std::to_string(sj) + ") are coupled");
    }
  }
}

namespace detail {

inline void check_divisible(const StaggeredGrid& g, int s, const char* what) {
  for (int a = 0; a < g.dim; ++a)
    if (g.extent(a) % s != 0)
      throw PartitionError(std::string(what) + ": grid extent " + std::to_string(g.extent(a)) +
                           " is not a multiple of " + std::to_string(s));
}

inline Partition make_partition(const StaggeredGrid& g, PartitionKind kind, int s) {
  Partition p;
  p.grid = g;
  p.kind = kind;
  p.level = 1;
  p.size = s;
  p.subdomains = build_subdomains(g, kind, s, 1, p.cell_subdomain);
  p.classes = classify_geometric(g, kind, p.cell_subdomain, p.num_subdomains());
  return p;
}

}  // namespace detail

inline Partition partition_cartesian(const StaggeredGrid& g, int s) {
  if (s < 1) throw PartitionError("cartesian: subdomain size must be positive");
  detail::check_divisible(g, s, "cartesian");
  return detail::make_partition(g, PartitionKind::Cartesian, s);
}

inline Partition partition_skew2d(const StaggeredGrid& g, int s) {
  if (g.dim != 2) throw PartitionError("skew: 2D grids only");
  if (s < 4 || s % 2 != 0) throw PartitionError("skew: separator length must be even and at least 4");
  detail::check_divisible(g, s, "skew");
  return detail::make_partition(g, PartitionKind::Skew, s);
}

inline Partition partition_parallelepiped3d(const StaggeredGrid& g, int s) {
  if (g.dim != 3) throw PartitionError("parallelepiped: 3D grids only");
  if (s < 4 || s % 2 != 0) throw PartitionError("parallelepiped: cube size must be even and at least 4");
  detail::check_divisible(g, s, "parallelepiped");
  return detail::make_partition(g, PartitionKind::Parallelepiped, s);
}

inline Partition make_partition(const StaggeredGrid& g, PartitionKind kind, int s) {
  switch (kind) {
    case PartitionKind::Cartesian: return partition_cartesian(g, s);
    case PartitionKind::Skew: return partition_skew2d(g, s);
    case PartitionKind::Parallelepiped: return partition_parallelepiped3d(g, s);
  }
  throw PartitionError("unknown partition kind");
}

// One V_Sigma node per group: the first member.
inline std::vector<int> default_survivors(const NodeClassification& nc) {
  std::vector<int> out;
  for (const auto& grp : nc.groups) out.push_back(grp.members.front());
  std::sort(out.begin(), out.end());
  return out;
}

// Next level: subdomains grow by `factor` in every lattice direction and the
// surviving nodes of this level (positions in p.classes.nodes) are
// reclassified. A survivor stays a separator when its stencil reached more
// than one of the new subdomains.
inline Partition coarsen(const Partition& p, int factor, std::vector<int> survivors = {}) {
  if (factor < 2) throw PartitionError("coarsening factor must be at least 2");
  if (p.num_subdomains() <= 1) throw PartitionError("cannot coarsen beyond a single subdomain");
  if (survivors.empty()) survivors = default_survivors(p.classes);
  const auto& g = p.grid;
  Partition q;
  q.grid = g;
  q.kind = p.kind;
  q.level = p.level + 1;
  q.size = p.size * factor;
  q.subdomains = detail::build_subdomains(g, p.kind, q.size, q.level, q.cell_subdomain);
  std::vector<int> parent(p.num_subdomains(), -1);
  for (const auto& s : p.subdomains) {
    int par = q.cell_subdomain[s.cells.front()];
    for (int c : s.cells)
      if (q.cell_subdomain[c] != par) throw PartitionError("coarse subdomains do not nest");
    parent[s.id] = par;
  }

  auto& nc = q.classes;
  const auto& prev = p.classes;
  nc.num_subdomains = q.num_subdomains();
  std::sort(survivors.begin(), survivors.end());
  const int n = static_cast<int>(survivors.size());
  nc.nodes.resize(n);
  nc.subdomain.assign(n, -1);
  nc.touch.assign(n, {});
  for (int i = 0; i < n; ++i) {
    int old = survivors[i];
    if (!prev.is_separator(old)) throw PartitionError("only separator nodes can survive to the next level");
    nc.nodes[i] = prev.nodes[old];
    auto& t = nc.touch[i];
    for (int s : prev.touch[old]) t.push_back(parent[s]);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    if (t.size() == 1) nc.subdomain[i] = t.front();
  }
  detail::retain_pressures(g, nc);
  detail::build_groups(g, p.kind, q.cell_subdomain, nc);
  return q;
}

// Interior pressures whose coupled velocities (through a) are all separators.
// Returns global ids.
inline std::vector<int> detect_isolated_pressures(const StaggeredGrid& g, const NodeClassification& nc,
                                                  const SparseMatrix& a) {
  require_dims(a.rows() == nc.size(), "detect_isolated_pressures");
  std::vector<char> has_interior_velocity(nc.size(), 0);
  for (int i = 0; i < a.rows(); ++i)
    for (int p = a.row_begin(i); p < a.row_end(i); ++p) {
      int j = a.col_indices()[p];
      if (a.values()[p] == 0.0) continue;
      bool pi = g.kind_of(nc.nodes[i]) == VarKind::P, pj = g.kind_of(nc.nodes[j]) == VarKind::P;
      if (pi && !pj && nc.is_interior(j)) has_interior_velocity[i] = 1;
      if (pj && !pi && nc.is_interior(i)) has_interior_velocity[j] = 1;
    }
  std::vector<int> out;
  for (int i = 0; i < nc.size(); ++i)
    if (nc.is_interior(i) && g.kind_of(nc.nodes[i]) == VarKind::P && !has_interior_velocity[i])
      out.push_back(nc.nodes[i]);
  return out;
}

// On coarse levels a clipped subdomain can keep an interior pressure whose
// velocity couplings all ended up on separators. Such a pressure is moved to
// a singleton separator group, and every separator velocity coupled to it is
// split off into a singleton group too, so the Householder reduction can not
// merge the velocities that tell these pressures apart. Returns the number of
// pressures moved.
inline int promote_isolated_pressures(Partition& p, const SparseMatrix& a) {
  auto& nc = p.classes;
  auto isolated = detect_isolated_pressures(p.grid, nc, a);
  if (isolated.empty()) return 0;
  std::vector<char> single(nc.size(), 0);
  for (int gid : isolated) {
    int i = static_cast<int>(std::lower_bound(nc.nodes.begin(), nc.nodes.end(), gid) - nc.nodes.begin());
    nc.touch[i] = {nc.subdomain[i]};
    nc.subdomain[i] = -1;
    single[i] = 1;
  }
  const SparseMatrix at = a.transpose();
  for (int gid : isolated) {
    int i = static_cast<int>(std::lower_bound(nc.nodes.begin(), nc.nodes.end(), gid) - nc.nodes.begin());
    for (const SparseMatrix* m : {&a, &at})
      for (int q = m->row_begin(i); q < m->row_end(i); ++q) {
        int j = m->col_indices()[q];
        if (m->values()[q] != 0.0 && nc.is_separator(j) && is_velocity(p.grid.kind_of(nc.nodes[j]))) single[j] = 1;
      }
  }
  std::vector<SeparatorGroup> out;
  auto add = [&](SeparatorGroup grp) {
    grp.id = static_cast<int>(out.size());
    out.push_back(std::move(grp));
  };
  for (const auto& grp : nc.groups) {
    SeparatorGroup rest = grp;
    rest.members.clear();
    for (int m : grp.members)
      if (!single[m]) rest.members.push_back(m);
    if (!rest.members.empty()) add(std::move(rest));
    for (int m : grp.members)
      if (single[m]) {
        SeparatorGroup one = grp;
        one.members = {m};
        add(std::move(one));
      }
  }
  for (int gid : isolated) {
    int i = static_cast<int>(std::lower_bound(nc.nodes.begin(), nc.nodes.end(), gid) - nc.nodes.begin());
    SeparatorGroup one;
    one.kind = VarKind::P;
    one.adjacent = nc.touch[i];
    one.members = {i};
    add(std::move(one));
  }
  for (const auto& grp : out)
    for (int m : grp.members) nc.group[m] = grp.id;
  nc.groups = std::move(out);
  return static_cast<int>(isolated.size());
}

inline const char* wside_name(WSide s) {
  switch (s) {
    case WSide::Inside: return "inside";
    case WSide::Outside: return "outside";
    default: return "";
  }
}

// CSV rows: global_id,level,class,index,kind. `index` is the subdomain id for
// interior nodes and the group id otherwise.
inline void write_partition_csv(std::ostream& os, const Partition& p, bool header = true) {
  if (header) os << "global_id,level,class,index,kind\n";
  const auto& nc = p.classes;
  for (int i = 0; i < nc.size(); ++i) {
    const char* cls = nc.is_interior(i) ? "interior" : nc.retained[i] ? "retained" : "separator";
    int idx = nc.is_interior(i) ? nc.subdomain[i] : nc.group[i];
    os << nc.nodes[i] << ',' << p.level << ',' << cls << ',' << idx << ',' << kind_char(p.grid.kind_of(nc.nodes[i]))
       << '\n';
  }
}

}  // namespace mlilu
