#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "mlilu/discretize.hpp"
#include "mlilu/partition.hpp"
#include "mlilu/precond/elimination.hpp"
#include "oracle.hpp"

using namespace mlilu;

namespace {

SaddleMatrix stokes(const StaggeredGrid& g) {
  ProblemSpec s;
  s.grid = g;
  return assemble_stokes(s);
}

std::vector<char> pressure_flags(const SaddleMatrix& a) {
  std::vector<char> p(a.size());
  for (int i = 0; i < a.size(); ++i) p[i] = a.is_pressure(i);
  return p;
}

void expect_space_filling(const Partition& p) {
  std::vector<int> seen(p.grid.num_cells(), 0);
  for (const auto& s : p.subdomains)
    for (int c : s.cells) {
      ++seen[c];
      EXPECT_EQ(p.cell_subdomain[c], s.id);
    }
  for (int c = 0; c < p.grid.num_cells(); ++c) ASSERT_EQ(seen[c], 1) << "cell " << c;
}

// Groups partition the separators; members share kind and adjacency set.
void expect_groups_well_formed(const Partition& p) {
  const auto& nc = p.classes;
  std::vector<int> count(nc.size(), 0);
  for (const auto& grp : nc.groups) {
    ASSERT_FALSE(grp.members.empty());
    for (int m : grp.members) {
      ++count[m];
      EXPECT_EQ(nc.group[m], grp.id);
      EXPECT_EQ(p.grid.kind_of(nc.nodes[m]), grp.kind);
    }
  }
  for (int i = 0; i < nc.size(); ++i) {
    EXPECT_EQ(count[i], nc.is_separator(i) ? 1 : 0) << "node " << nc.nodes[i];
    EXPECT_NE(nc.is_separator(i), nc.is_interior(i));
  }
}

// Exactly one retained pressure per subdomain: the smallest-id pressure that
// would otherwise be interior.
void expect_retained_pressures(const Partition& p) {
  const auto& nc = p.classes;
  std::map<int, int> smallest;
  for (int i = 0; i < nc.size(); ++i) {
    if (p.grid.kind_of(nc.nodes[i]) != VarKind::P) continue;
    int owner = p.cell_subdomain[p.grid.cell_of(nc.nodes[i])];
    if (!smallest.count(owner)) smallest[owner] = i;
    if (nc.retained[i]) {
      EXPECT_TRUE(nc.is_separator(i));
    } else {
      EXPECT_TRUE(nc.is_interior(i));
    }
  }
  int retained = 0;
  for (int i = 0; i < nc.size(); ++i) retained += nc.retained[i] ? 1 : 0;
  EXPECT_EQ(retained, p.num_subdomains());
  for (auto [s, i] : smallest) EXPECT_TRUE(nc.retained[i]) << "subdomain " << s;
}

// Group oracle on the graph of an assembled Navier-Stokes Jacobian instead of
// the geometric stencil: a separator's touch set collects the subdomains of
// the cells of the node and of its matrix neighbours (both cells of a
// velocity face). Groups are (kind, touch set, subdomains of the node's own
// face cells, w side) split into vertex-connected pieces.
int matrix_group_count(const Partition& p) {
  const auto& g = p.grid;
  const auto& nc = p.classes;
  ProblemSpec spec;
  spec.grid = g;
  spec.kind = ProblemKind::NavierStokes;
  spec.reynolds = 100.0;
  auto x = oracle::random_vector(g.num_unknowns(), 5);
  const SparseMatrix a = assemble_jacobian(spec, x).matrix;
  const SparseMatrix at = a.transpose();
  auto sub = [&](std::array<int, 3> c) { return g.contains(c) ? p.cell_subdomain[g.cell_index(c)] : -1; };
  auto cells = [&](int id) {
    auto c = g.cell_coords(g.cell_of(id));
    auto d = c;
    if (is_velocity(g.kind_of(id))) ++d[static_cast<int>(g.kind_of(id))];
    return std::pair{sub(c), sub(d)};
  };
  using Key = std::tuple<int, std::set<int>, std::pair<int, int>, int>;
  std::map<Key, std::vector<int>> keys;
  int count = 0;
  for (int i = 0; i < nc.size(); ++i) {
    if (!nc.is_separator(i)) continue;
    if (nc.retained[i]) {
      ++count;
      continue;
    }
    std::set<int> touch;
    auto add = [&](int j) {
      auto [m, q] = cells(j);
      touch.insert(m);
      if (is_velocity(g.kind_of(j)) && q >= 0) touch.insert(q);
    };
    add(i);
    for (const SparseMatrix* m : {&a, &at})
      for (int q = m->row_begin(i); q < m->row_end(i); ++q)
        if (m->col_indices()[q] != i && m->values()[q] != 0.0) add(m->col_indices()[q]);
    auto own = cells(i);
    int side = g.kind_of(i) == VarKind::W && p.kind == PartitionKind::Parallelepiped ? own.first == own.second : -1;
    keys[{static_cast<int>(g.kind_of(i)), touch, own, side}].push_back(i);
  }
  for (auto& [key, members] : keys) {
    std::vector<char> seen(members.size(), 0);
    for (std::size_t s = 0; s < members.size(); ++s) {
      if (seen[s]) continue;
      ++count;
      std::vector<std::size_t> stack{s};
      seen[s] = 1;
      while (!stack.empty()) {
        auto c = g.cell_coords(g.cell_of(members[stack.back()]));
        stack.pop_back();
        for (std::size_t t = 0; t < members.size(); ++t) {
          if (seen[t]) continue;
          auto d = g.cell_coords(g.cell_of(members[t]));
          if (std::abs(c[0] - d[0]) <= 1 && std::abs(c[1] - d[1]) <= 1 && std::abs(c[2] - d[2]) <= 1) {
            seen[t] = 1;
            stack.push_back(t);
          }
        }
      }
    }
  }
  return count;
}

}  // namespace

TEST(PartitionCartesian, TwelveByTwelveHasNineSubdomains) {
  auto p = partition_cartesian(StaggeredGrid::square(12), 4);
  EXPECT_EQ(p.num_subdomains(), 9);
  expect_space_filling(p);
  expect_groups_well_formed(p);
  expect_retained_pressures(p);
}

TEST(PartitionCartesian, WholeGridIsOneSubdomainWithoutSeparators) {
  auto g = StaggeredGrid::square(8);
  auto p = partition_cartesian(g, 8);
  EXPECT_EQ(p.num_subdomains(), 1);
  // Only the retained pressure is left outside the interior.
  EXPECT_EQ(p.classes.separators().size(), 1u);
  EXPECT_EQ(p.classes.groups.size(), 1u);
  EXPECT_EQ(p.classes.groups[0].kind, VarKind::P);
}

TEST(PartitionCartesian, RejectsNonDivisibleSize) {
  EXPECT_THROW(partition_cartesian(StaggeredGrid::square(10), 4), PartitionError);
  EXPECT_THROW(partition_skew2d(StaggeredGrid::square(12), 8), PartitionError);
  EXPECT_THROW(partition_parallelepiped3d(StaggeredGrid::cube(12), 8), PartitionError);
  EXPECT_THROW(partition_skew2d(StaggeredGrid::cube(8), 4), PartitionError);
  EXPECT_THROW(partition_skew2d(StaggeredGrid::square(8), 2), PartitionError);
}

TEST(PartitionCartesian, CornerTouchingSubdomainsIsolatePressures) {
  auto g = StaggeredGrid::square(8);
  auto a = stokes(g);
  auto p = partition_cartesian(g, 4);
  auto iso = detect_isolated_pressures(g, p.classes, a.matrix);
  ASSERT_FALSE(iso.empty());
  // The interior corner is the grid point (4,4); an isolated pressure sits in
  // one of the four cells around it.
  for (int id : iso) {
    auto c = g.cell_coords(g.cell_of(id));
    EXPECT_TRUE((c[0] == 3 || c[0] == 4) && (c[1] == 3 || c[1] == 4)) << c[0] << "," << c[1];
  }
}

TEST(PartitionCartesian, ThreeDimensionalEdgesFormTubes) {
  auto g = StaggeredGrid::cube(8);
  auto a = stokes(g);
  auto p = partition_cartesian(g, 4);
  auto iso = detect_isolated_pressures(g, p.classes, a.matrix);
  ASSERT_GE(iso.size(), 4u);
  std::set<int> cells;
  for (int id : iso) cells.insert(g.cell_of(id));
  // Every isolated pressure has an isolated neighbour along some axis.
  for (int c : cells) {
    auto x = g.cell_coords(c);
    bool tube = false;
    for (int axis = 0; axis < 3 && !tube; ++axis)
      for (int d : {-1, 1}) {
        auto y = x;
        y[axis] += d;
        if (g.contains(y[0], y[1], y[2]) && cells.count(g.cell_index(y))) tube = true;
      }
    EXPECT_TRUE(tube) << x[0] << "," << x[1] << "," << x[2];
  }
}

TEST(PartitionCartesian, GroupCountMatchesMatrixGraphOracle) {
  auto p = partition_cartesian(StaggeredGrid::square(12), 4);
  EXPECT_EQ(static_cast<int>(p.classes.groups.size()), matrix_group_count(p));
}

TEST(PartitionClassify, SingleSubdomainIsAllInterior) {
  for (auto g : {StaggeredGrid::square(6), StaggeredGrid::cube(4)}) {
    auto p = partition_cartesian(g, g.nx);
    const auto& nc = p.classes;
    for (int i = 0; i < nc.size(); ++i)
      if (!nc.retained[i]) EXPECT_TRUE(nc.is_interior(i));
  }
}

TEST(PartitionSkew, TwelveSquaredWithSixHasTwelveSubdomains) {
  auto p = partition_skew2d(StaggeredGrid::square(12), 6);
  EXPECT_EQ(p.num_subdomains(), 12);
  expect_space_filling(p);
  expect_groups_well_formed(p);
  expect_retained_pressures(p);
}

TEST(PartitionSkew, GroupCountMatchesMatrixGraphOracle) {
  for (int n : {12, 16}) {
    auto p = partition_skew2d(StaggeredGrid::square(n), n == 12 ? 6 : 4);
    EXPECT_EQ(static_cast<int>(p.classes.groups.size()), matrix_group_count(p)) << n;
  }
}

TEST(PartitionParallelepiped, GroupCountMatchesMatrixGraphOracle) {
  auto p = partition_parallelepiped3d(StaggeredGrid::cube(8), 4);
  EXPECT_EQ(static_cast<int>(p.classes.groups.size()), matrix_group_count(p));
}

TEST(PartitionSkew, NoIsolatedPressuresAndInteriorsFactorize) {
  for (int n : {8, 16, 32, 64})
    for (int s : {4, 8}) {
      auto g = StaggeredGrid::square(n);
      auto a = stokes(g);
      auto p = partition_skew2d(g, s);
      EXPECT_TRUE(detect_isolated_pressures(g, p.classes, a.matrix).empty()) << n << " " << s;
      auto el = eliminate_interiors(a.matrix, p.classes, pressure_flags(a));
      for (const auto& f : el.subdomains) {
        ASSERT_EQ(f.lu.n, static_cast<int>(f.interior.size()));
        for (int i = 0; i < f.lu.n; ++i) EXPECT_NE(f.lu.upper.at(i, i), 0.0);
      }
    }
}

TEST(PartitionSkew, DecouplingHoldsExhaustively) {
  auto g = StaggeredGrid::square(16);
  auto a = stokes(g);
  auto p = partition_skew2d(g, 4);
  const auto& nc = p.classes;
  EXPECT_NO_THROW(check_decoupling(nc, a.matrix));
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < a.size(); ++j)
      if (nc.is_interior(i) && nc.is_interior(j) && nc.subdomain[i] != nc.subdomain[j])
        ASSERT_EQ(a.matrix.at(i, j), 0.0) << i << "," << j;
}

TEST(PartitionSkew, DecouplingViolationIsReported) {
  auto g = StaggeredGrid::square(8);
  auto a = stokes(g);
  auto p = partition_skew2d(g, 4);
  auto nc = p.classes;
  // Pull one separator velocity into the interior of a subdomain it does not
  // belong to.
  for (int i = 0; i < nc.size(); ++i)
    if (nc.is_separator(i) && is_velocity(g.kind_of(i))) {
      nc.subdomain[i] = nc.touch[i].front() == 0 ? 1 : 0;
      nc.group[i] = -1;
      break;
    }
  EXPECT_THROW(check_decoupling(nc, a.matrix), PartitionError);
}

TEST(PartitionParallelepiped, FirstLevelOf16Cubed) {
  auto g = StaggeredGrid::cube(16);
  auto a = stokes(g);
  auto p = partition_parallelepiped3d(g, 8);
  EXPECT_EQ(p.size, 8);
  expect_space_filling(p);
  expect_groups_well_formed(p);
  expect_retained_pressures(p);
  EXPECT_NO_THROW(check_decoupling(p.classes, a.matrix));
  // Tiles hold s^3/2 cells; clipped ones fewer.
  for (const auto& s : p.subdomains) EXPECT_LE(static_cast<int>(s.cells.size()), 8 * 8 * 8 / 2);
}

TEST(PartitionParallelepiped, NoIsolatedPressures) {
  for (auto [n, s] : {std::pair{8, 4}, {16, 4}, {16, 8}, {32, 8}}) {
    auto g = StaggeredGrid::cube(n);
    auto a = stokes(g);
    auto p = partition_parallelepiped3d(g, s);
    EXPECT_TRUE(detect_isolated_pressures(g, p.classes, a.matrix).empty()) << n << " " << s;
  }
}

TEST(PartitionParallelepiped, WPlanesSplitIntoInsideAndOutside) {
  auto p = partition_parallelepiped3d(StaggeredGrid::cube(16), 8);
  int inside = 0, outside = 0;
  for (const auto& grp : p.classes.groups) {
    if (grp.kind != VarKind::W) {
      EXPECT_EQ(grp.side, WSide::NotApplicable);
      continue;
    }
    inside += grp.side == WSide::Inside;
    outside += grp.side == WSide::Outside;
  }
  EXPECT_GT(inside, 0);
  EXPECT_GT(outside, 0);
}

TEST(PartitionParallelepiped, CrossSectionIsDiamondTiling) {
  // In a slice k = 0 (mod s) two cells share a subdomain exactly when they
  // share a diamond of the rotated lattice (i + j, i - j).
  const int n = 16, s = 8;
  auto g = StaggeredGrid::cube(n);
  auto p = partition_parallelepiped3d(g, s);
  for (int k : {0, 8}) {
    std::map<int, std::pair<int, int>> diamond_of;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        int sub = p.cell_subdomain[g.cell_index(i, j, k)];
        std::pair<int, int> d{detail::floor_div(i + j + 1, s), detail::floor_div(i - j + 3, s)};
        auto [it, fresh] = diamond_of.emplace(sub, d);
        if (!fresh) EXPECT_EQ(it->second, d) << i << "," << j << "," << k;
      }
    std::set<std::pair<int, int>> distinct;
    for (auto& [sub, d] : diamond_of) distinct.insert(d);
    EXPECT_EQ(distinct.size(), diamond_of.size());
  }
}

TEST(PartitionCoarsen, CartesianCubeDividesByEight) {
  auto p = partition_cartesian(StaggeredGrid::cube(16), 4);
  EXPECT_EQ(p.num_subdomains(), 64);
  auto q = coarsen(p, 2);
  EXPECT_EQ(q.num_subdomains(), 8);
  EXPECT_EQ(q.level, 2);
  expect_space_filling(q);
}

TEST(PartitionCoarsen, SkewSeparatorsDoubleInLength) {
  auto p = partition_skew2d(StaggeredGrid::square(12), 6);
  auto q = coarsen(p, 2);
  EXPECT_EQ(q.size, 2 * p.size);
  EXPECT_LT(q.num_subdomains(), p.num_subdomains());
  expect_space_filling(q);
  // Every fine subdomain lies inside one coarse subdomain.
  for (const auto& s : p.subdomains) {
    std::set<int> parents;
    for (int c : s.cells) parents.insert(q.cell_subdomain[c]);
    EXPECT_EQ(parents.size(), 1u);
  }
}

TEST(PartitionCoarsen, SelfSimilarity) {
  for (auto kind : {PartitionKind::Skew, PartitionKind::Parallelepiped}) {
    auto g = kind == PartitionKind::Skew ? StaggeredGrid::square(32) : StaggeredGrid::cube(16);
    auto p = make_partition(g, kind, 4);
    auto twice = coarsen(coarsen(p, 2), 2);
    auto once = coarsen(p, 4);
    // Same set partition of the cells.
    std::map<int, int> map;
    for (int c = 0; c < g.num_cells(); ++c) {
      auto [it, fresh] = map.emplace(twice.cell_subdomain[c], once.cell_subdomain[c]);
      if (!fresh) ASSERT_EQ(it->second, once.cell_subdomain[c]);
    }
    EXPECT_EQ(twice.num_subdomains(), once.num_subdomains());
  }
}

TEST(PartitionCoarsen, SingleSubdomainStops) {
  auto p = partition_cartesian(StaggeredGrid::square(8), 4);
  auto q = coarsen(p, 2);
  EXPECT_EQ(q.num_subdomains(), 1);
  EXPECT_THROW(coarsen(q, 2), PartitionError);
  EXPECT_THROW(coarsen(p, 1), PartitionError);
}

TEST(PartitionCoarsen, SurvivorsKeepTheirClassificationRules) {
  auto g = StaggeredGrid::square(16);
  auto p = partition_skew2d(g, 4);
  auto q = coarsen(p, 2);
  const auto& nc = q.classes;
  EXPECT_EQ(nc.size(), static_cast<int>(p.classes.groups.size()));
  for (int i = 0; i < nc.size(); ++i) {
    if (nc.is_interior(i)) {
      EXPECT_EQ(nc.touch[i].size(), 1u);
    } else if (!nc.retained[i]) {
      EXPECT_GE(nc.touch[i].size(), 2u);
    }
  }
  expect_retained_pressures(q);
}

TEST(PartitionPromote, MovesIsolatedPressuresToSeparators) {
  auto g = StaggeredGrid::square(8);
  auto a = stokes(g);
  auto p = partition_cartesian(g, 4);
  const auto before = detect_isolated_pressures(g, p.classes, a.matrix);
  ASSERT_FALSE(before.empty());
  EXPECT_EQ(promote_isolated_pressures(p, a.matrix), static_cast<int>(before.size()));
  EXPECT_TRUE(detect_isolated_pressures(g, p.classes, a.matrix).empty());
  expect_groups_well_formed(p);
  EXPECT_NO_THROW(eliminate_interiors(a.matrix, p.classes, pressure_flags(a)));
}

TEST(PartitionCsv, OneRowPerNode) {
  auto p = partition_skew2d(StaggeredGrid::square(8), 4);
  std::ostringstream os;
  write_partition_csv(os, p);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "global_id,level,class,index,kind");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, p.classes.size());
}
