// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mlilu/grid.hpp"
#include "mlilu/linalg/sparse_matrix.hpp"

namespace mlilu {

enum class ProblemKind { Stokes, NavierStokes };
enum class Forcing { Zero, Random };

// Steady flow in the unit square/cube with no-slip walls. The top wall
// (y = 1 in 2D, z = 1 in 3D) slides in +x with lid_velocity. Navier-Stokes
// uses viscosity 1/Re.
struct ProblemSpec {
  StaggeredGrid grid;
  ProblemKind kind = ProblemKind::Stokes;
  double reynolds = 1.0;
  double lid_velocity = 0.0;
  Forcing forcing = Forcing::Zero;
  std::uint64_t seed = 42;
};

// Saddle-point operator (K G; G^T 0). `scaling` holds the diagonal D of a
// flux-scaled operator D A D, and is empty for an unscaled one.
struct SaddleMatrix {
  SparseMatrix matrix;
  std::vector<VarKind> kinds;
  std::vector<double> scaling;

  int size() const { return matrix.rows(); }
  bool is_pressure(int i) const { return kinds[i] == VarKind::P; }
  bool scaled() const { return !scaling.empty(); }
};

namespace detail {

struct Stencil {
  const StaggeredGrid& g;

  static std::array<int, 3> shift(std::array<int, 3> c, int axis, int s) {
    c[axis] += s;
    return c;
  }
  // Velocity of kind `axis` on the face owned by cell c is an active unknown.
  bool active(const std::array<int, 3>& c, int axis) const {
    return g.contains(c) && c[axis] < g.extent(axis) - 1;
  }
  int vel(const std::array<int, 3>& c, int axis) const {
    return g.id(g.cell_index(c), static_cast<VarKind>(axis));
  }
  int pres(const std::array<int, 3>& c) const { return g.id(g.cell_index(c), VarKind::P); }
  double value(const std::vector<double>& x, const std::array<int, 3>& c, int axis) const {
    return active(c, axis) ? x[vel(c, axis)] : 0.0;
  }
};

inline double ipow(double h, int e) {
  double r = 1.0;
  for (int i = 0; i < std::abs(e); ++i) r *= h;
  return e < 0 ? 1.0 / r : r;
}

// Calls fn(row, side, axis, flux nodes (two (cell, kind) pairs), neighbour cell)
// for every control-volume face of every active velocity.
template <class Fn>
void for_each_cv_face(const StaggeredGrid& g, Fn&& fn) {
  Stencil st{g};
  for (int cell = 0; cell < g.num_cells(); ++cell) {
    auto c = g.cell_coords(cell);
    for (int d = 0; d < g.dim; ++d) {
      if (!st.active(c, d)) continue;
      for (int a = 0; a < g.dim; ++a)
        for (int s : {-1, 1}) {
          std::array<int, 3> f1, f2;
          if (a == d) {
            f1 = s > 0 ? c : Stencil::shift(c, d, -1);
            f2 = s > 0 ? Stencil::shift(c, d, 1) : c;
          } else {
            f1 = s > 0 ? c : Stencil::shift(c, a, -1);
            f2 = Stencil::shift(f1, d, 1);
          }
          fn(c, d, a, s, f1, f2, Stencil::shift(c, a, s));
        }
    }
  }
}

}  // namespace detail

// Integrated Laplacian over velocity control volumes, h^{d-2} sum(u_nb - u_P).
// Wall values enter through ghost cells; `bc` receives the part of L u that
// comes from a unit lid velocity. Wall-normal velocity slots on the far walls
// get a lone diagonal entry so that they stay decoupled.
inline SparseMatrix assemble_laplacian(const StaggeredGrid& g, std::vector<double>* bc = nullptr) {
  detail::Stencil st{g};
  const int n = g.num_unknowns();
  const double kappa = detail::ipow(g.h(), g.dim - 2);
  if (bc) bc->assign(n, 0.0);
  std::vector<Triplet> t;
  for (int cell = 0; cell < g.num_cells(); ++cell) {
    auto c = g.cell_coords(cell);
    for (int d = 0; d < g.dim; ++d) {
      int row = st.vel(c, d);
      if (!st.active(c, d)) {
        t.push_back({row, row, -kappa});
        continue;
      }
      double diag = 0.0;
      for (int a = 0; a < g.dim; ++a)
        for (int s : {-1, 1}) {
          auto nb = detail::Stencil::shift(c, a, s);
          if (a == d) {
            diag -= kappa;
            if (st.active(nb, d)) t.push_back({row, st.vel(nb, d), kappa});
          } else if (g.contains(nb)) {
            diag -= kappa;
            t.push_back({row, st.vel(nb, d), kappa});
          } else {
            diag -= 2.0 * kappa;
            if (bc && d == 0 && a == g.dim - 1 && s > 0) (*bc)[row] += 2.0 * kappa;
          }
        }
      t.push_back({row, row, diag});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

// Gradient (velocity rows, pressure columns): (Gp)_u = h^{d-1}(p_E - p_W).
inline SparseMatrix assemble_gradient(const StaggeredGrid& g) {
  detail::Stencil st{g};
  const int n = g.num_unknowns();
  const double area = detail::ipow(g.h(), g.dim - 1);
  std::vector<Triplet> t;
  for (int cell = 0; cell < g.num_cells(); ++cell) {
    auto c = g.cell_coords(cell);
    for (int d = 0; d < g.dim; ++d) {
      if (!st.active(c, d)) continue;
      int row = st.vel(c, d);
      t.push_back({row, st.pres(c), -area});
      t.push_back({row, st.pres(detail::Stencil::shift(c, d, 1)), area});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

// Lumped velocity mass matrix h^d I (assembled for completeness).
inline SparseMatrix assemble_mass(const StaggeredGrid& g) {
  detail::Stencil st{g};
  const int n = g.num_unknowns();
  std::vector<Triplet> t;
  for (int id = 0; id < n; ++id)
    if (is_velocity(g.kind_of(id)) && !is_wall_velocity(g, id)) t.push_back({id, id, detail::ipow(g.h(), g.dim)});
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

// Convective term N(u, v) = sum_f F_f(u) (v_P + v_nb)/2 over control-volume
// faces, F_f the outward mass flux interpolated from the adjacent normal
// velocities. N1(u) v = N(u, v) and N2(u) v = N(v, u).
inline std::vector<double> convection(const StaggeredGrid& g, const std::vector<double>& u,
                                      const std::vector<double>& v) {
  detail::Stencil st{g};
  const double half_area = 0.5 * detail::ipow(g.h(), g.dim - 1);
  std::vector<double> out(g.num_unknowns(), 0.0);
  detail::for_each_cv_face(g, [&](auto c, int d, int a, int s, auto f1, auto f2, auto nb) {
    double flux = s * half_area * (st.value(u, f1, a) + st.value(u, f2, a));
    out[st.vel(c, d)] += flux * 0.5 * (st.value(v, c, d) + st.value(v, nb, d));
  });
  return out;
}

inline SparseMatrix convection_n1(const StaggeredGrid& g, const std::vector<double>& u) {
  detail::Stencil st{g};
  const int n = g.num_unknowns();
  const double half_area = 0.5 * detail::ipow(g.h(), g.dim - 1);
  std::vector<Triplet> t;
  detail::for_each_cv_face(g, [&](auto c, int d, int a, int s, auto f1, auto f2, auto nb) {
    double flux = s * half_area * (st.value(u, f1, a) + st.value(u, f2, a));
    int row = st.vel(c, d);
    t.push_back({row, row, 0.5 * flux});
    if (st.active(nb, d)) t.push_back({row, st.vel(nb, d), 0.5 * flux});
  });
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

inline SparseMatrix convection_n2(const StaggeredGrid& g, const std::vector<double>& u) {
  detail::Stencil st{g};
  const int n = g.num_unknowns();
  const double half_area = 0.5 * detail::ipow(g.h(), g.dim - 1);
  std::vector<Triplet> t;
  detail::for_each_cv_face(g, [&](auto c, int d, int a, int s, auto f1, auto f2, auto nb) {
    int row = st.vel(c, d);
    double w = s * half_area * 0.5 * (st.value(u, c, d) + st.value(u, nb, d));
    if (st.active(f1, a)) t.push_back({row, st.vel(f1, a), w});
    if (st.active(f2, a)) t.push_back({row, st.vel(f2, a), w});
  });
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

// D = diag(h^{1-d/2} on velocities, h^{-d/2} on pressures). D A D turns the
// gradient entries into +-1 and the Laplacian into an integer stencil.
inline std::vector<double> flux_scaling(const StaggeredGrid& g) {
  const double h = g.h();
  const double dv = std::pow(h, 1.0 - 0.5 * g.dim), dp = std::pow(h, -0.5 * g.dim);
  std::vector<double> d(g.num_unknowns());
  for (int id = 0; id < g.num_unknowns(); ++id) d[id] = g.kind_of(id) == VarKind::P ? dp : dv;
  return d;
}

inline std::vector<VarKind> unknown_kinds(const StaggeredGrid& g) {
  std::vector<VarKind> k(g.num_unknowns());
  for (int id = 0; id < g.num_unknowns(); ++id) k[id] = g.kind_of(id);
  return k;
}

inline SaddleMatrix scale_to_fluxes(const SaddleMatrix& a, const StaggeredGrid& g) {
  if (a.scaled()) return a;
  auto d = flux_scaling(g);
  return {scale(a.matrix, d, d), a.kinds, d};
}

// (K, G; G^T, 0) with G^T inserted as the exact transpose of G.
inline SaddleMatrix assemble_saddle(const StaggeredGrid& g, const SparseMatrix& k) {
  SparseMatrix gr = assemble_gradient(g);
  SparseMatrix full = add(add(k, gr), gr.transpose());
  return {std::move(full), unknown_kinds(g), {}};
}

inline void check_spec(const ProblemSpec& spec) {
  for (int a = 0; a < spec.grid.dim; ++a)
    if (spec.grid.extent(a) < 2) throw Error("grid too small: need at least 2 cells per direction");
  if (spec.kind == ProblemKind::NavierStokes && !(spec.reynolds > 0.0))
    throw Error("Reynolds number must be positive");
}

inline SaddleMatrix assemble_stokes_unscaled(const ProblemSpec& spec) {
  check_spec(spec);
  SparseMatrix l = assemble_laplacian(spec.grid);
  return assemble_saddle(spec.grid, scale(l, std::vector<double>(l.rows(), -1.0), std::vector<double>(l.rows(), 1.0)));
}

// Flux-scaled Stokes operator (-L, G; G^T, 0).
inline SaddleMatrix assemble_stokes(const ProblemSpec& spec) {
  return scale_to_fluxes(assemble_stokes_unscaled(spec), spec.grid);
}

inline void check_finite(const std::vector<double>& x, const char* where) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(std::string("non-finite value in ") + where);
}

// Newton Jacobian (N1(u) + N2(u) - L/Re, G; G^T, 0), unscaled.
inline SaddleMatrix assemble_jacobian_unscaled(const ProblemSpec& spec, const std::vector<double>& x) {
  check_spec(spec);
  const auto& g = spec.grid;
  require_dims(static_cast<int>(x.size()) == g.num_unknowns(), "assemble_jacobian");
  check_finite(x, "assemble_jacobian");
  if (spec.kind == ProblemKind::Stokes) return assemble_stokes_unscaled(spec);
  SparseMatrix l = assemble_laplacian(g);
  SparseMatrix k = add(convection_n1(g, x), convection_n2(g, x));
  k = add(k, l, 1.0, -1.0 / spec.reynolds);
  return assemble_saddle(g, k);
}

// Picard linearization: N2 omitted.
inline SaddleMatrix assemble_picard_unscaled(const ProblemSpec& spec, const std::vector<double>& x) {
  check_spec(spec);
  const auto& g = spec.grid;
  require_dims(static_cast<int>(x.size()) == g.num_unknowns(), "assemble_picard");
  check_finite(x, "assemble_picard");
  if (spec.kind == ProblemKind::Stokes) return assemble_stokes_unscaled(spec);
  SparseMatrix k = add(convection_n1(g, x), assemble_laplacian(g), 1.0, -1.0 / spec.reynolds);
  return assemble_saddle(g, k);
}

inline SaddleMatrix assemble_jacobian(const ProblemSpec& spec, const std::vector<double>& x) {
  return scale_to_fluxes(assemble_jacobian_unscaled(spec, x), spec.grid);
}

// Body forcing f (physical units). The random variant draws D f uniformly in
// [-1, 1] on every active velocity with the spec's seed.
inline std::vector<double> body_forcing(const ProblemSpec& spec) {
  const auto& g = spec.grid;
  std::vector<double> f(g.num_unknowns(), 0.0);
  if (spec.forcing == Forcing::Zero) return f;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto d = flux_scaling(g);
  for (int id = 0; id < g.num_unknowns(); ++id) {
    if (!is_velocity(g.kind_of(id)) || is_wall_velocity(g, id)) continue;
    f[id] = dist(rng) / d[id];
  }
  return f;
}

// Known part of the momentum equation: lid contribution of the viscous term
// plus body forcing. For Stokes the residual is A x - rhs.
inline std::vector<double> boundary_rhs(const ProblemSpec& spec) {
  std::vector<double> bc;
  assemble_laplacian(spec.grid, &bc);
  double visc = spec.kind == ProblemKind::Stokes ? 1.0 : 1.0 / spec.reynolds;
  auto f = body_forcing(spec);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += visc * spec.lid_velocity * bc[i];
  return f;
}

// Steady residual F(x): momentum N(u,u) - (L u)/Re + G p - rhs, continuity G^T u.
inline std::vector<double> residual(const ProblemSpec& spec, const std::vector<double>& x) {
  check_spec(spec);
  const auto& g = spec.grid;
  require_dims(static_cast<int>(x.size()) == g.num_unknowns(), "residual");
  auto rhs = boundary_rhs(spec);
  std::vector<double> r;
  if (spec.kind == ProblemKind::Stokes) {
    r = matvec(assemble_stokes_unscaled(spec).matrix, x);
  } else {
    SparseMatrix l = assemble_laplacian(g);
    auto lu = matvec(l, x);
    SaddleMatrix s = assemble_saddle(g, SparseMatrix(g.num_unknowns(), g.num_unknowns(),
                                                      std::vector<int>(g.num_unknowns() + 1, 0), {}, {}));
    r = matvec(s.matrix, x);
    auto nl = convection(g, x, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += nl[i] - lu[i] / spec.reynolds;
  }
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= rhs[i];
  return r;
}

// Cell divergence (net outward velocity flux divided by h^d).
inline std::vector<double> divergence(const StaggeredGrid& g, const std::vector<double>& x) {
  SparseMatrix gt = assemble_gradient(g).transpose();
  auto d = matvec(gt, x);
  std::vector<double> out(g.num_cells());
  const double hd = detail::ipow(g.h(), g.dim);
  for (int c = 0; c < g.num_cells(); ++c) out[c] = -d[g.id(c, VarKind::P)] / hd;
  return out;
}

}  // namespace mlilu
