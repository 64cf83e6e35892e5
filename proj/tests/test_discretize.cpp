#include <gtest/gtest.h>

#include "mlilu/discretize.hpp"
#include "oracle.hpp"

using namespace mlilu;

namespace {

ProblemSpec stokes(int n, int dim = 2) {
  ProblemSpec s;
  s.grid = dim == 2 ? StaggeredGrid::square(n) : StaggeredGrid::cube(n);
  return s;
}

ProblemSpec cavity(int n, double re, int dim = 2) {
  ProblemSpec s = stokes(n, dim);
  s.kind = ProblemKind::NavierStokes;
  s.reynolds = re;
  s.lid_velocity = 1.0;
  return s;
}

// Discretely divergence-free 2D velocity from a random stream function on the
// interior cell corners.
std::vector<double> stream_function_velocity(const StaggeredGrid& g, unsigned seed) {
  std::vector<double> psi((g.nx + 1) * (g.ny + 1), 0.0);
  auto r = oracle::random_vector(static_cast<int>(psi.size()), seed);
  auto at = [&](int i, int j) -> double& { return psi[i + (g.nx + 1) * j]; };
  for (int j = 1; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i) at(i, j) = r[i + (g.nx + 1) * j];
  std::vector<double> x(g.num_unknowns(), 0.0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      int c = g.cell_index(i, j, 0);
      x[g.id(c, VarKind::U)] = (at(i + 1, j + 1) - at(i + 1, j)) / g.h();
      x[g.id(c, VarKind::V)] = -(at(i + 1, j + 1) - at(i, j + 1)) / g.h();
    }
  return x;
}

// Velocity of a Stokes solve with random forcing: divergence free up to
// round-off. Uses a dense solve with one pinned pressure.
std::vector<double> stokes_velocity(const ProblemSpec& spec0) {
  ProblemSpec spec = spec0;
  spec.forcing = Forcing::Random;
  Eigen::MatrixXd a = oracle::dense(assemble_stokes_unscaled(spec).matrix);
  Eigen::VectorXd b = oracle::vec(boundary_rhs(spec));
  int pin = spec.grid.id(0, VarKind::P);
  a.row(pin).setZero();
  a.col(pin).setZero();
  a(pin, pin) = 1.0;
  b(pin) = 0.0;
  return oracle::stdvec(a.partialPivLu().solve(b));
}

bool in_pressure_block(const SaddleMatrix& a, int i, int j) { return a.is_pressure(i) && a.is_pressure(j); }

}  // namespace

TEST(Stokes, TwoByTwoStructure) {
  auto a = assemble_stokes(stokes(2));
  EXPECT_EQ(a.size(), 12);
  for (int i = 0; i < a.size(); ++i)
    for (int p = a.matrix.row_begin(i); p < a.matrix.row_end(i); ++p)
      EXPECT_FALSE(in_pressure_block(a, i, a.matrix.col_indices()[p]));
}

TEST(Stokes, TooSmall) {
  ProblemSpec s;
  s.grid = StaggeredGrid(2, 1, 4);
  EXPECT_THROW(assemble_stokes(s), Error);
}

TEST(Stokes, DivergenceRowsOfInteriorCellsSumToZero) {
  for (int dim : {2, 3}) {
    auto spec = stokes(4, dim);
    auto a = assemble_stokes(spec);
    const auto& g = spec.grid;
    for (int c = 0; c < g.num_cells(); ++c) {
      int row = g.id(c, VarKind::P);
      auto cc = g.cell_coords(c);
      bool interior = true;
      for (int d = 0; d < dim; ++d) interior = interior && cc[d] > 0 && cc[d] < g.extent(d) - 1;
      EXPECT_LE(a.matrix.row_end(row) - a.matrix.row_begin(row), 2 * dim);
      if (!interior) continue;
      double s = 0;
      for (int p = a.matrix.row_begin(row); p < a.matrix.row_end(row); ++p) s += a.matrix.values()[p];
      EXPECT_EQ(s, 0.0);
      EXPECT_EQ(a.matrix.row_end(row) - a.matrix.row_begin(row), 2 * dim);
    }
  }
}

TEST(Stokes, SymmetricVelocityBlockAndRankDeficiencyOne) {
  auto a = assemble_stokes(stokes(4));
  Eigen::MatrixXd d = oracle::dense(a.matrix);
  EXPECT_LT((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(oracle::rank(a.matrix), a.size() - 1);
  // K positive definite on the velocity space.
  std::vector<int> vel;
  for (int i = 0; i < a.size(); ++i)
    if (!a.is_pressure(i)) vel.push_back(i);
  Eigen::MatrixXd k = oracle::dense(a.matrix.submatrix(vel, vel));
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff(), 0.0);
}

TEST(Stokes, ConstantPressureIsNullVector) {
  for (int dim : {2, 3}) {
    auto spec = stokes(5, dim);
    for (bool scaled : {false, true}) {
      auto a = scaled ? assemble_stokes(spec) : assemble_stokes_unscaled(spec);
      std::vector<double> x(a.size(), 0.0);
      for (int i = 0; i < a.size(); ++i)
        if (a.is_pressure(i)) x[i] = scaled ? 1.0 / a.scaling[i] : 1.0;
      for (double v : matvec(a.matrix, x)) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Stokes, DivergenceIsExactTransposeOfGradient) {
  auto spec = cavity(6, 300.0, 3);
  auto x = oracle::random_vector(spec.grid.num_unknowns(), 4);
  for (bool scaled : {false, true}) {
    auto a = scaled ? assemble_jacobian(spec, x) : assemble_jacobian_unscaled(spec, x);
    for (int i = 0; i < a.size(); ++i)
      for (int p = a.matrix.row_begin(i); p < a.matrix.row_end(i); ++p) {
        int j = a.matrix.col_indices()[p];
        if (a.is_pressure(i) != a.is_pressure(j)) ASSERT_EQ(a.matrix.values()[p], a.matrix.at(j, i));
      }
  }
}

TEST(Scaling, GradientEntriesHaveConstantMagnitude) {
  for (int dim : {2, 3}) {
    auto a = assemble_stokes(stokes(6, dim));
    for (int i = 0; i < a.size(); ++i)
      for (int p = a.matrix.row_begin(i); p < a.matrix.row_end(i); ++p) {
        int j = a.matrix.col_indices()[p];
        if (a.is_pressure(i) != a.is_pressure(j)) EXPECT_NEAR(std::abs(a.matrix.values()[p]), 1.0, 1e-14);
        if (in_pressure_block(a, i, j)) ADD_FAILURE() << "pressure block entry";
      }
  }
}

TEST(Scaling, ScaledSolveMatchesUnscaledSolve) {
  auto spec = stokes(8);
  spec.forcing = Forcing::Random;
  spec.lid_velocity = 1.0;
  auto phys = assemble_stokes_unscaled(spec);
  auto sc = scale_to_fluxes(phys, spec.grid);
  auto b = boundary_rhs(spec);
  int pin = spec.grid.id(0, VarKind::P);
  auto pinned = [&](Eigen::MatrixXd m) {
    m.row(pin).setZero();
    m.col(pin).setZero();
    m(pin, pin) = 1.0;
    return m;
  };
  Eigen::VectorXd bp = oracle::vec(b), bs = bp;
  for (int i = 0; i < bs.size(); ++i) bs(i) *= sc.scaling[i];
  bp(pin) = bs(pin) = 0.0;
  Eigen::VectorXd xp = pinned(oracle::dense(phys.matrix)).partialPivLu().solve(bp);
  Eigen::VectorXd ys = pinned(oracle::dense(sc.matrix)).partialPivLu().solve(bs);
  for (int i = 0; i < ys.size(); ++i) EXPECT_NEAR(ys(i) * sc.scaling[i], xp(i), 1e-10 * xp.cwiseAbs().maxCoeff());
}

TEST(Jacobian, ZeroStateIsScaledStokes) {
  auto spec = cavity(5, 250.0, 3);
  auto j = assemble_jacobian(spec, std::vector<double>(spec.grid.num_unknowns(), 0.0));
  auto s = assemble_stokes(stokes(5, 3));
  // The convection pattern is kept (with zero values) so compare values.
  Eigen::MatrixXd jd = oracle::dense(j.matrix), sd = oracle::dense(s.matrix);
  EXPECT_EQ((jd.array() != 0.0).count(), (sd.array() != 0.0).count());
  for (int i = 0; i < s.size(); ++i)
    for (int p = s.matrix.row_begin(i); p < s.matrix.row_end(i); ++p) {
      int c = s.matrix.col_indices()[p];
      double expect = s.is_pressure(i) || s.is_pressure(c) ? s.matrix.values()[p] : s.matrix.values()[p] / 250.0;
      EXPECT_NEAR(j.matrix.at(i, c), expect, 1e-15);
    }
}

TEST(Jacobian, RejectsNaN) {
  auto spec = cavity(4, 100.0);
  std::vector<double> x(spec.grid.num_unknowns(), 0.0);
  x[3] = std::nan("");
  EXPECT_THROW(assemble_jacobian(spec, x), Error);
}

TEST(Convection, BilinearN1) {
  auto g = StaggeredGrid::cube(4);
  auto u = oracle::random_vector(g.num_unknowns(), 9);
  auto u2 = u;
  for (auto& v : u2) v *= 2.0;
  auto a = convection_n1(g, u), b = convection_n1(g, u2);
  ASSERT_EQ(a.col_indices(), b.col_indices());
  for (int p = 0; p < a.nnz(); ++p) EXPECT_EQ(b.values()[p], 2.0 * a.values()[p]);
}

TEST(Convection, SkewSymmetricForDivergenceFreeVelocity) {
  auto g = StaggeredGrid::square(10);
  auto u = stream_function_velocity(g, 17);
  for (double d : divergence(g, u)) ASSERT_NEAR(d, 0.0, 1e-10);
  Eigen::MatrixXd n1 = oracle::dense(convection_n1(g, u));
  EXPECT_LT((n1 + n1.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::VectorXd uv = oracle::vec(u);
  EXPECT_NEAR(uv.dot(n1 * uv), 0.0, 1e-12);
}

TEST(Convection, SkewSymmetricIn3D) {
  auto spec = stokes(5, 3);
  auto u = stokes_velocity(spec);
  for (int i = 0; i < spec.grid.num_unknowns(); ++i)
    if (spec.grid.kind_of(i) == VarKind::P) u[i] = 0.0;
  Eigen::MatrixXd n1 = oracle::dense(convection_n1(spec.grid, u));
  EXPECT_LT((n1 + n1.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::VectorXd uv = oracle::vec(u);
  EXPECT_NEAR(uv.dot(n1 * uv), 0.0, 1e-12);
}

TEST(Convection, N2IsDerivativeWithRespectToFlux) {
  auto g = StaggeredGrid::square(5);
  auto u = oracle::random_vector(g.num_unknowns(), 1);
  auto v = oracle::random_vector(g.num_unknowns(), 2);
  auto lhs = matvec(convection_n2(g, u), v);
  auto rhs = convection(g, v, u);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-14);
}

TEST(Residual, StokesWithLidOnly) {
  auto spec = stokes(6);
  spec.lid_velocity = 1.0;
  const auto& g = spec.grid;
  auto r = residual(spec, std::vector<double>(g.num_unknowns(), 0.0));
  for (int id = 0; id < g.num_unknowns(); ++id) {
    auto v = decode_index(g, id);
    if (v.kind == VarKind::U && v.j == g.ny - 1 && v.i < g.nx - 1)
      EXPECT_DOUBLE_EQ(r[id], -2.0);
    else
      EXPECT_EQ(r[id], 0.0);
  }
}

TEST(Residual, FiniteDifferenceJacobian) {
  for (int dim : {2, 3}) {
    auto spec = cavity(dim == 2 ? 8 : 4, 100.0, dim);
    const int n = spec.grid.num_unknowns();
    for (unsigned trial = 0; trial < 10; ++trial) {
      auto x = oracle::random_vector(n, 100 + trial);
      auto d = oracle::random_vector(n, 200 + trial);
      const double eps = 1e-6;
      auto xp = x;
      for (int i = 0; i < n; ++i) xp[i] += eps * d[i];
      auto r0 = residual(spec, x), r1 = residual(spec, xp);
      auto jd = matvec(assemble_jacobian_unscaled(spec, x).matrix, d);
      double err = 0, nrm = 0;
      for (int i = 0; i < n; ++i) {
        double fd = (r1[i] - r0[i]) / eps;
        err += (fd - jd[i]) * (fd - jd[i]);
        nrm += jd[i] * jd[i];
      }
      EXPECT_LT(std::sqrt(err / nrm), 1e-5) << "dim " << dim << " trial " << trial;
    }
  }
}

TEST(Residual, DimensionMismatch) {
  EXPECT_THROW(residual(stokes(4), {1.0, 2.0}), DimensionMismatch);
}
