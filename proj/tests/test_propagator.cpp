#include <gtest/gtest.h>

#include "support.hpp"

using namespace zcf;
using namespace zcf::testing;

namespace {

Domain2D box(double b1, double b2) { return Domain2D(b1, b2, 4, 4); }

TEST(Propagator, ZeroPotentialMatchesExponentials) {
  const auto pair = build_mkdv_pair(MkdvPotential::zero(1, box(2.0, 1.0)));
  const Complex z(0.7, -1.3);
  const Matrix j = signature(1);
  const Matrix w = integrate_x(pair.G, 0.5, z, 2.0, 400).back();
  const Matrix r = integrate_t(pair.F, 1.0, z, 1.0, 800).back();
  EXPECT_LT(op_norm(w - expm(kI * z * 2.0 * j)) / op_norm(w), 1e-10);
  EXPECT_LT(op_norm(r - expm(-kI * z * z * z * 1.0 * j)) / op_norm(r), 1e-10);
}

TEST(Propagator, ConstantPotentialMatchesExponentials) {
  Matrix v(2, 2);
  v << Complex(0.3, 0.1), Complex(0.0, -0.2), Complex(0.1, 0.0), Complex(-0.2, 0.2);
  const auto pot = MkdvPotential::constant(v, box(1.0, 1.0));
  const auto pair = build_mkdv_pair(pot);
  const Complex z(0.4, -1.1);
  const Matrix G = pair.G(0.0, 0.0, z), F = pair.F(0.0, 0.0, z);
  EXPECT_LT(op_norm(integrate_x(pair.G, 0.3, z, 1.0, 400).back() - expm(G)), 1e-10);
  EXPECT_LT(op_norm(integrate_t(pair.F, 0.6, z, 0.5, 800).back() - expm(0.5 * F)), 1e-9);
}

TEST(Propagator, FourthOrderSelfConvergence) {
  const auto sol = mkdv_soliton(soliton_node(), 1, box(2.0, 1.0));
  const auto pair = build_mkdv_pair(sol.potential);
  const Complex z(0.5, -1.5);
  const Matrix ref = integrate_t(pair.F, 1.0, z, 1.0, 3200).back();
  const double e1 = op_norm(integrate_t(pair.F, 1.0, z, 1.0, 100).back() - ref);
  const double e2 = op_norm(integrate_t(pair.F, 1.0, z, 1.0, 200).back() - ref);
  const double ratio = e1 / e2;
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
  EXPECT_LT(e2 / op_norm(ref), 1e-6);
}

TEST(Propagator, ForwardOnlyAndOverflow) {
  const auto pair = build_mkdv_pair(MkdvPotential::zero(1, box(1.0, 1.0)));
  EXPECT_THROW(integrate(pair.G, Direction::x, 0.0, Complex(0.0, -1.0), 0.5, 0.2, 10), Error);
  try {
    integrate_x(pair.G, 0.0, Complex(0.0, -800.0), 1.0, 2000);
    FAIL() << "expected StepOverflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::step_overflow);
  }
}

TEST(Propagator, DeterminantFollowsLiouville) {
  // tr G = 0 for the mKdV pencils, so det W = 1
  const auto sol = mkdv_soliton(soliton_node(), 1, box(2.0, 1.0));
  const auto pair = build_mkdv_pair(sol.potential);
  const auto w = integrate_x(pair.G, 0.4, Complex(0.3, -1.2), 2.0, 1000);
  for (const auto& m : w.mats) EXPECT_NEAR(std::abs(m.determinant() - 1.0), 0.0, 1e-9);
}

TEST(Factorization, ZeroAndConstantPotentials) {
  Matrix v(1, 1);
  v(0, 0) = Complex(0.2, 0.1);
  for (const auto& pot : {MkdvPotential::zero(1, box(1.0, 1.0)), MkdvPotential::constant(v, box(1.0, 1.0))}) {
    const auto pair = build_mkdv_pair(pot);
    for (const Complex z : {Complex(0.0, -2.0), Complex(1.0, -1.5)})
      EXPECT_LT(factorization_residual(pair.G, pair.F, 0.7, 0.6, z, 800), 1e-10);
  }
}

TEST(Factorization, SolitonGridAndPointAgree) {
  const Domain2D d(2.0, 1.0, 4, 4);
  const auto sol = mkdv_soliton(soliton_node(), 1, d);
  const auto pair = build_mkdv_pair(sol.potential);
  const Complex z(0.5, -1.5);
  const auto grid = factorization_residual_grid(pair.G, pair.F, z, 800);
  ASSERT_EQ(grid.size(), 25u);
  double worst = 0.0;
  for (double r : grid) worst = std::max(worst, r);
  EXPECT_LT(worst, 1e-8);
  const double point = factorization_residual(pair.G, pair.F, d.x_at(2), d.t_at(3), z, 800);
  EXPECT_NEAR(grid[3 * 5 + 2], point, 1e-9);
}

TEST(Factorization, IncompatiblePairFails) {
  MkdvPotential pot;
  pot.p = 1;
  pot.v = [](double x, double t) { return scalar(0.8 * x * t); };
  pot.domain = box(1.0, 1.0);
  const auto pair = build_mkdv_pair(pot);
  EXPECT_GT(factorization_residual(pair.G, pair.F, 1.0, 1.0, Complex(0.0, -2.0), 400), 1e-3);
}

TEST(Factorization, RawAndNormalizedResiduals) {
  const auto sol = mkdv_soliton(soliton_node(), 1, box(2.0, 1.0));
  const auto pair = build_mkdv_pair(sol.potential);
  const auto c = factorization_check(pair.G, pair.F, 2.0, 1.0, Complex(1.0, -2.5), 2000);
  EXPECT_GE(c.scale, 1.0);
  EXPECT_NEAR(c.relative(), c.absolute / c.scale, 0.0);
  EXPECT_LT(c.relative(), 1e-6);
}

TEST(WaveFunction, IdentityAtOriginAndMixedDerivatives) {
  const Domain2D d(2.0, 1.0, 4, 4);
  const auto sol = mkdv_soliton(soliton_node(), 1, d);
  const auto pair = build_mkdv_pair(sol.potential);
  const Complex z(0.5, -1.5);
  EXPECT_LT(op_norm(wave_function(pair.G, pair.F, 0.0, 0.0, z, 10) - identity(2)), 1e-15);
  const double good = mixed_derivative_residual(pair.G, pair.F, 1.0, 0.5, z, 1e-3, 400);
  EXPECT_LT(good, 1e-4);
  try {
    mixed_derivative_residual(pair.G, pair.F, 0.0, 0.5, z, 1e-3, 400);
    FAIL() << "expected DomainError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::domain_error);
  }

  MkdvPotential bad;
  bad.p = 1;
  bad.v = [](double x, double t) { return scalar(0.8 * x * t); };
  bad.domain = d;
  const auto bp = build_mkdv_pair(bad);
  EXPECT_GT(mixed_derivative_residual(bp.G, bp.F, 1.0, 0.5, z, 1e-3, 400), 1e-2);
}

}  // namespace
