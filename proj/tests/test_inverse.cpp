#include <gtest/gtest.h>

#include "support.hpp"
#include "zcf/inverse.hpp"

using namespace zcf;
using namespace zcf::testing;

namespace {

WeylProvider soliton_weyl(const MkdvSoliton& sol) {
  const SNode node = soliton_node();
  const NodeField field = sol.node_field;
  return [node, field](Complex z) { return darboux_weyl_function(node, field, 1, 0.0, z); };
}

MkdvSoliton make_soliton() { return mkdv_soliton(soliton_node(), 1, Domain2D(2.0, 1.0, 8, 8), 1.0); }

TEST(FourierS, ZeroWeylFunction) {
  const auto k = fourier_s([](Complex) { return Matrix(Matrix::Zero(2, 2)); }, 0.0, 2, Grid1D{1.0, 10});
  for (std::size_t i = 0; i < k.s.size(); ++i) {
    EXPECT_EQ(max_entry(k.s[i]), 0.0);
    EXPECT_EQ(max_entry(k.s_prime[i]), 0.0);
  }
}

TEST(FourierS, EtaViolation) {
  FourierOptions opt;
  opt.eta = -1.5;
  try {
    fourier_s([](Complex) { return Matrix(Matrix::Zero(1, 1)); }, 1.0, 1, Grid1D{1.0, 10}, opt);
    FAIL() << "expected EtaViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::eta_violation);
  }
}

TEST(FourierS, SimplePoleOracle) {
  // phi = c / zeta: s = -2 i c x, s' = -2 i c
  const Complex c(0.4, -0.3);
  const auto k = fourier_s([c](Complex z) { return scalar(c / z); }, 0.5, 1, Grid1D{1.0, 8});
  for (int i = 0; i <= 8; ++i) {
    const double x = k.grid.at(i);
    EXPECT_LT(std::abs(k.s[static_cast<std::size_t>(i)](0, 0) + 2.0 * kI * c * x), 1e-6);
    EXPECT_LT(std::abs(k.s_prime[static_cast<std::size_t>(i)](0, 0) + 2.0 * kI * c), 1e-6);
  }
}

TEST(FourierS, ShiftedPoleOracle) {
  // phi = c / (zeta - b), Im b > -M: s' = -2 i c e^{2 i b x}, s = -(c / b)(e^{2 i b x} - 1)
  const Complex b(0.3, -0.2), c(0.4, 0.1);
  FourierOptions opt;
  opt.tol = 1e-6;
  const auto k = fourier_s([=](Complex z) { return scalar(c / (z - b)); }, 0.5, 1, Grid1D{1.0, 20}, opt);
  for (int i = 0; i <= 20; ++i) {
    const double x = k.grid.at(i);
    const Complex e = std::exp(2.0 * kI * b * x);
    EXPECT_LT(std::abs(k.s_prime[static_cast<std::size_t>(i)](0, 0) + 2.0 * kI * c * e), 1e-5) << x;
    EXPECT_LT(std::abs(k.s[static_cast<std::size_t>(i)](0, 0) + (c / b) * (e - 1.0)), 1e-5) << x;
  }
  EXPECT_LT(k.s0_offset, 1e-4);
}

TEST(FourierS, EtaIndependence) {
  const auto sol = make_soliton();
  const auto phi = soliton_weyl(sol);
  FourierOptions a, b;
  a.eta = -3.0;
  b.eta = -4.0;
  const auto ka = fourier_s(phi, 1.0, 1, Grid1D{1.0, 20}, a);
  const auto kb = fourier_s(phi, 1.0, 1, Grid1D{1.0, 20}, b);
  for (std::size_t i = 0; i < ka.s.size(); ++i) {
    EXPECT_LT(max_entry(ka.s[i] - kb.s[i]), 1e-4);
    EXPECT_LT(max_entry(ka.s_prime[i] - kb.s_prime[i]), 1e-4);
  }
}

TEST(FourierS, TailTooFat) {
  FourierOptions opt;
  opt.max_doublings = 3;
  opt.tail_correction = false;
  try {
    fourier_s([](Complex) { return scalar(1.0); }, 0.0, 1, Grid1D{1.0, 10}, opt);
    FAIL() << "expected TailTooFat";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::tail_too_fat);
  }
}

TEST(StructuredOperator, ZeroKernelIsIdentity) {
  const Grid1D g{1.0, 10};
  const auto k = kernel_from_s_prime(g, std::vector<Matrix>(11, Matrix::Zero(2, 2)));
  const auto op = build_Sl(k);
  EXPECT_LT(max_entry(op.H - identity(22)), 1e-15);
}

TEST(StructuredOperator, ConstantKernelIsMinKernel) {
  const Complex c(0.6, -0.8);
  const Grid1D g{1.0, 16};
  const auto k = kernel_from_s_prime(g, std::vector<Matrix>(17, scalar(c)));
  const Matrix K = kernel_matrix(k);
  for (int i = 0; i <= 16; ++i)
    for (int r = 0; r <= 16; ++r)
      EXPECT_NEAR(std::abs(K(i, r) - 2.0 * std::norm(c) * std::min(g.at(i), g.at(r))), 0.0, 1e-13);
  const auto op = build_Sl(k);
  EXPECT_LT(op.hermitian_defect, 1e-14);
  EXPECT_GE(op.min_eig, 1.0 - 1e-12);
}

TEST(StructuredOperator, HermitianForMatrixKernels) {
  std::mt19937 rng(11);
  const Grid1D g{1.0, 12};
  std::vector<Matrix> sp;
  for (int i = 0; i <= 12; ++i) sp.push_back(random_matrix(rng, 2, 2, 0.3));
  const auto k = kernel_from_s_prime(g, sp);
  const Matrix K = kernel_matrix(k);
  EXPECT_LT(max_entry(K - K.adjoint()), 1e-14);
}

TEST(StructuredOperator, SolitonInequality) {
  const auto sol = make_soliton();
  const auto k = fourier_s(soliton_weyl(sol), 1.0, 1, Grid1D{1.0, 200});
  const auto family = build_Sl_family(k);
  for (const auto& op : family) {
    EXPECT_LT(op.hermitian_defect, 1e-10);
    EXPECT_GE(op.min_eig, 1.0 - 1e-4);
  }
}

TEST(StructuredOperator, GramKernelNeverLosesInequality) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 6;
    const Grid1D g{1.0 + trial % 3, n};
    std::vector<Matrix> sp;
    for (int i = 0; i <= n; ++i) sp.push_back(random_matrix(rng, 1 + trial % 2, 1 + trial % 2, 10.0));
    const auto k = kernel_from_s_prime(g, sp);
    const Matrix K = kernel_matrix(k);
    for (int l = 0; l <= n; ++l) EXPECT_GE(structured_operator(K, k, l).min_eig, 1.0 - 1e-12);
  }
}

TEST(StructuredOperator, GridTooCoarseGuard) {
  const Grid1D g{1.0, 4};
  const auto k = kernel_from_s_prime(g, std::vector<Matrix>(5, scalar(1.0)));
  // a kernel that is not of Gram type
  const auto op = structured_operator(Matrix(-8.0 * identity(5)), k, 4);
  try {
    require_operator_inequality(op);
    FAIL() << "expected GridTooCoarse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::grid_too_coarse);
  }
  EXPECT_NO_THROW(require_operator_inequality(build_Sl(k)));
}

TEST(Omega, TrivialRows) {
  const Grid1D g{1.0, 10};
  const auto k = kernel_from_s_prime(g, std::vector<Matrix>(11, Matrix::Zero(1, 1)));
  auto rows = recover_omega2(k, build_Sl_family(k));
  Matrix e1 = Matrix::Zero(1, 2), e2 = Matrix::Zero(1, 2);
  e1(0, 0) = 1.0;
  e2(0, 1) = 1.0;
  for (const auto& w2 : rows.omega2) EXPECT_LT(max_entry(w2 - e2), 1e-15);
  recover_omega1(rows);
  for (const auto& w1 : rows.omega1) EXPECT_LT(max_entry(w1 - e1), 1e-14);
  for (const auto& v : recover_v(rows)) EXPECT_LT(max_entry(v), 1e-12);
}

TEST(Omega, SolveFailureOnIndefiniteOperator) {
  const Grid1D g{1.0, 4};
  const auto k = kernel_from_s_prime(g, std::vector<Matrix>(5, scalar(0.1)));
  auto family = build_Sl_family(k);
  family.back().H = -family.back().H;
  try {
    recover_omega2(k, family);
    FAIL() << "expected SolveFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::solve_failure);
  }
}

// Forward rows for constant v: W(x) = exp(V x) at z = 0.
BlockRows forward_rows(const Matrix& v, const Grid1D& g) {
  const int p = static_cast<int>(v.rows());
  BlockRows rows;
  rows.grid = g;
  rows.p = p;
  for (int i = 0; i <= g.n; ++i) {
    const Matrix w = expm(block_potential(v) * g.at(i));
    rows.omega1.push_back(w.topRows(p));
    rows.omega2.push_back(w.bottomRows(p));
  }
  return rows;
}

TEST(Omega, RotatedComplementMatchesForwardModel) {
  Matrix v(2, 2);
  v << Complex(0.2, 0.1), Complex(-0.1, 0.0), Complex(0.05, 0.1), Complex(0.1, -0.2);
  const Grid1D g{1.0, 100};
  const BlockRows exact = forward_rows(v, g);
  BlockRows rows = exact;
  rows.omega1.clear();
  recover_omega1(rows);
  for (std::size_t i = 0; i < rows.omega1.size(); ++i) EXPECT_LT(max_entry(rows.omega1[i] - exact.omega1[i]), 1e-6);
  const auto rec = recover_v(rows);
  for (int i = 1; i < g.n; ++i) EXPECT_LT(max_entry(rec[static_cast<std::size_t>(i)] - v), 1e-3);
  EXPECT_LT(orthonormality_defect(rows), 1e-12);
}

TEST(Omega, PhaseJump) {
  const Grid1D g{1.0, 4};
  BlockRows rows;
  rows.grid = g;
  rows.p = 1;
  Matrix a = Matrix::Zero(1, 2), b = Matrix::Zero(1, 2);
  a(0, 1) = 1.0;
  b(0, 0) = 1.0;
  rows.omega2 = {a, a, b, b, a};
  try {
    recover_omega1(rows);
    FAIL() << "expected PhaseJump";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::phase_jump);
  }
}

TEST(Omega, GridDerivativeExactOnQuartics) {
  const double h = 0.1;
  std::vector<Matrix> f;
  for (int i = 0; i <= 10; ++i) {
    const double x = i * h;
    f.push_back(scalar(x * x * x * x - 2.0 * x * x + 3.0));
  }
  const auto d = grid_derivative(f, h);
  for (int i = 0; i <= 10; ++i) {
    const double x = i * h;
    EXPECT_NEAR(d[static_cast<std::size_t>(i)](0, 0).real(), 4.0 * x * x * x - 4.0 * x, 1e-11);
  }
}

TEST(Inversion, SolitonRoundTrip) {
  const auto sol = make_soliton();
  const Grid1D g{1.0, 100};
  const auto r = invert_weyl(soliton_weyl(sol), 1.0, 1, g);
  double err = 0.0;
  for (int i = 1; i < g.n; ++i)
    err = std::max(err, std::abs(r.v[static_cast<std::size_t>(i)](0, 0) - soliton_formula({0.5, 0.5}, g.at(i), 0.0)));
  EXPECT_LT(err, 1e-2);
  EXPECT_LT(orthonormality_defect(r.rows), 1e-3);

  // omega_1 against [I 0] W(x, 0, 0) from the forward integrator
  const auto pair = build_mkdv_pair(sol.potential);
  const auto w = integrate_x(pair.G, 0.0, Complex(0.0, 0.0), 1.0, 100);
  for (int i = 0; i <= g.n; ++i)
    EXPECT_LT(max_entry(r.rows.omega1[static_cast<std::size_t>(i)] - w.mats[static_cast<std::size_t>(i)].topRows(1)), 1e-3);
  for (int i = 0; i <= g.n; ++i)
    EXPECT_LT(max_entry(r.rows.omega2[static_cast<std::size_t>(i)] - w.mats[static_cast<std::size_t>(i)].bottomRows(1)), 1e-3);
}

}  // namespace
