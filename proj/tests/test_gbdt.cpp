#include <gtest/gtest.h>

#include "support.hpp"

using namespace zcf;
using namespace zcf::testing;

namespace {

const Domain2D kBox(2.0, 1.0, 8, 8);

TEST(SNode, ValidationAndSylvesterCompletion) {
  const SNode node = soliton_node();
  EXPECT_LT(node.identity_defect(), 1e-14);
  EXPECT_NEAR(node.s0(0, 0).real(), 2.0, 1e-14);  // |pi|^2 / (2 Im a)
  SNode bad = node;
  bad.s0(0, 0) = 3.0;
  EXPECT_THROW(bad.validate(), Error);
  Matrix a(1, 1);
  a(0, 0) = 1.0;
  try {
    SNode::from_parameters(a, a, Matrix::Ones(1, 2), Matrix::Ones(1, 2));
    FAIL() << "expected SpectraClash";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::spectra_clash);
  }
}

TEST(SNode, ReductionGivesHermitianPositiveS) {
  const SNode node = two_soliton_node();
  EXPECT_LT(op_norm(node.s0 - node.s0.adjoint()), 1e-14);
  EXPECT_GT(hermitian_min_eig(node.s0), 0.0);
}

TEST(Flow, RungeKuttaMatchesClosedFormAndKeepsIdentity) {
  const SNode node = two_soliton_node();
  const auto seed = zero_seed_pair(1, kBox);
  const GBDTField flowed = flow_field(node, seed.G, seed.F, kBox, 40, 80);
  const ZeroSeedMkdvField exact(node, 1);
  for (int k = 0; k <= kBox.nt; ++k)
    for (int i = 0; i <= kBox.nx; ++i) {
      const NodeState e = exact(kBox.x_at(i), kBox.t_at(k));
      const NodeState& f = flowed.at(i, k);
      EXPECT_LT(op_norm(f.s - e.s) / op_norm(e.s), 1e-8);
      EXPECT_LT(op_norm(f.pi1 - e.pi1) / op_norm(e.pi1), 1e-8);
    }
  EXPECT_LT(flowed.max_identity_defect(node), 1e-8);
}

TEST(Flow, PoleFlowKeepsIdentity) {
  std::mt19937 rng(5);
  SNode node;
  node.a1 = random_matrix(rng, 2, 2, 0.5);
  node.a2 = random_matrix(rng, 2, 2, 0.5) + 3.0 * identity(2);
  node.pi1_0 = random_matrix(rng, 2, 2, 0.5);
  node.pi2_0 = random_matrix(rng, 2, 2, 0.5);
  node = SNode::from_parameters(node.a1, node.a2, node.pi1_0, node.pi2_0);
  const Domain2D d(1.0, 1.0, 4, 4);
  auto varying = [](Complex c) {
    return Coefficient([c](double x, double t) {
      Matrix m(2, 2);
      m << c * std::cos(x + t), 0.3 * x, Complex(0.0, 0.2) * t, -c;
      return m;
    });
  };
  const SpectralPencil g(2, d, {varying(1.0), Coefficient::constant(-kI * signature(1))},
                         {Pole{Complex(0.5, 5.0), {varying(0.4), varying(0.1)}}});
  const auto states = flow_x(node, g, NodeState::at_origin(node), 0.0, 0.0, 1.0, 800);
  for (const auto& st : states) EXPECT_LT(identity_defect(node, st), 1e-10);
}

TEST(Darboux, InverseOverRandomDraws) {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const SNode node = two_soliton_node();
  const ZeroSeedMkdvField field(node, 1);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double x = 1.0 + 0.5 * u(rng), t = 0.5 + 0.25 * u(rng);
    const Complex z(u(rng), u(rng) - 1.0);
    const NodeState st = field(x, t);
    worst = std::max(worst, op_norm(darboux_matrix(node, st, z) * darboux_inverse(node, st, z) - identity(2)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Darboux, SingularCases) {
  const SNode node = soliton_node();
  const NodeState st = NodeState::at_origin(node);
  try {
    darboux_matrix(node, st, node.a1(0, 0));
    FAIL() << "expected ResolventSingular";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::resolvent_singular);
  }
  NodeState singular = st;
  singular.s.setZero();
  try {
    darboux_matrix(node, singular, Complex(0.0, -2.0));
    FAIL() << "expected OutsideDS";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::outside_ds);
  }
}

TEST(Darboux, SpectraClashWithPencilPole) {
  const SNode node = soliton_node();
  const SpectralPencil g(2, kBox, {Coefficient::constant(identity(2))},
                         {Pole{node.a1(0, 0), {Coefficient::constant(identity(2))}}});
  try {
    NodeFlow flow(node, g);
    FAIL() << "expected SpectraClash";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::spectra_clash);
  }
}

TEST(Darboux, OdeResidualOnSoliton) {
  const SNode node = soliton_node();
  const auto sol = mkdv_soliton(node, 1, kBox);
  const auto seed = zero_seed_pair(1, kBox);
  for (const Complex z : {Complex(0.3, -2.0), Complex(-1.0, 0.5), Complex(2.0, 1.0)}) {
    EXPECT_LT(darboux_ode_residual(sol.node_field, node, seed.G, Axis::x, 1.0, 0.5, z, 1e-4), 1e-5);
    EXPECT_LT(darboux_ode_residual(sol.node_field, node, seed.F, Axis::t, 1.0, 0.5, z, 1e-4), 1e-5);
  }
}

TEST(Darboux, TransformedPencilsAreTheMkdvPencils) {
  const SNode node = two_soliton_node();
  const auto sol = mkdv_soliton(node, 1, kBox);
  const auto seed = zero_seed_pair(1, kBox);
  const auto tp = transformed_pencils(sol.node_field, node, seed.G, seed.F);
  const auto mp = build_mkdv_pair(sol.potential);
  const Complex z(0.4, -1.7);
  EXPECT_LT(op_norm(tp.G(1.2, 0.3, z) - mp.G(1.2, 0.3, z)), 1e-12);
  EXPECT_LT(op_norm(tp.F(1.2, 0.3, z) - mp.F(1.2, 0.3, z)), 1e-10);
  const auto rep = verify_transformed_zero_curvature(sol.node_field, node, seed.G, seed.F, 1.2, 0.3, z);
  EXPECT_LT(rep.residual, 1e-5);
  EXPECT_FALSE(rep.ill_conditioned);
}

// Seed with constant diagonal coefficients and poles: compatible, with
// pole parts of order one and two in both pencils.
struct PoleSeed {
  SpectralPencil G, F;
};

PoleSeed pole_seed(const Domain2D& d) {
  Matrix d1 = Matrix::Zero(2, 2), d2 = Matrix::Zero(2, 2), d3 = Matrix::Zero(2, 2);
  d1.diagonal() << Complex(0.0, 1.0), Complex(0.0, -1.0);
  d2.diagonal() << Complex(0.3, 0.0), Complex(-0.2, 0.1);
  d3.diagonal() << Complex(0.1, 0.2), Complex(0.0, 0.4);
  const auto C = Coefficient::constant;
  return {SpectralPencil(2, d, {C(d2), C(d1)}, {Pole{Complex(0.0, 3.0), {C(d3), C(d2)}}}),
          SpectralPencil(2, d, {C(d3), C(d2), C(d1)}, {Pole{Complex(1.0, -3.0), {C(d2), C(d3)}}})};
}

SNode generic_node() {
  std::mt19937 rng(9);
  const Matrix a1 = random_matrix(rng, 2, 2, 0.4);
  const Matrix a2 = random_matrix(rng, 2, 2, 0.4) + Complex(0.0, 1.5) * identity(2);
  return SNode::from_parameters(a1, a2, random_matrix(rng, 2, 2, 0.5), random_matrix(rng, 2, 2, 0.5));
}

TEST(Darboux, PolePartsSatisfyTheDarbouxOde) {
  const Domain2D d(1.0, 1.0, 4, 4);
  const auto seed = pole_seed(d);
  const SNode node = generic_node();
  const NodeField field = flow_node_field(node, seed.G, seed.F, 400);
  for (const Complex z : {Complex(0.2, -0.7), Complex(1.5, 0.5)}) {
    EXPECT_LT(darboux_ode_residual(field, node, seed.G, Axis::x, 0.5, 0.4, z, 1e-5), 1e-6);
    EXPECT_LT(darboux_ode_residual(field, node, seed.F, Axis::t, 0.0, 0.5, z, 1e-5), 1e-6);
  }
}

TEST(Darboux, PolePartsGiveCompatibleTransformedPair) {
  const Domain2D d(1.0, 1.0, 4, 4);
  const auto seed = pole_seed(d);
  ASSERT_LT(zero_curvature_residual(seed.G, seed.F, 0.5, 0.5, Complex(0.2, 0.2)), 1e-14);
  const SNode node = generic_node();
  FdOptions fd;
  fd.h_x = fd.h_t = 1e-3;
  const SpectralPencil g(2, d, seed.G.poly(), seed.G.poles(), fd), f(2, d, seed.F.poly(), seed.F.poles(), fd);
  const NodeField field = flow_node_field(node, g, f, 200);
  const auto rep = verify_transformed_zero_curvature(field, node, g, f, 0.5, 0.5, Complex(0.2, 0.2));
  EXPECT_LT(rep.residual, 1e-5);
}

TEST(Darboux, NormalizedWaveSolvesTransformedSystem) {
  const SNode node = soliton_node();
  const auto sol = mkdv_soliton(node, 1, kBox);
  const auto seed = zero_seed_pair(1, kBox);
  const auto mp = build_mkdv_pair(sol.potential);
  const Complex z(0.3, -1.6);
  EXPECT_LT(op_norm(normalized_wave(sol.node_field, node, seed.G, seed.F, 0.0, 0.0, z, 10) - identity(2)), 1e-14);
  const double x = 1.0, t = 0.5, h = 1e-4;
  auto w = [&](double xs) { return normalized_wave(sol.node_field, node, seed.G, seed.F, xs, t, z, 200); };
  const Matrix dw = (w(x + h) - w(x - h)) / (2.0 * h);
  EXPECT_LT(op_norm(dw - mp.G(x, t, z) * w(x)) / op_norm(w(x)), 1e-6);
}

TEST(Soliton, OneSolitonOracle) {
  const auto sol = mkdv_soliton(soliton_node(), 1, kBox);
  EXPECT_NEAR(sol.sup_v, 1.0, 0.05);
  EXPECT_LT(sol.structure_defect, 1e-12);
  for (double x : {0.1, 0.9, 1.7})
    for (double t : {0.2, 0.8}) {
      EXPECT_LT(std::abs(sol.potential.value(x, t)(0, 0) - soliton_formula({0.5, 0.5}, x, t)), 1e-12);
      const double h = 1e-5;
      const Matrix fd = (sol.potential.value(x + h, t) - sol.potential.value(x - h, t)) / (2.0 * h);
      EXPECT_LT(max_entry(fd - sol.potential.dx(x, t)), 1e-8);
    }
  EXPECT_LT(mkdv_residual(sol.potential, 1.0, 0.5, 1e-3), 1e-4);
}

TEST(Soliton, TwoSolitonSolvesMkdv) {
  const auto sol = mkdv_soliton(two_soliton_node(), 1, kBox);
  for (double x : {0.5, 1.0, 1.5})
    for (double t : {0.25, 0.75}) EXPECT_LT(mkdv_residual(sol.potential, x, t, 1e-3), 1e-4);
}

TEST(Soliton, MatrixValuedSolution) {
  // p = 2, n = 2
  Matrix a1 = Matrix::Zero(2, 2);
  a1(0, 0) = Complex(0.2, 0.7);
  a1(1, 1) = Complex(-0.4, 0.5);
  Matrix pi1(2, 4);
  pi1 << 1.0, 0.0, 1.0, 0.5, 0.0, 1.0, Complex(0.0, 0.5), 1.0;
  const auto sol = mkdv_soliton(SNode::skew_reduction(a1, pi1), 2, kBox);
  EXPECT_LT(sol.structure_defect, 1e-10);
  EXPECT_LT(mkdv_residual(sol.potential, 1.0, 0.5, 1e-3), 1e-4);
}

TEST(Soliton, DsViolationFromNonReducedNode) {
  // S = cos(2 (t - x)) vanishes on x = t + pi/4
  Matrix a1(1, 1), a2(1, 1);
  a1(0, 0) = 1.0;
  a2(0, 0) = -1.0;
  const SNode node = SNode::from_parameters(a1, a2, Matrix::Ones(1, 2), Matrix::Ones(1, 2));
  EXPECT_NEAR(node.s0(0, 0).real(), 1.0, 1e-14);
  try {
    mkdv_soliton(node, 1, kBox);
    FAIL() << "expected DSViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ds_violation);
  }
}

TEST(Soliton, StructureBrokenWithoutReduction) {
  Matrix a1(1, 1), a2(1, 1);
  a1(0, 0) = Complex(0.5, 0.5);
  a2(0, 0) = Complex(0.5, -0.5);
  Matrix pi2(1, 2);
  pi2 << 1.0, 2.0;
  const SNode node = SNode::from_parameters(a1, a2, Matrix::Ones(1, 2), pi2);
  try {
    mkdv_soliton(node, 1, kBox);
    FAIL() << "expected StructureBroken";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::structure_broken);
  }
}

TEST(Soliton, TrivialNodeGivesZeroPotential) {
  Matrix a(1, 1);
  a(0, 0) = Complex(0.0, 1.0);
  SNode node{a, a, identity(1), Matrix::Zero(1, 2), Matrix::Zero(1, 2)};
  const auto sol = mkdv_soliton(node, 1, Domain2D(1.0, 1.0, 2, 2));
  EXPECT_LT(sol.sup_v, 1e-15);
  EXPECT_LT(max_entry(sol.potential.value(0.5, 0.5)), 1e-15);
}

TEST(DsDetection, WindingAroundComplexZero) {
  const Domain2D d(1.0, 1.0, 4, 4);
  NodeField nf = [](double x, double t) {
    NodeState st;
    st.pi1 = Matrix::Zero(1, 2);
    st.pi2_adj = Matrix::Zero(2, 1);
    st.s = scalar(Complex(x - 0.4, t - 0.6));
    return st;
  };
  const auto hit = find_ds_violation(sample_field(nf, d));
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->first, 0.375, 1e-12);
  EXPECT_NEAR(hit->second, 0.625, 1e-12);
  NodeField away = [](double x, double t) {
    NodeState st;
    st.pi1 = Matrix::Zero(1, 2);
    st.pi2_adj = Matrix::Zero(2, 1);
    st.s = scalar(Complex(x + 2.0, t));
    return st;
  };
  EXPECT_FALSE(find_ds_violation(sample_field(away, d)).has_value());
}

TEST(Kronecker, CompatibleAndIncompatiblePairs) {
  std::mt19937 rng(17);
  const Matrix a1 = random_matrix(rng, 2, 2);
  const auto sol = mkdv_soliton(soliton_node(), 1, kBox);
  const auto good = build_mkdv_pair(sol.potential);
  EXPECT_LT(kronecker_compat_check(good.G, good.F, a1, 1.0, 0.5), 1e-5);
  MkdvPotential bad;
  bad.p = 1;
  bad.v = [](double x, double t) { return scalar(0.8 * x * t); };
  bad.domain = kBox;
  const auto bp = build_mkdv_pair(bad);
  EXPECT_GT(kronecker_compat_check(bp.G, bp.F, a1, 1.0, 0.5), 1e-3);
  const auto seed = pole_seed(kBox);
  try {
    kronecker_compat_check(seed.G, seed.F, a1, 1.0, 0.5);
    FAIL() << "expected PolesPresent";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::poles_present);
  }
}

}  // namespace
