#pragma once

#include <random>

#include "zcf/gbdt.hpp"

namespace zcf::testing {

/// n = 1 node with a1 = alpha + i beta and Pi1 = [1 1].
inline SNode soliton_node(Complex a = {0.5, 0.5}) {
  Matrix a1(1, 1);
  a1(0, 0) = a;
  Matrix pi1(1, 2);
  pi1 << 1.0, 1.0;
  return SNode::skew_reduction(a1, pi1);
}

/// Closed-form one-soliton for soliton_node(a):
/// 2 beta e^{-2i Im theta} sech(2 Re theta), theta = -i a x + i a^3 t.
inline Complex soliton_formula(Complex a, double x, double t) {
  const Complex theta = -kI * a * x + kI * a * a * a * t;
  return 2.0 * a.imag() * std::exp(-2.0 * kI * theta.imag()) / std::cosh(2.0 * theta.real());
}

/// n = 2 node with eigenvalues in the upper half-plane.
inline SNode two_soliton_node() {
  Matrix a1 = Matrix::Zero(2, 2);
  a1(0, 0) = Complex(0.4, 0.6);
  a1(1, 1) = Complex(-0.3, 0.9);
  Matrix pi1(2, 2);
  pi1 << 1.0, 1.0, Complex(0.5, 0.2), 1.0;
  return SNode::skew_reduction(a1, pi1);
}

inline Matrix random_matrix(std::mt19937& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(nd(rng), nd(rng));
  return m;
}

inline Matrix scalar(Complex c) {
  Matrix m(1, 1);
  m(0, 0) = c;
  return m;
}

}  // namespace zcf::testing
