#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "zcf/core.hpp"

namespace zcf {

inline Matrix identity(Eigen::Index m) { return Matrix::Identity(m, m); }

/// Signature matrix diag(I_p, -I_p).
inline Matrix signature(Eigen::Index p) {
  Matrix j = Matrix::Identity(2 * p, 2 * p);
  j.bottomRightCorner(p, p) *= -1.0;
  return j;
}

/// Spectral (operator 2-) norm.
inline double op_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline double min_singular_value(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1);
}

inline double max_entry(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline Eigen::VectorXd hermitian_eigenvalues(const Matrix& a) {
  const Matrix h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double hermitian_min_eig(const Matrix& a) { return hermitian_eigenvalues(a).minCoeff(); }
inline double hermitian_max_eig(const Matrix& a) { return hermitian_eigenvalues(a).maxCoeff(); }

inline Matrix expm(const Matrix& a) { return a.exp(); }

/// Solves A X - X B = C through the Kronecker form (I (x) A - B^T (x) I) vec X = vec C.
/// Intended for the small orders used by S-nodes.
inline Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c) {
  const Eigen::Index n = a.rows();
  const Eigen::Index k = b.rows();
  require(a.cols() == n && b.cols() == k && c.rows() == n && c.cols() == k,
          "solve_sylvester: shape mismatch");
  const Matrix big = Eigen::kroneckerProduct(identity(k), a).eval() -
                     Eigen::kroneckerProduct(b.transpose(), identity(n)).eval();
  Eigen::FullPivLU<Matrix> lu(big);
  if (!lu.isInvertible()) fail(Errc::spectra_clash, "Sylvester operator is singular (spectra overlap)");
  const Eigen::VectorXcd rhs = Eigen::Map<const Eigen::VectorXcd>(c.data(), c.size());
  const Eigen::VectorXcd x = lu.solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), n, k);
}

/// Unitary factor of the polar decomposition A = U H.
inline Matrix unitary_polar(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

/// Powers A^0..A^count-1.
inline std::vector<Matrix> powers(const Matrix& a, int count) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  if (count <= 0) return out;
  out.push_back(identity(a.rows()));
  for (int k = 1; k < count; ++k) out.push_back(out.back() * a);
  return out;
}

/// Classical fourth-order Runge-Kutta step for y' = f(s, y).
template <class State, class Rhs>
State rk4_step(const State& y, double s, double h, Rhs&& f) {
  const State k1 = f(s, y);
  const State k2 = f(s + 0.5 * h, y + (0.5 * h) * k1);
  const State k3 = f(s + 0.5 * h, y + (0.5 * h) * k2);
  const State k4 = f(s + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Fourth-order accurate first and second derivatives of g at s with step h.
/// Central stencils are used when [s - 2h, s + 2h] (or 3h for one-sided
/// second derivatives) fits inside [lo, hi]; otherwise one-sided stencils,
/// unless `allow_one_sided` is false.
template <class F>
Matrix fd_derivative(F&& g, double s, double h, int order, double lo, double hi, bool allow_one_sided) {
  require(h > 0.0, "finite-difference step must be positive");
  require(order == 1 || order == 2, "finite-difference order must be 1 or 2");
  const double slack = 1e-12 * (1.0 + std::abs(s));
  const bool fits_left = s - 2.0 * h >= lo - slack;
  const bool fits_right = s + 2.0 * h <= hi + slack;
  if (fits_left && fits_right) {
    const Matrix fm2 = g(s - 2.0 * h), fm1 = g(s - h), fp1 = g(s + h), fp2 = g(s + 2.0 * h);
    if (order == 1) return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
    const Matrix f0 = g(s);
    return (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h);
  }
  if (!allow_one_sided) fail(Errc::derivative_unavailable, "stencil leaves the domain and one-sided differencing is disabled");
  const int reach = order == 1 ? 4 : 5;
  double dir = 0.0;
  if (s + reach * h <= hi + slack) dir = 1.0;
  else if (s - reach * h >= lo - slack) dir = -1.0;
  else fail(Errc::derivative_unavailable, "domain too short for a one-sided stencil");
  const double hs = dir * h;
  if (order == 1) {
    return (-25.0 * g(s) + 48.0 * g(s + hs) - 36.0 * g(s + 2 * hs) + 16.0 * g(s + 3 * hs) - 3.0 * g(s + 4 * hs)) /
           (12.0 * hs);
  }
  return (45.0 * g(s) - 154.0 * g(s + hs) + 214.0 * g(s + 2 * hs) - 156.0 * g(s + 3 * hs) + 61.0 * g(s + 4 * hs) -
          10.0 * g(s + 5 * hs)) /
         (12.0 * h * h);
}

}  // namespace zcf
