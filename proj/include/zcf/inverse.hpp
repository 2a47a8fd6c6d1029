#pragma once

// Recovery of v from the Weyl function phi of the skew-self-adjoint Dirac
// system at a fixed time:
//
//   s(x)  = (i / 2 pi) e^{-eta x} int e^{i xi x} z^{-1} phi(z/2) d xi,  z = xi + i eta,
//   (S_l f)(x) = f(x) + 1/2 int_0^l K(x, r) f(r) dr,
//   K(x, r) = 2 int_{max(0, x-r)}^{x} s'(u) s'(u + r - x)^* du,
//   omega_2(l) = [0 I] - int_0^l (S_l^{-1} s')(x)^* [I s(x)] dx,
//   v = omega_1' omega_2^*.

#include <numbers>
#include <optional>
#include <vector>

#include "zcf/linalg.hpp"

namespace zcf {

using WeylProvider = std::function<Matrix(Complex)>;

/// Uniform grid of N + 1 nodes on [0, l].
struct Grid1D {
  double l = 1.0;
  int n = 1;

  double h() const { return l / n; }
  double at(int i) const { return i == n ? l : i * h(); }
  int size() const { return n + 1; }
};

struct TransformKernel {
  Grid1D grid;
  int p = 1;
  std::vector<Matrix> s;        // s(x_i), with s(0) = 0
  std::vector<Matrix> s_prime;  // s'(x_i)
  double eta = 0.0;
  double a_trunc = 0.0;   // truncation actually used
  double s0_offset = 0.0; // |s(0)| before the shift
  double last_change = 0.0;  // max node change at the final doubling
};

struct FourierOptions {
  std::optional<double> eta;   // default -2M - 1
  double a0 = 200.0;           // initial truncation
  double d_xi = 0.25;          // quadrature step in xi
  double tol = 1e-4;           // doubling criterion
  int max_doublings = 8;
  bool tail_correction = true;  // subtract c1/zeta + c2/zeta^2 and add their exact transforms
  bool fixed_truncation = false;  // one pass at a0, no doubling
};

namespace detail {

struct TailFit {
  Matrix c1, c2;
};

// zeta phi(zeta) ~ c1 + c2 / zeta fitted at the two truncation endpoints.
inline TailFit fit_tail(const WeylProvider& phi, double a, double eta) {
  const Complex zp = 0.5 * Complex(a, eta), zm = 0.5 * Complex(-a, eta);
  const Matrix gp = zp * phi(zp), gm = zm * phi(zm);
  const Complex ip = 1.0 / zp, im = 1.0 / zm;
  TailFit f;
  f.c2 = (gp - gm) / (ip - im);
  f.c1 = gp - ip * f.c2;
  return f;
}

// s and s' on the grid with truncation a (before the s(0) shift).
inline void fourier_pass(const WeylProvider& phi, const Grid1D& grid, double eta, double a, const FourierOptions& opt,
                         int p, std::vector<Matrix>& s, std::vector<Matrix>& sp) {
  const int half = static_cast<int>(std::ceil(a / opt.d_xi));
  const double dxi = a / half;
  std::optional<TailFit> tail;
  if (opt.tail_correction) tail = fit_tail(phi, a, eta);
  std::vector<Complex> zs;
  std::vector<Matrix> f;  // phi(z/2) minus the tail model, with trapezoid weight
  for (int k = -half; k <= half; ++k) {
    const double xi = k * dxi;
    const Complex z(xi, eta);
    const Complex zeta = 0.5 * z;
    Matrix val = phi(zeta);
    if (tail) val -= tail->c1 / zeta + tail->c2 / (zeta * zeta);
    const double w = (k == -half || k == half) ? 0.5 * dxi : dxi;
    zs.push_back(z);
    f.push_back(w * val);
  }
  s.assign(static_cast<std::size_t>(grid.size()), Matrix::Zero(p, p));
  sp.assign(static_cast<std::size_t>(grid.size()), Matrix::Zero(p, p));
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.at(i);
    Matrix acc_s = Matrix::Zero(p, p), acc_sp = Matrix::Zero(p, p);
    for (std::size_t k = 0; k < zs.size(); ++k) {
      const Complex e = std::exp(kI * zs[k] * x);  // e^{i xi x} e^{-eta x}
      acc_s += (e / zs[k]) * f[k];
      acc_sp += e * f[k];
    }
    s[static_cast<std::size_t>(i)] = (kI / (2.0 * std::numbers::pi)) * acc_s;
    sp[static_cast<std::size_t>(i)] = (-1.0 / (2.0 * std::numbers::pi)) * acc_sp;
    if (tail) {
      // c1/zeta -> s = -2i c1 x, s' = -2i c1;  c2/zeta^2 -> s = 2 c2 x^2, s' = 4 c2 x
      s[static_cast<std::size_t>(i)] += -2.0 * kI * x * tail->c1 + 2.0 * x * x * tail->c2;
      sp[static_cast<std::size_t>(i)] += -2.0 * kI * tail->c1 + 4.0 * x * tail->c2;
    }
  }
}

}  // namespace detail

/// s and s' on [0, l] from Weyl function values on the line Im zeta = eta / 2.
/// The truncation is doubled until no node moves by more than opt.tol.
inline TransformKernel fourier_s(const WeylProvider& phi, double M, int p, const Grid1D& grid,
                                 const FourierOptions& opt = {}) {
  require(grid.n >= 1 && grid.l > 0.0, "fourier_s: empty grid");
  require(opt.d_xi > 0.0 && opt.a0 > 0.0 && opt.tol > 0.0, "fourier_s: bad quadrature options");
  const double eta = opt.eta.value_or(-2.0 * M - 1.0);
  if (eta >= -2.0 * M) fail(Errc::eta_violation, "eta must satisfy eta < -2M");

  TransformKernel k;
  k.grid = grid;
  k.p = p;
  k.eta = eta;
  std::vector<Matrix> s, sp, s_next, sp_next;
  double a = opt.a0;
  detail::fourier_pass(phi, grid, eta, a, opt, p, s, sp);
  bool converged = opt.fixed_truncation;
  for (int d = 0; !opt.fixed_truncation && d < opt.max_doublings; ++d) {
    detail::fourier_pass(phi, grid, eta, 2.0 * a, opt, p, s_next, sp_next);
    double change = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) change = std::max(change, max_entry(s_next[i] - s[i]));
    a *= 2.0;
    s.swap(s_next);
    sp.swap(sp_next);
    k.last_change = change;
    if (change <= opt.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) fail(Errc::tail_too_fat, "doubling the truncation keeps changing s beyond the tolerance");
  k.a_trunc = a;
  const Matrix s0 = s[0];
  k.s0_offset = max_entry(s0);
  for (auto& m : s) m -= s0;
  k.s = std::move(s);
  k.s_prime = std::move(sp);
  return k;
}

/// Kernel from tabulated s' (s is recovered by trapezoid integration).
inline TransformKernel kernel_from_s_prime(const Grid1D& grid, const std::vector<Matrix>& s_prime) {
  require(static_cast<int>(s_prime.size()) == grid.size(), "kernel_from_s_prime: size mismatch");
  TransformKernel k;
  k.grid = grid;
  k.p = static_cast<int>(s_prime[0].rows());
  k.s_prime = s_prime;
  k.s.assign(s_prime.size(), Matrix::Zero(k.p, k.p));
  for (std::size_t i = 1; i < s_prime.size(); ++i) k.s[i] = k.s[i - 1] + 0.5 * grid.h() * (s_prime[i - 1] + s_prime[i]);
  return k;
}

/// K(x_i, x_k) on the whole grid, as an (N+1)p square matrix. Sums run along
/// diagonals so that each entry costs O(1) block products.
inline Matrix kernel_matrix(const TransformKernel& ker) {
  const int n1 = ker.grid.size();
  const int p = ker.p;
  const double h = ker.grid.h();
  Matrix K = Matrix::Zero(static_cast<Eigen::Index>(n1) * p, static_cast<Eigen::Index>(n1) * p);
  const auto& sp = ker.s_prime;
  for (int d = -(n1 - 1); d <= n1 - 1; ++d) {
    // K(i, i + d) = 2 h trap_{m = max(0, -d)}^{i} s'_m s'_{m+d}^*
    const int m0 = std::max(0, -d);
    const int i_hi = std::min(n1 - 1, n1 - 1 - d);
    Matrix cum = Matrix::Zero(p, p);
    Matrix first;
    for (int i = m0; i <= i_hi; ++i) {
      const Matrix term = sp[static_cast<std::size_t>(i)] * sp[static_cast<std::size_t>(i + d)].adjoint();
      Matrix val;
      if (i == m0) {
        first = term;
        val = Matrix::Zero(p, p);
      } else {
        cum += term;
        val = 2.0 * h * (cum - 0.5 * term + 0.5 * first);
      }
      K.block(static_cast<Eigen::Index>(i) * p, static_cast<Eigen::Index>(i + d) * p, p, p) = val;
    }
  }
  return K;
}

inline std::vector<double> trapezoid_weights(double h, int last) {
  std::vector<double> w(static_cast<std::size_t>(last) + 1, h);
  if (last == 0) {
    w[0] = 0.0;
    return w;
  }
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

/// S_l on the nodes x_0..x_L, in the symmetric form H = I + 1/2 D K D with
/// D = diag(sqrt(w)); the Nystrom matrix I + 1/2 K W equals D^{-1} H D.
struct StructuredOperator {
  double l = 0.0;
  int last = 0;  // L
  int p = 1;
  Matrix H;
  std::vector<double> weights;
  double min_eig = 1.0;
  double hermitian_defect = 0.0;
};

inline StructuredOperator structured_operator(const Matrix& K, const TransformKernel& ker, int last) {
  require(last >= 0 && last < ker.grid.size(), "structured_operator: node out of range");
  const int p = ker.p;
  const Eigen::Index size = static_cast<Eigen::Index>(last + 1) * p;
  StructuredOperator op;
  op.l = ker.grid.at(last);
  op.last = last;
  op.p = p;
  op.weights = trapezoid_weights(ker.grid.h(), last);
  Eigen::VectorXd d(size);
  for (int i = 0; i <= last; ++i) d.segment(static_cast<Eigen::Index>(i) * p, p).setConstant(std::sqrt(op.weights[static_cast<std::size_t>(i)]));
  Matrix h = 0.5 * (d.asDiagonal() * K.topLeftCorner(size, size) * d.asDiagonal());
  op.H = identity(size) + h;
  op.hermitian_defect = max_entry(op.H - op.H.adjoint());
  op.H = 0.5 * (op.H + op.H.adjoint());
  op.min_eig = hermitian_min_eig(op.H);
  return op;
}

/// Throws GridTooCoarse if min eig < 1 - 1e-2. The trapezoid Gram kernel
/// keeps S_l >= I for any s', so this fires only for kernels assembled
/// some other way.
inline void require_operator_inequality(const StructuredOperator& op) {
  if (op.min_eig < 1.0 - 1e-2)
    fail(Errc::grid_too_coarse, "discretized S_l lost the inequality S_l >= I at l = " + std::to_string(op.l));
}

/// S_l on the full grid.
inline StructuredOperator build_Sl(const TransformKernel& ker) {
  StructuredOperator op = structured_operator(kernel_matrix(ker), ker, ker.grid.n);
  require_operator_inequality(op);
  return op;
}

/// S_l for every grid endpoint l = x_1..x_N (entry 0 is the empty l = 0 case).
inline std::vector<StructuredOperator> build_Sl_family(const TransformKernel& ker) {
  const Matrix K = kernel_matrix(ker);
  std::vector<StructuredOperator> out;
  for (int last = 0; last <= ker.grid.n; ++last) {
    out.push_back(structured_operator(K, ker, last));
    require_operator_inequality(out.back());
  }
  return out;
}

struct BlockRows {
  Grid1D grid;
  int p = 1;
  std::vector<Matrix> omega1;  // p x 2p
  std::vector<Matrix> omega2;  // p x 2p
};

/// omega_2 at every grid node from the operator family.
inline BlockRows recover_omega2(const TransformKernel& ker, const std::vector<StructuredOperator>& family) {
  require(static_cast<int>(family.size()) == ker.grid.size(), "recover_omega2: one operator per node expected");
  const int p = ker.p;
  BlockRows rows;
  rows.grid = ker.grid;
  rows.p = p;
  Matrix base = Matrix::Zero(p, 2 * p);
  base.rightCols(p) = identity(p);
  for (const auto& op : family) {
    const int last = op.last;
    const Eigen::Index size = static_cast<Eigen::Index>(last + 1) * p;
    Matrix rhs(size, p);
    for (int i = 0; i <= last; ++i)
      rhs.middleRows(static_cast<Eigen::Index>(i) * p, p) =
          std::sqrt(op.weights[static_cast<std::size_t>(i)]) * ker.s_prime[static_cast<std::size_t>(i)];
    const Eigen::LLT<Matrix> llt(op.H);
    if (llt.info() != Eigen::Success) fail(Errc::solve_failure, "S_l is not positive definite");
    const Matrix y = llt.solve(rhs);
    const double resid = op_norm(op.H * y - rhs) / std::max(1.0, op_norm(rhs));
    if (resid > 1e-8) fail(Errc::solve_failure, "linear solve residual exceeds 1e-8");
    Matrix w2 = base;
    for (int i = 0; i <= last; ++i) {
      const double wi = op.weights[static_cast<std::size_t>(i)];
      if (wi == 0.0) continue;
      // g_i = y_i / sqrt(w_i); w_i g_i^* = sqrt(w_i) y_i^*
      const Matrix gi_adj = std::sqrt(wi) * y.middleRows(static_cast<Eigen::Index>(i) * p, p).adjoint();
      Matrix row(p, 2 * p);
      row << identity(p), ker.s[static_cast<std::size_t>(i)];
      w2 -= gi_adj * row;
    }
    rows.omega2.push_back(w2);
  }
  return rows;
}

/// omega_1 from omega_2: an orthonormal complement kept continuous by polar
/// alignment with the previous node, then corrected by a unitary u with
/// u' = -u omega^_1' omega^_1^*, so that omega_1' omega_1^* = 0.
inline void recover_omega1(BlockRows& rows) {
  const int p = rows.p;
  const std::size_t count = rows.omega2.size();
  require(count >= 1, "recover_omega1: no rows");
  std::vector<Matrix> hat(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Matrix w2 = rows.omega2[i];
    Eigen::HouseholderQR<Matrix> qr(w2.adjoint());
    const Matrix q = qr.householderQ() * identity(2 * p);
    Matrix c = q.rightCols(p).adjoint();  // rows orthogonal to omega_2
    if (i > 0) {
      const Matrix overlap = c * hat[i - 1].adjoint();
      if (min_singular_value(overlap) < 0.5)
        fail(Errc::phase_jump, "complements of neighbouring nodes barely overlap; refine the grid");
      c = unitary_polar(overlap).adjoint() * c;
    }
    hat[i] = c;
  }
  const double h = rows.grid.h();
  Matrix e1 = Matrix::Zero(p, 2 * p);
  e1.leftCols(p) = identity(p);
  Matrix u = e1 * hat[0].adjoint();
  u = unitary_polar(u);
  rows.omega1.assign(count, Matrix());
  rows.omega1[0] = u * hat[0];
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const Matrix d = (hat[i + 1] - hat[i]) / h;
    const Matrix mid = 0.5 * (hat[i + 1] + hat[i]);
    Matrix omega = d * mid.adjoint();
    omega = 0.5 * (omega - omega.adjoint());
    u = u * expm(-h * omega);
    rows.omega1[i + 1] = u * hat[i + 1];
  }
}

/// Fourth-order first derivative of tabulated values (one-sided at the ends).
inline std::vector<Matrix> grid_derivative(const std::vector<Matrix>& f, double h) {
  const int n = static_cast<int>(f.size());
  require(n >= 5, "grid_derivative needs at least five nodes");
  std::vector<Matrix> out(f.size());
  auto F = [&](int i) -> const Matrix& { return f[static_cast<std::size_t>(i)]; };
  for (int i = 0; i < n; ++i) {
    Matrix d;
    if (i >= 2 && i <= n - 3) {
      d = (-F(i + 2) + 8.0 * F(i + 1) - 8.0 * F(i - 1) + F(i - 2)) / (12.0 * h);
    } else if (i < 2) {
      d = (-25.0 * F(i) + 48.0 * F(i + 1) - 36.0 * F(i + 2) + 16.0 * F(i + 3) - 3.0 * F(i + 4)) / (12.0 * h);
    } else {
      d = -(-25.0 * F(i) + 48.0 * F(i - 1) - 36.0 * F(i - 2) + 16.0 * F(i - 3) - 3.0 * F(i - 4)) / (12.0 * h);
    }
    out[static_cast<std::size_t>(i)] = d;
  }
  return out;
}

/// v(x_i) = omega_1'(x_i) omega_2(x_i)^*.
inline std::vector<Matrix> recover_v(const BlockRows& rows) {
  require(rows.omega1.size() == rows.omega2.size(), "recover_v: omega_1 missing");
  const auto d1 = grid_derivative(rows.omega1, rows.grid.h());
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < d1.size(); ++i) v.push_back(d1[i] * rows.omega2[i].adjoint());
  return v;
}

/// Worst row-orthonormality defect of omega_1, omega_2 over the grid.
inline double orthonormality_defect(const BlockRows& rows) {
  const int p = rows.p;
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.omega2.size(); ++i) {
    worst = std::max(worst, op_norm(rows.omega2[i] * rows.omega2[i].adjoint() - identity(p)));
    if (i < rows.omega1.size()) {
      worst = std::max(worst, op_norm(rows.omega1[i] * rows.omega1[i].adjoint() - identity(p)));
      worst = std::max(worst, op_norm(rows.omega1[i] * rows.omega2[i].adjoint()));
    }
  }
  return worst;
}

struct InversionResult {
  TransformKernel kernel;
  BlockRows rows;
  std::vector<Matrix> v;
  std::vector<double> min_eig;  // per l-node
};

/// The whole pipeline: fourier_s, S_l family, omega_2, omega_1, v.
inline InversionResult invert_weyl(const WeylProvider& phi, double M, int p, const Grid1D& grid,
                                   const FourierOptions& opt = {}) {
  InversionResult r;
  r.kernel = fourier_s(phi, M, p, grid, opt);
  const auto family = build_Sl_family(r.kernel);
  for (const auto& op : family) r.min_eig.push_back(op.min_eig);
  r.rows = recover_omega2(r.kernel, family);
  recover_omega1(r.rows);
  r.v = recover_v(r.rows);
  return r;
}

}  // namespace zcf
