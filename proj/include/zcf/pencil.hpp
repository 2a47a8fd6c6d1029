#pragma once

// Matrix families rational in the spectral parameter z:
//
//   G(x,t,z) = -( sum_k z^k q_k(x,t) + sum_s sum_k (z - c_s)^{-k} q_sk(x,t) ),
//
// plus the zero-curvature residual G_t - F_x + [G, F] of a pair.

#include <string>
#include <vector>

#include "zcf/linalg.hpp"

namespace zcf {

/// Rectangle [0, b1] x [0, b2] with a uniform sampling grid. Either extent
/// may be infinite (half-line problems); the grid is then meaningless in
/// that direction.
struct Domain2D {
  double x_length = 1.0;
  double t_length = 1.0;
  int nx = 1;
  int nt = 1;

  Domain2D() = default;
  Domain2D(double b1, double b2, int nx_ = 1, int nt_ = 1) : x_length(b1), t_length(b2), nx(nx_), nt(nt_) {
    require(b1 > 0.0 && b2 > 0.0, "domain extents must be positive");
    require(nx_ >= 1 && nt_ >= 1, "grid must have at least one interval per direction");
  }

  static Domain2D unbounded() { return Domain2D(kInf, kInf); }

  bool contains(double x, double t) const {
    const double sx = 1e-12 * (1.0 + (std::isfinite(x_length) ? x_length : 0.0));
    const double st = 1e-12 * (1.0 + (std::isfinite(t_length) ? t_length : 0.0));
    return x >= -sx && x <= x_length + sx && t >= -st && t <= t_length + st;
  }

  double dx() const { return x_length / nx; }
  double dt() const { return t_length / nt; }
  double x_at(int i) const { return i == nx ? x_length : i * dx(); }
  double t_at(int k) const { return k == nt ? t_length : k * dt(); }

  /// Default finite-difference steps: 1e-4 of the extent (1e-4 when unbounded).
  double default_h_x() const { return 1e-4 * (std::isfinite(x_length) ? x_length : 1.0); }
  double default_h_t() const { return 1e-4 * (std::isfinite(t_length) ? t_length : 1.0); }
};

/// One coefficient of a pencil with optional analytic partial derivatives.
struct Coefficient {
  Provider value;
  Provider d_dx;
  Provider d_dt;

  Coefficient() = default;
  Coefficient(Provider v, Provider dx = {}, Provider dt = {})
      : value(std::move(v)), d_dx(std::move(dx)), d_dt(std::move(dt)) {}

  static Coefficient constant(const Matrix& m) {
    Provider zero = [z = Matrix(Matrix::Zero(m.rows(), m.cols()))](double, double) { return z; };
    return Coefficient([m](double, double) { return m; }, zero, zero);
  }
};

/// Pole part at c: coeffs[k-1] multiplies (z - c)^{-k}.
struct Pole {
  Complex c;
  std::vector<Coefficient> coeffs;
};

struct FdOptions {
  double h_x = 0.0;  // 0 selects the domain default
  double h_t = 0.0;
  bool one_sided = true;
};

enum class Axis { x, t };

class SpectralPencil {
 public:
  SpectralPencil() = default;

  SpectralPencil(int m, Domain2D domain, std::vector<Coefficient> poly, std::vector<Pole> poles = {},
                 FdOptions fd = {})
      : m_(m), domain_(domain), poly_(std::move(poly)), poles_(std::move(poles)), fd_(fd) {
    require(m_ > 0, "pencil dimension must be positive");
    require(!poly_.empty(), "pencil needs at least the constant coefficient");
    for (std::size_t a = 0; a < poles_.size(); ++a) {
      require(!poles_[a].coeffs.empty(), "pole order must be positive");
      for (std::size_t b = a + 1; b < poles_.size(); ++b)
        require(std::abs(poles_[a].c - poles_[b].c) > 0.0, "poles must be pairwise distinct");
    }
    if (fd_.h_x <= 0.0) fd_.h_x = domain_.default_h_x();
    if (fd_.h_t <= 0.0) fd_.h_t = domain_.default_h_t();
  }

  int dim() const { return m_; }
  int degree() const { return static_cast<int>(poly_.size()) - 1; }
  const Domain2D& domain() const { return domain_; }
  const std::vector<Coefficient>& poly() const { return poly_; }
  const std::vector<Pole>& poles() const { return poles_; }
  const FdOptions& fd() const { return fd_; }
  bool has_poles() const { return !poles_.empty(); }

  double pole_tolerance(const Pole& p) const { return 1e-8 * std::max(1.0, std::abs(p.c)); }

  void check_point(double x, double t) const {
    if (!domain_.contains(x, t))
      fail(Errc::domain_error, "(" + std::to_string(x) + ", " + std::to_string(t) + ") is outside the pencil domain");
  }

  void check_z(Complex z) const {
    for (const auto& p : poles_)
      if (std::abs(z - p.c) < pole_tolerance(p)) fail(Errc::pole_hit, "spectral parameter sits on a pole");
  }

  /// -( sum z^k q_k + sum (z - c_s)^{-k} q_sk ).
  Matrix operator()(double x, double t, Complex z) const {
    check_point(x, t);
    check_z(z);
    return combine(z, [&](const Coefficient& c) { return c.value(x, t); });
  }

  /// Partial derivative of the pencil in x or t at fixed z.
  Matrix derivative(Axis axis, double x, double t, Complex z) const {
    check_point(x, t);
    check_z(z);
    return combine(z, [&](const Coefficient& c) { return coefficient_derivative(c, axis, x, t); });
  }

  Matrix d_dx(double x, double t, Complex z) const { return derivative(Axis::x, x, t, z); }
  Matrix d_dt(double x, double t, Complex z) const { return derivative(Axis::t, x, t, z); }

  Matrix coefficient_derivative(const Coefficient& c, Axis axis, double x, double t) const {
    const Provider& analytic = axis == Axis::x ? c.d_dx : c.d_dt;
    if (analytic) return analytic(x, t);
    if (axis == Axis::x) {
      return fd_derivative([&](double s) { return c.value(s, t); }, x, fd_.h_x, 1, 0.0, domain_.x_length,
                           fd_.one_sided);
    }
    return fd_derivative([&](double s) { return c.value(x, s); }, t, fd_.h_t, 1, 0.0, domain_.t_length,
                         fd_.one_sided);
  }

 private:
  template <class Eval>
  Matrix combine(Complex z, Eval&& eval) const {
    Matrix acc = Matrix::Zero(m_, m_);
    Complex zk = 1.0;
    for (const auto& c : poly_) {
      acc += zk * eval(c);
      zk *= z;
    }
    for (const auto& p : poles_) {
      const Complex inv = 1.0 / (z - p.c);
      Complex ik = inv;
      for (const auto& c : p.coeffs) {
        acc += ik * eval(c);
        ik *= inv;
      }
    }
    return -acc;
  }

  int m_ = 0;
  Domain2D domain_;
  std::vector<Coefficient> poly_;
  std::vector<Pole> poles_;
  FdOptions fd_;
};

inline Matrix eval_pencil(const SpectralPencil& g, double x, double t, Complex z) { return g(x, t, z); }

/// G_t - F_x + GF - FG at (x, t, z).
inline Matrix zero_curvature_defect(const SpectralPencil& g, const SpectralPencil& f, double x, double t, Complex z) {
  require(g.dim() == f.dim(), "zero curvature: pencils differ in dimension");
  const Matrix gv = g(x, t, z);
  const Matrix fv = f(x, t, z);
  return g.d_dt(x, t, z) - f.d_dx(x, t, z) + gv * fv - fv * gv;
}

/// Operator norm of the zero-curvature defect; vanishes iff the pair is compatible at (x, t, z).
inline double zero_curvature_residual(const SpectralPencil& g, const SpectralPencil& f, double x, double t,
                                      Complex z) {
  return op_norm(zero_curvature_defect(g, f, x, t, z));
}

}  // namespace zcf
