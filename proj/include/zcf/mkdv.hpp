#pragma once

// The focusing matrix mKdV equation 4 v_t = v_xxx + 3 (v_x v* v + v v* v_x),
// its zero-curvature pair
//
//   G = i z j + V,
//   F = -i z^3 j - z^2 V - (i z / 2)(V^2 + V_x) j + (1/4)(V_xx - 2 V^3 - V_x V + V V_x),
//
// with V = [[0, v], [-v*, 0]], the j-structure of the fundamental solutions,
// and Weyl functions of the skew-self-adjoint Dirac system together with
// their Moebius evolution in t.

#include <numbers>
#include <optional>
#include <vector>

#include "zcf/propagator.hpp"

namespace zcf {

struct MkdvPotential {
  int p = 1;
  Provider v;
  Provider v_x;   // optional; finite differences of v otherwise
  Provider v_xx;  // optional
  double M = 0.0;                  // declared bound sup ||v||
  double sup_deriv_bound = kInf;   // declared bound sup ||v_x|| + ||v_xx||
  Domain2D domain = Domain2D::unbounded();
  double h_fd = 1e-3;

  Matrix value(double x, double t) const { return v(x, t); }

  Matrix dx(double x, double t) const {
    if (v_x) return v_x(x, t);
    return fd_derivative([&](double s) { return v(s, t); }, x, h_fd, 1, 0.0, domain.x_length, true);
  }

  Matrix dxx(double x, double t) const {
    if (v_xx) return v_xx(x, t);
    return fd_derivative([&](double s) { return v(s, t); }, x, h_fd, 2, 0.0, domain.x_length, true);
  }

  MkdvPotential with_domain(Domain2D d) const {
    MkdvPotential out = *this;
    out.domain = d;
    return out;
  }

  static MkdvPotential zero(int p, Domain2D d = Domain2D::unbounded()) {
    const Matrix z = Matrix::Zero(p, p);
    auto c = [z](double, double) { return z; };
    MkdvPotential pot;
    pot.p = p;
    pot.v = c;
    pot.v_x = c;
    pot.v_xx = c;
    pot.M = 0.0;
    pot.sup_deriv_bound = 0.0;
    pot.domain = d;
    return pot;
  }

  static MkdvPotential constant(const Matrix& c, Domain2D d = Domain2D::unbounded()) {
    const Matrix z = Matrix::Zero(c.rows(), c.cols());
    MkdvPotential pot;
    pot.p = static_cast<int>(c.rows());
    pot.v = [c](double, double) { return c; };
    pot.v_x = [z](double, double) { return z; };
    pot.v_xx = pot.v_x;
    pot.M = op_norm(c);
    pot.sup_deriv_bound = 0.0;
    pot.domain = d;
    return pot;
  }
};

/// V = [[0, v], [-v*, 0]].
inline Matrix block_potential(const Matrix& v) {
  const Eigen::Index p = v.rows();
  Matrix out = Matrix::Zero(2 * p, 2 * p);
  out.topRightCorner(p, p) = v;
  out.bottomLeftCorner(p, p) = -v.adjoint();
  return out;
}

/// Checks the declared bounds of a potential on the sampling grid of its domain.
struct PotentialBounds {
  double sup_v = 0.0;
  double sup_deriv = 0.0;
  bool within_M = true;
  bool within_deriv_bound = true;
};

inline PotentialBounds validate_potential(const MkdvPotential& pot) {
  const Domain2D& d = pot.domain;
  require(std::isfinite(d.x_length) && std::isfinite(d.t_length), "validation needs a bounded sampling grid");
  PotentialBounds b;
  for (int k = 0; k <= d.nt; ++k) {
    for (int i = 0; i <= d.nx; ++i) {
      const double x = d.x_at(i), t = d.t_at(k);
      b.sup_v = std::max(b.sup_v, op_norm(pot.value(x, t)));
      b.sup_deriv = std::max(b.sup_deriv, op_norm(pot.dx(x, t)) + op_norm(pot.dxx(x, t)));
    }
  }
  b.within_M = b.sup_v <= pot.M * (1.0 + 1e-12) + 1e-14;
  b.within_deriv_bound = b.sup_deriv <= pot.sup_deriv_bound;
  return b;
}

struct MkdvPair {
  SpectralPencil G;
  SpectralPencil F;
};

/// G with q_1 = -i j, q_0 = -V; F with Q_3 = i j, Q_2 = V, Q_1 = (i/2)(V^2 + V_x) j,
/// Q_0 = -(1/4)(V_xx - 2V^3 - V_x V + V V_x).
inline MkdvPair build_mkdv_pair(const MkdvPotential& pot, FdOptions fd = {}) {
  const int p = pot.p;
  const int m = 2 * p;
  const Matrix j = signature(p);
  auto big = [pot](double x, double t) { return block_potential(pot.value(x, t)); };
  auto big_x = [pot](double x, double t) { return block_potential(pot.dx(x, t)); };
  auto big_xx = [pot](double x, double t) { return block_potential(pot.dxx(x, t)); };

  std::vector<Coefficient> g_coeffs;
  g_coeffs.emplace_back([big](double x, double t) -> Matrix { return -big(x, t); },
                        [big_x](double x, double t) -> Matrix { return -big_x(x, t); });
  g_coeffs.push_back(Coefficient::constant(-kI * j));

  std::vector<Coefficient> f_coeffs;
  f_coeffs.emplace_back([=](double x, double t) -> Matrix {
    const Matrix V = big(x, t), Vx = big_x(x, t), Vxx = big_xx(x, t);
    return -0.25 * (Vxx - 2.0 * V * V * V - Vx * V + V * Vx);
  });
  f_coeffs.emplace_back(
      [=](double x, double t) -> Matrix {
        const Matrix V = big(x, t);
        return 0.5 * kI * (V * V + big_x(x, t)) * j;
      },
      [=](double x, double t) -> Matrix {
        const Matrix V = big(x, t), Vx = big_x(x, t);
        return 0.5 * kI * (V * Vx + Vx * V + big_xx(x, t)) * j;
      });
  f_coeffs.emplace_back(big, big_x);
  f_coeffs.push_back(Coefficient::constant(kI * j));

  return {SpectralPencil(m, pot.domain, std::move(g_coeffs), {}, fd),
          SpectralPencil(m, pot.domain, std::move(f_coeffs), {}, fd)};
}

/// ||4 v_t - v_xxx - 3 (v_x v* v + v v* v_x)|| with fourth-order central
/// differences at spacing h. v_x comes from the analytic provider when
/// present, and v_xxx is differenced from v_xx when that provider exists.
inline double mkdv_residual(const MkdvPotential& pot, double x, double t, double h) {
  require(h > 0.0, "mkdv_residual: h must be positive");
  const Domain2D& d = pot.domain;
  if (!d.contains(x - 3 * h, t - 2 * h) || !d.contains(x + 3 * h, t + 2 * h))
    fail(Errc::domain_error, "mkdv_residual stencil leaves the domain");
  const Matrix v = pot.value(x, t);
  const Matrix vt = (-pot.value(x, t + 2 * h) + 8.0 * pot.value(x, t + h) - 8.0 * pot.value(x, t - h) +
                     pot.value(x, t - 2 * h)) /
                    (12.0 * h);
  Matrix vxxx;
  if (pot.v_xx) {
    vxxx = (-pot.v_xx(x + 2 * h, t) + 8.0 * pot.v_xx(x + h, t) - 8.0 * pot.v_xx(x - h, t) + pot.v_xx(x - 2 * h, t)) /
           (12.0 * h);
  } else {
    auto f = [&](int k) { return pot.value(x + k * h, t); };
    vxxx = (-f(3) + 8.0 * f(2) - 13.0 * f(1) + 13.0 * f(-1) - 8.0 * f(-2) + f(-3)) / (8.0 * h * h * h);
  }
  const Matrix vx = pot.v_x ? pot.v_x(x, t)
                            : Matrix((-pot.value(x + 2 * h, t) + 8.0 * pot.value(x + h, t) - 8.0 * pot.value(x - h, t) +
                                      pot.value(x - 2 * h, t)) /
                                     (12.0 * h));
  const Matrix vs = v.adjoint();
  return op_norm(4.0 * vt - vxxx - 3.0 * (vx * vs * v + v * vs * vx));
}

/// ||R(x,t,conj z)^* R(x,t,z) - I|| normalized by max(1, ||R(conj z)|| ||R(z)||).
inline double check_R_conjugate_inverse(const MkdvPotential& pot, double x, double t, Complex z, int steps) {
  if (t == 0.0) return 0.0;
  const auto pair = build_mkdv_pair(pot);
  const Matrix r = integrate_t(pair.F, x, z, t, steps).back();
  const Matrix rc = integrate_t(pair.F, x, std::conj(z), t, steps).back();
  const double scale = std::max(1.0, op_norm(r) * op_norm(rc));
  return op_norm(rc.adjoint() * r - identity(r.rows())) / scale;
}

/// Minimum eigenvalue of W^* j W - j; nonnegative for Im z < -M.
inline double check_W_j_expansive(const MkdvPotential& pot, double x, double t, Complex z, int steps) {
  require(z.imag() < -pot.M, "check_W_j_expansive needs Im z < -M");
  const auto pair = build_mkdv_pair(pot);
  const Matrix w = integrate_x(pair.G, t, z, x, steps).back();
  const Matrix j = signature(pot.p);
  return hermitian_min_eig(w.adjoint() * j * w - j);
}

/// True when Im z < -M1 and -pi/4 < arg z < 0.
inline bool in_contractive_sector(Complex z, double M1) {
  const double arg = std::arg(z);
  return z.imag() < -M1 && arg < 0.0 && arg > -std::numbers::pi / 4.0;
}

/// Maximum eigenvalue of R^* j R - j; nonpositive inside the sector.
inline double check_R_j_contractive(const MkdvPotential& pot, double x, double t, Complex z, int steps,
                                    std::optional<double> M1 = std::nullopt) {
  const double margin = M1.value_or(pot.M + 1.0);
  if (!in_contractive_sector(z, margin)) fail(Errc::sector_error, "z must satisfy Im z < -M1 and 0 > arg z > -pi/4");
  if (t == 0.0) return 0.0;
  const auto pair = build_mkdv_pair(pot);
  const Matrix r = integrate_t(pair.F, x, z, t, steps).back();
  const Matrix j = signature(pot.p);
  return hermitian_max_eig(r.adjoint() * j * r - j);
}

/// A pair of p x p matrix functions (P1, P2) used to seed Weyl limits.
struct PropertyJPair {
  std::function<Matrix(Complex)> P1;
  std::function<Matrix(Complex)> P2;

  Matrix stacked(Complex z) const {
    const Matrix a = P1(z), b = P2(z);
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
  }

  /// P*P > 0 and P* j P <= 0 at z.
  bool admissible(Complex z, double tol = 1e-12) const {
    const Matrix pp = stacked(z);
    const Eigen::Index p = pp.cols();
    return hermitian_min_eig(pp.adjoint() * pp) > tol && hermitian_max_eig(pp.adjoint() * signature(p) * pp) <= tol;
  }

  /// P1 = 0, P2 = I.
  static PropertyJPair standard(int p) {
    return {[p](Complex) { return Matrix(Matrix::Zero(p, p)); }, [p](Complex) { return identity(p); }};
  }
};

enum class Provenance { direct, evolved, analytic };

/// Samples z -> phi(z) of a Weyl function on the half-plane Im z < -margin.
class WeylFunction {
 public:
  WeylFunction(double margin, Provenance provenance) : margin_(margin), provenance_(provenance) {}

  double margin() const { return margin_; }
  Provenance provenance() const { return provenance_; }
  const std::vector<std::pair<Complex, Matrix>>& samples() const { return samples_; }

  void insert(Complex z, const Matrix& phi) {
    require(z.imag() < -margin_, "Weyl samples must satisfy Im z < -M");
    for (const auto& s : samples_) require(s.first != z, "duplicate Weyl sample");
    samples_.emplace_back(z, phi);
  }

  const Matrix& at(Complex z) const {
    for (const auto& s : samples_)
      if (s.first == z) return s.second;
    fail(Errc::invalid_argument, "Weyl function has no sample at the requested z");
  }

  /// Largest violation of [phi* I] j [phi; I] <= 0 over the samples (0 if none).
  double j_form_violation() const {
    double worst = 0.0;
    for (const auto& s : samples_) worst = std::max(worst, weyl_j_form_max_eig(s.second));
    return worst;
  }

  static double weyl_j_form_max_eig(const Matrix& phi) {
    return hermitian_max_eig(phi.adjoint() * phi - identity(phi.cols()));
  }

 private:
  double margin_;
  Provenance provenance_;
  std::vector<std::pair<Complex, Matrix>> samples_;
};

/// (A11 P1 + A12 P2)(A21 P1 + A22 P2)^{-1} for a 2p x 2p block matrix A.
inline Matrix moebius(const Matrix& a, const Matrix& p1, const Matrix& p2) {
  const Eigen::Index p = p1.rows();
  const Matrix num = a.topLeftCorner(p, p) * p1 + a.topRightCorner(p, p) * p2;
  const Matrix den = a.bottomLeftCorner(p, p) * p1 + a.bottomRightCorner(p, p) * p2;
  const double scale = std::max(op_norm(den), std::numeric_limits<double>::min());
  if (min_singular_value(den) < 1e-13 * scale) fail(Errc::singular_denominator, "Moebius denominator is singular");
  return den.transpose().partialPivLu().solve(num.transpose()).transpose();
}

struct WeylDirectOptions {
  std::vector<double> radii{2, 4, 8, 16, 32, 64};
  int steps_per_unit = 400;
  double tol = 1e-6;
};

struct WeylDirectResult {
  Matrix value;
  std::vector<double> radii;  // radii actually used
  std::vector<double> diffs;  // max-entry differences between successive iterates
  bool converged = false;
};

/// phi(z) = lim_r (A11 P1 + A12 P2)(A21 P1 + A22 P2)^{-1} with A(r, z) = W(r, t, conj z)^*.
inline WeylDirectResult weyl_direct(const MkdvPotential& pot, double t, const PropertyJPair& pair, Complex z,
                                    const WeylDirectOptions& opt = {}) {
  require(z.imag() < -pot.M, "weyl_direct needs Im z < -M");
  require(!opt.radii.empty() && opt.steps_per_unit >= 1, "weyl_direct: empty schedule");
  require(pair.admissible(z), "weyl_direct: the pair is not property-j at z");
  const auto pencils = build_mkdv_pair(pot);
  const Matrix p1 = pair.P1(z), p2 = pair.P2(z);
  const Complex zc = std::conj(z);

  WeylDirectResult res;
  Matrix w = identity(2 * pot.p);
  double r_prev = 0.0;
  Matrix prev;
  for (double r : opt.radii) {
    require(r > r_prev, "weyl_direct: radii must increase");
    const int steps = std::max(1, static_cast<int>(std::ceil(opt.steps_per_unit * (r - r_prev))));
    pencils.G.check_point(r, t);
    w = integrate(pencils.G, Direction::x, t, zc, r_prev, r, steps, w).back();
    r_prev = r;
    const Matrix phi = moebius(w.adjoint(), p1, p2);
    res.radii.push_back(r);
    if (prev.size() != 0) {
      res.diffs.push_back(max_entry(phi - prev));
      if (res.diffs.back() < opt.tol) {
        res.value = phi;
        res.converged = true;
        return res;
      }
    }
    prev = phi;
  }
  res.value = prev;
  const bool decreasing = res.diffs.size() >= 2 && res.diffs.back() < res.diffs.front();
  fail(Errc::no_convergence, decreasing ? "Weyl iterates decrease but did not reach the tolerance"
                                        : "Weyl iterates do not decrease");
}

struct WeylEvolveResult {
  Matrix value;
  Matrix R;  // R(0, t, z)
  bool in_sector = false;  // z inside the sector where the Moebius law is first established
};

/// phi(t, z) = (R11 phi0 + R12)(R21 phi0 + R22)^{-1} with R(t, z) = R(0, t, z)
/// built from the boundary values of v at x = 0.
inline WeylEvolveResult weyl_evolve(const Matrix& phi0, const MkdvPotential& pot, double t, Complex z, int steps,
                                    std::optional<double> M1 = std::nullopt) {
  require(z.imag() < -pot.M, "weyl_evolve needs Im z < -M");
  WeylEvolveResult res;
  res.in_sector = in_contractive_sector(z, M1.value_or(pot.M + 1.0));
  if (t == 0.0) {
    res.value = phi0;
    res.R = identity(2 * pot.p);
    return res;
  }
  const auto pencils = build_mkdv_pair(pot);
  res.R = integrate_t(pencils.F, 0.0, z, t, steps).back();
  res.value = moebius(res.R, phi0, identity(pot.p));
  return res;
}

}  // namespace zcf
