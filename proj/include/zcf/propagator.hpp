#pragma once

// Fundamental solutions of the auxiliary systems
//
//   dW/dx = G W,  W(0, t, z) = I;      dR/dt = F R,  R(x, 0, z) = I,
//
// the wave function w = W(x,t) R(0,t), and the factorization check
// W(x,t) R(0,t) = R(x,t) W(x,0).

#include <cmath>
#include <vector>

#include "zcf/pencil.hpp"

namespace zcf {

enum class Direction { x, t };

inline constexpr double kBlowUp = 1e300;

struct FundamentalSolution {
  Direction direction = Direction::x;
  double fixed_coordinate = 0.0;  // frozen t for W, frozen x for R
  Complex z;
  std::vector<double> coords;
  std::vector<Matrix> mats;
  Matrix base_matrix;

  std::size_t size() const { return coords.size(); }
  const Matrix& back() const { return mats.back(); }
  double end() const { return coords.back(); }

  double min_abs_det() const {
    double out = kInf;
    for (const auto& m : mats) out = std::min(out, std::abs(m.determinant()));
    return out;
  }
};

/// Integrates Y' = P Y along `dir` from `from` to `to` with `steps` RK4 steps,
/// starting at `initial` (identity when empty).
inline FundamentalSolution integrate(const SpectralPencil& pencil, Direction dir, double fixed, Complex z,
                                     double from, double to, int steps, const Matrix& initial = Matrix()) {
  require(steps >= 1, "integrator needs at least one step");
  require(to >= from, "integration interval must be oriented forward");
  pencil.check_z(z);
  FundamentalSolution sol;
  sol.direction = dir;
  sol.fixed_coordinate = fixed;
  sol.z = z;
  sol.base_matrix = initial.size() == 0 ? identity(pencil.dim()) : initial;
  sol.coords.push_back(from);
  sol.mats.push_back(sol.base_matrix);
  if (to == from) return sol;

  sol.coords.reserve(static_cast<std::size_t>(steps) + 1);
  sol.mats.reserve(static_cast<std::size_t>(steps) + 1);
  const double h = (to - from) / steps;
  auto rhs = [&](double s, const Matrix& y) -> Matrix {
    return dir == Direction::x ? Matrix(pencil(s, fixed, z) * y) : Matrix(pencil(fixed, s, z) * y);
  };
  Matrix y = sol.base_matrix;
  for (int k = 0; k < steps; ++k) {
    const double s = from + k * h;
    y = rk4_step(y, s, h, rhs);
    if (!std::isfinite(y.cwiseAbs().maxCoeff()) || y.cwiseAbs().maxCoeff() > kBlowUp)
      fail(Errc::step_overflow, "fundamental solution exceeded 1e300; shrink the interval or move z");
    sol.coords.push_back(k + 1 == steps ? to : from + (k + 1) * h);
    sol.mats.push_back(y);
  }
  return sol;
}

/// W(., t, z) on [0, x_end].
inline FundamentalSolution integrate_x(const SpectralPencil& g, double t, Complex z, double x_end, int steps) {
  g.check_point(x_end, t);
  return integrate(g, Direction::x, t, z, 0.0, x_end, steps);
}

/// R(x, ., z) on [0, t_end].
inline FundamentalSolution integrate_t(const SpectralPencil& f, double x, Complex z, double t_end, int steps) {
  f.check_point(x, t_end);
  return integrate(f, Direction::t, x, z, 0.0, t_end, steps);
}

/// The four factors of the factorization identity at one point.
struct FactorizationCheck {
  Matrix w_xt;   // W(x, t, z)
  Matrix r_0t;   // R(0, t, z)
  Matrix r_xt;   // R(x, t, z)
  Matrix w_x0;   // W(x, 0, z)
  double absolute = 0.0;  // ||W(x,t)R(t) - R(x,t)W(x,0)||
  double scale = 1.0;     // max(1, ||W(x,t)|| ||R(t)||, ||R(x,t)|| ||W(x,0)||)
  double relative() const { return absolute / scale; }
};

inline FactorizationCheck factorization_check(const SpectralPencil& g, const SpectralPencil& f, double x, double t,
                                              Complex z, int steps) {
  require(g.dim() == f.dim(), "factorization: pencils differ in dimension");
  FactorizationCheck c;
  c.w_xt = integrate_x(g, t, z, x, steps).back();
  c.w_x0 = integrate_x(g, 0.0, z, x, steps).back();
  c.r_0t = integrate_t(f, 0.0, z, t, steps).back();
  c.r_xt = integrate_t(f, x, z, t, steps).back();
  c.absolute = op_norm(c.w_xt * c.r_0t - c.r_xt * c.w_x0);
  c.scale = std::max({1.0, op_norm(c.w_xt) * op_norm(c.r_0t), op_norm(c.r_xt) * op_norm(c.w_x0)});
  return c;
}

/// Factorization residual normalized by the size of the factors, so that it
/// measures the integrator error rather than the exponential growth of W and R.
inline double factorization_residual(const SpectralPencil& g, const SpectralPencil& f, double x, double t, Complex z,
                                     int steps) {
  return factorization_check(g, f, x, t, z, steps).relative();
}

/// Normalized factorization residual at every node of the domain grid. Each
/// x-line and t-line is integrated once over the full extent with `steps`
/// steps; `steps` must be a multiple of both nx and nt.
inline std::vector<double> factorization_residual_grid(const SpectralPencil& g, const SpectralPencil& f, Complex z,
                                                       int steps) {
  const Domain2D& d = g.domain();
  require(steps % d.nx == 0 && steps % d.nt == 0, "steps must be a multiple of the grid intervals");
  std::vector<FundamentalSolution> w_lines, r_lines;
  for (int k = 0; k <= d.nt; ++k) w_lines.push_back(integrate_x(g, d.t_at(k), z, d.x_length, steps));
  for (int i = 0; i <= d.nx; ++i) r_lines.push_back(integrate_t(f, d.x_at(i), z, d.t_length, steps));
  const int sx = steps / d.nx, st = steps / d.nt;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((d.nx + 1) * (d.nt + 1)));
  for (int k = 0; k <= d.nt; ++k) {
    for (int i = 0; i <= d.nx; ++i) {
      const Matrix& w_xt = w_lines[k].mats[static_cast<std::size_t>(i * sx)];
      const Matrix& w_x0 = w_lines[0].mats[static_cast<std::size_t>(i * sx)];
      const Matrix& r_0t = r_lines[0].mats[static_cast<std::size_t>(k * st)];
      const Matrix& r_xt = r_lines[i].mats[static_cast<std::size_t>(k * st)];
      const double scale = std::max({1.0, op_norm(w_xt) * op_norm(r_0t), op_norm(r_xt) * op_norm(w_x0)});
      out.push_back(op_norm(w_xt * r_0t - r_xt * w_x0) / scale);
    }
  }
  return out;
}

/// w(x, t, z) = W(x, t, z) R(0, t, z); equals I at the origin.
inline Matrix wave_function(const SpectralPencil& g, const SpectralPencil& f, double x, double t, Complex z,
                            int steps) {
  return integrate_x(g, t, z, x, steps).back() * integrate_t(f, 0.0, z, t, steps).back();
}

/// Compares the two mixed derivatives of the wave function: the t-difference
/// of w_x = G w against the x-difference of w_t = F w, both fourth-order
/// central at spacing h. The gap is O(h^4) for a compatible pair and O(1)
/// otherwise.
inline double mixed_derivative_residual(const SpectralPencil& g, const SpectralPencil& f, double x, double t,
                                        Complex z, double h, int steps) {
  require(h > 0.0, "mixed derivative: h must be positive");
  const Domain2D& d = g.domain();
  if (!d.contains(x - 2 * h, t - 2 * h) || !d.contains(x + 2 * h, t + 2 * h))
    fail(Errc::domain_error, "mixed derivative stencil leaves the domain");
  auto w = [&](double xs, double ts) { return wave_function(g, f, xs, ts, z, steps); };
  auto wx = [&](double dt) { return Matrix(g(x, t + dt, z) * w(x, t + dt)); };
  auto wt = [&](double dx) { return Matrix(f(x + dx, t, z) * w(x + dx, t)); };
  auto central = [h](auto&& fn) { return Matrix((-fn(2 * h) + 8.0 * fn(h) - 8.0 * fn(-h) + fn(-2 * h)) / (12.0 * h)); };
  return op_norm(central(wx) - central(wt));
}

}  // namespace zcf
