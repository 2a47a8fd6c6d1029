#pragma once

// Generalized Baecklund-Darboux transformation (GBDT) for first-order systems
// rational in z. An S-node (A1, A2, S, Pi1, Pi2) with A1 S - S A2 = Pi1 Pi2^*
// is carried along x and t by linear flows driven by the seed coefficients;
// the Darboux matrix
//
//   w_A(x,t,z) = I - Pi2^* S^{-1} (A1 - z)^{-1} Pi1
//
// intertwines the seed pencils (G, F) with transformed pencils (G~, F~) of the
// same shape.

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "zcf/mkdv.hpp"

namespace zcf {

/// Parameter matrices of an S-node at the origin.
struct SNode {
  Matrix a1, a2;    // n x n
  Matrix s0;        // n x n
  Matrix pi1_0;     // n x m
  Matrix pi2_0;     // n x m

  Eigen::Index n() const { return a1.rows(); }
  Eigen::Index m() const { return pi1_0.cols(); }

  double identity_defect() const { return op_norm(a1 * s0 - s0 * a2 - pi1_0 * pi2_0.adjoint()); }

  void validate(double tol = 1e-12) const {
    require(a1.rows() == a1.cols() && a2.rows() == n() && a2.cols() == n(), "S-node: A1, A2 must be n x n");
    require(s0.rows() == n() && s0.cols() == n(), "S-node: S must be n x n");
    require(pi1_0.rows() == n() && pi2_0.rows() == n() && pi2_0.cols() == m(), "S-node: Pi must be n x m");
    const double scale = std::max({1.0, op_norm(a1) * op_norm(s0), op_norm(a2) * op_norm(s0),
                                   op_norm(pi1_0) * op_norm(pi2_0)});
    require(identity_defect() <= tol * scale, "S-node: A1 S - S A2 != Pi1 Pi2^*");
  }

  /// Completes a node by solving A1 S - S A2 = Pi1 Pi2^* for S.
  static SNode from_parameters(const Matrix& a1, const Matrix& a2, const Matrix& pi1, const Matrix& pi2) {
    SNode node{a1, a2, solve_sylvester(a1, a2, pi1 * pi2.adjoint()), pi1, pi2};
    node.validate();
    return node;
  }

  /// Node for the focusing reduction A2 = A1^*, Pi2 = -i Pi1 (S Hermitian).
  static SNode skew_reduction(const Matrix& a1, const Matrix& pi1) {
    return from_parameters(a1, a1.adjoint(), pi1, Matrix(-kI * pi1));
  }
};

/// Pi1 (n x m), Pi2^* (m x n) and S (n x n) at one point.
struct NodeState {
  Matrix pi1;
  Matrix pi2_adj;
  Matrix s;

  static NodeState at_origin(const SNode& node) { return {node.pi1_0, node.pi2_0.adjoint(), node.s0}; }
};

inline NodeState operator+(const NodeState& a, const NodeState& b) {
  return {a.pi1 + b.pi1, a.pi2_adj + b.pi2_adj, a.s + b.s};
}
inline NodeState operator*(double c, const NodeState& a) { return {c * a.pi1, c * a.pi2_adj, c * a.s}; }

inline double identity_defect(const SNode& node, const NodeState& st) {
  return op_norm(node.a1 * st.s - st.s * node.a2 - st.pi1 * st.pi2_adj);
}

/// |det S| threshold below which S is treated as singular.
inline double det_s_tolerance(const Matrix& s) {
  return 1e-8 * std::pow(std::max(op_norm(s), 1e-300), static_cast<double>(s.rows() - 1));
}

inline bool invertible_s(const Matrix& s) { return std::abs(s.determinant()) > det_s_tolerance(s); }

/// Poles of the pencil must avoid the spectra of A1 and A2.
inline void check_spectra(const SNode& node, const SpectralPencil& pencil) {
  const Eigen::VectorXcd e1 = node.a1.eigenvalues();
  const Eigen::VectorXcd e2 = node.a2.eigenvalues();
  for (const auto& pole : pencil.poles()) {
    for (Eigen::Index k = 0; k < e1.size(); ++k)
      if (std::abs(e1(k) - pole.c) < 1e-8) fail(Errc::spectra_clash, "a pole lies in the spectrum of A1");
    for (Eigen::Index k = 0; k < e2.size(); ++k)
      if (std::abs(e2(k) - pole.c) < 1e-8) fail(Errc::spectra_clash, "a pole lies in the spectrum of A2");
  }
}

/// Right-hand side of the node flows for one pencil: powers of A1, A2 and of
/// the resolvents (A_k - c_s)^{-1} are precomputed once.
class NodeFlow {
 public:
  NodeFlow(const SNode& node, const SpectralPencil& pencil) : node_(node), pencil_(pencil) {
    check_spectra(node, pencil);
    const int r = pencil.degree();
    a1_pow_ = powers(node.a1, r + 1);
    a2_pow_ = powers(node.a2, r + 1);
    for (const auto& pole : pencil.poles()) {
      const int order = static_cast<int>(pole.coeffs.size());
      const Matrix b1inv = (node.a1 - pole.c * identity(node.n())).inverse();
      const Matrix b2inv = (node.a2 - pole.c * identity(node.n())).inverse();
      b1_inv_pow_.push_back(powers(b1inv, order + 1));
      b2_inv_pow_.push_back(powers(b2inv, order + 1));
    }
  }

  NodeState operator()(double x, double t, const NodeState& st) const {
    const auto n = node_.n();
    const auto m = node_.m();
    NodeState d{Matrix::Zero(n, m), Matrix::Zero(m, n), Matrix::Zero(n, n)};
    const auto& poly = pencil_.poly();
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Matrix q = poly[k].value(x, t);
      d.pi1 += a1_pow_[k] * st.pi1 * q;
      d.pi2_adj -= q * st.pi2_adj * a2_pow_[k];
      if (k >= 1) {
        const Matrix core = st.pi1 * q * st.pi2_adj;
        for (std::size_t j = 1; j <= k; ++j) d.s += a1_pow_[k - j] * core * a2_pow_[j - 1];
      }
    }
    const auto& poles = pencil_.poles();
    for (std::size_t s = 0; s < poles.size(); ++s) {
      const auto& b1 = b1_inv_pow_[s];
      const auto& b2 = b2_inv_pow_[s];
      for (std::size_t k = 1; k <= poles[s].coeffs.size(); ++k) {
        const Matrix q = poles[s].coeffs[k - 1].value(x, t);
        d.pi1 += b1[k] * st.pi1 * q;
        d.pi2_adj -= q * st.pi2_adj * b2[k];
        const Matrix core = st.pi1 * q * st.pi2_adj;
        // (A1 - c)^{j-k-1} core (A2 - c)^{-j}, j = 1..k
        for (std::size_t j = 1; j <= k; ++j) d.s -= b1[k + 1 - j] * core * b2[j];
      }
    }
    return d;
  }

 private:
  SNode node_;
  SpectralPencil pencil_;
  std::vector<Matrix> a1_pow_, a2_pow_;
  std::vector<std::vector<Matrix>> b1_inv_pow_, b2_inv_pow_;
};

/// Advances a node state along x (t fixed) with the G-coefficients.
inline std::vector<NodeState> flow_x(const SNode& node, const SpectralPencil& g, const NodeState& start, double t,
                                     double x0, double x_end, int steps) {
  require(steps >= 1 && x_end >= x0, "flow_x: bad interval");
  const NodeFlow rhs(node, g);
  std::vector<NodeState> out{start};
  const double h = (x_end - x0) / steps;
  if (h == 0.0) return out;
  NodeState y = start;
  for (int k = 0; k < steps; ++k) {
    y = rk4_step(y, x0 + k * h, h, [&](double s, const NodeState& st) { return rhs(s, t, st); });
    out.push_back(y);
  }
  return out;
}

/// Advances a node state along t (x fixed) with the F-coefficients.
inline std::vector<NodeState> flow_t(const SNode& node, const SpectralPencil& f, const NodeState& start, double x,
                                     double t0, double t_end, int steps) {
  require(steps >= 1 && t_end >= t0, "flow_t: bad interval");
  const NodeFlow rhs(node, f);
  std::vector<NodeState> out{start};
  const double h = (t_end - t0) / steps;
  if (h == 0.0) return out;
  NodeState y = start;
  for (int k = 0; k < steps; ++k) {
    y = rk4_step(y, t0 + k * h, h, [&](double s, const NodeState& st) { return rhs(x, s, st); });
    out.push_back(y);
  }
  return out;
}

/// Node state as a function of (x, t).
using NodeField = std::function<NodeState(double x, double t)>;

/// Node field obtained by flowing from the origin: first along t at x = 0,
/// then along x. Each leg uses a fixed number of steps so the result is
/// smooth in the endpoint.
inline NodeField flow_node_field(const SNode& node, const SpectralPencil& g, std::optional<SpectralPencil> f,
                                 int steps) {
  return [node, g, f, steps](double x, double t) {
    NodeState st = NodeState::at_origin(node);
    if (t != 0.0) {
      require(f.has_value(), "flow_node_field: t != 0 needs the F pencil");
      st = flow_t(node, *f, st, 0.0, 0.0, t, steps).back();
    }
    if (x != 0.0) st = flow_x(node, g, st, t, 0.0, x, steps).back();
    return st;
  };
}

/// Wraps a node field with a small per-thread memo of recent (x, t) points.
/// Pencil coefficients ask for the same point many times, and each flow
/// evaluation integrates from the origin.
inline NodeField memoize_node_field(NodeField field) {
  static std::atomic<std::uint64_t> counter{0};
  const std::uint64_t id = ++counter;
  return [field = std::move(field), id](double x, double t) {
    struct Entry {
      std::uint64_t id = 0;
      double x = 0.0, t = 0.0;
      NodeState st;
    };
    thread_local std::array<Entry, 32> ring;
    thread_local std::size_t next = 0;
    for (const Entry& e : ring)
      if (e.id == id && e.x == x && e.t == t) return e.st;
    NodeState st = field(x, t);
    ring[next++ % ring.size()] = Entry{id, x, t, st};
    return st;
  };
}

/// Node values on the grid of a domain together with the invertibility mask.
struct GBDTField {
  Domain2D domain;
  std::vector<NodeState> nodes;  // index k * (nx + 1) + i for (x_i, t_k)
  std::vector<Complex> det_s;
  std::vector<bool> in_ds;

  const NodeState& at(int i, int k) const { return nodes[index(i, k)]; }
  std::size_t index(int i, int k) const { return static_cast<std::size_t>(k * (domain.nx + 1) + i); }

  void finalize() {
    det_s.clear();
    in_ds.clear();
    for (const auto& st : nodes) {
      det_s.push_back(st.s.determinant());
      in_ds.push_back(std::abs(det_s.back()) > det_s_tolerance(st.s));
    }
  }

  double max_identity_defect(const SNode& node) const {
    double worst = 0.0;
    for (const auto& st : nodes) worst = std::max(worst, identity_defect(node, st));
    return worst;
  }
};

/// RK4 flows over the whole grid: the x = 0 column in t, then each t-row in x.
/// steps_x and steps_t count steps per grid interval.
inline GBDTField flow_field(const SNode& node, const SpectralPencil& g, const SpectralPencil& f, const Domain2D& d,
                            int steps_x, int steps_t) {
  GBDTField field;
  field.domain = d;
  field.nodes.resize(static_cast<std::size_t>((d.nx + 1) * (d.nt + 1)));
  const auto column = flow_t(node, f, NodeState::at_origin(node), 0.0, 0.0, d.t_length, d.nt * steps_t);
  for (int k = 0; k <= d.nt; ++k) {
    const auto row = flow_x(node, g, column[static_cast<std::size_t>(k * steps_t)], d.t_at(k), 0.0, d.x_length,
                            d.nx * steps_x);
    for (int i = 0; i <= d.nx; ++i) field.nodes[field.index(i, k)] = row[static_cast<std::size_t>(i * steps_x)];
  }
  field.finalize();
  return field;
}

inline GBDTField sample_field(const NodeField& nf, const Domain2D& d) {
  GBDTField field;
  field.domain = d;
  for (int k = 0; k <= d.nt; ++k)
    for (int i = 0; i <= d.nx; ++i) field.nodes.push_back(nf(d.x_at(i), d.t_at(k)));
  field.finalize();
  return field;
}

/// Location of a zero of det S inside the sampled domain, if one is detected:
/// a node below the tolerance, a sign change of a real determinant between
/// neighbours, or a nonzero winding number of det S around a grid cell.
inline std::optional<std::pair<double, double>> find_ds_violation(const GBDTField& field) {
  const Domain2D& d = field.domain;
  for (int k = 0; k <= d.nt; ++k)
    for (int i = 0; i <= d.nx; ++i)
      if (!field.in_ds[field.index(i, k)]) return std::make_pair(d.x_at(i), d.t_at(k));
  auto det = [&](int i, int k) { return field.det_s[field.index(i, k)]; };
  auto real_valued = [](Complex c) { return std::abs(c.imag()) <= 1e-10 * std::abs(c); };
  for (int k = 0; k <= d.nt; ++k) {
    for (int i = 0; i <= d.nx; ++i) {
      const Complex c = det(i, k);
      if (i < d.nx && real_valued(c) && real_valued(det(i + 1, k)) && c.real() * det(i + 1, k).real() < 0.0)
        return std::make_pair(0.5 * (d.x_at(i) + d.x_at(i + 1)), d.t_at(k));
      if (k < d.nt && real_valued(c) && real_valued(det(i, k + 1)) && c.real() * det(i, k + 1).real() < 0.0)
        return std::make_pair(d.x_at(i), 0.5 * (d.t_at(k) + d.t_at(k + 1)));
    }
  }
  for (int k = 0; k < d.nt; ++k) {
    for (int i = 0; i < d.nx; ++i) {
      const Complex loop[5] = {det(i, k), det(i + 1, k), det(i + 1, k + 1), det(i, k + 1), det(i, k)};
      double winding = 0.0;
      for (int e = 0; e < 4; ++e) winding += std::arg(loop[e + 1] / loop[e]);
      if (std::abs(winding) > std::numbers::pi)
        return std::make_pair(0.5 * (d.x_at(i) + d.x_at(i + 1)), 0.5 * (d.t_at(k) + d.t_at(k + 1)));
    }
  }
  return std::nullopt;
}

inline void require_in_ds(const NodeState& st) {
  if (!invertible_s(st.s)) fail(Errc::outside_ds, "S is not invertible at this point");
}

/// w_A = I - Pi2^* S^{-1} (A1 - z)^{-1} Pi1.
inline Matrix darboux_matrix(const SNode& node, const NodeState& st, Complex z) {
  require_in_ds(st);
  const Matrix b = node.a1 - z * identity(node.n());
  if (std::abs(b.determinant()) < 1e-12) fail(Errc::resolvent_singular, "z is in the spectrum of A1");
  const Matrix res = b.partialPivLu().solve(st.pi1);
  return identity(st.pi2_adj.rows()) - st.pi2_adj * st.s.partialPivLu().solve(res);
}

/// w_A^{-1} = I + Pi2^* (A2 - z)^{-1} S^{-1} Pi1.
inline Matrix darboux_inverse(const SNode& node, const NodeState& st, Complex z) {
  require_in_ds(st);
  const Matrix b = node.a2 - z * identity(node.n());
  if (std::abs(b.determinant()) < 1e-12) fail(Errc::resolvent_singular, "z is in the spectrum of A2");
  const Matrix sp = st.s.partialPivLu().solve(st.pi1);
  return identity(st.pi2_adj.rows()) + st.pi2_adj * b.partialPivLu().solve(sp);
}

/// Coefficient values of a pencil at one point.
struct CoefficientValues {
  std::vector<Matrix> poly;               // q_0..q_r
  std::vector<std::vector<Matrix>> poles;  // q_s1..q_sr_s per pole
};

inline CoefficientValues coefficient_values(const SpectralPencil& pencil, double x, double t) {
  CoefficientValues cv;
  for (const auto& c : pencil.poly()) cv.poly.push_back(c.value(x, t));
  for (const auto& p : pencil.poles()) {
    cv.poles.emplace_back();
    for (const auto& c : p.coeffs) cv.poles.back().push_back(c.value(x, t));
  }
  return cv;
}

/// Transformed coefficients of a pencil at one node state:
///
///   q~_k  = q_k - sum_{j=k+1}^{r} ( q_j Y_{j-k-1} - X_{j-k-1} q_j
///                                   + sum_{i=k+2}^{j} X_{j-i} q_j Y_{i-k-2} ),
///   q~_sk = q_sk + sum_{j=k}^{r_s} ( q_sj Y_{s,k-j-1} - X_{s,k-j-1} q_sj
///                                   - sum_{i=k}^{j} X_{s,i-j-1} q_sj Y_{s,k-i-1} ),
///
/// X_k = Pi2^* S^{-1} A1^k Pi1, Y_k = Pi2^* A2^k S^{-1} Pi1 and X_sk, Y_sk
/// with A - c_s in place of A. Void ranges contribute nothing.
inline CoefficientValues transformed_coeffs(const SNode& node, const NodeState& st, const CoefficientValues& q,
                                            const std::vector<Complex>& pole_centers) {
  require_in_ds(st);
  require(pole_centers.size() == q.poles.size(), "transformed_coeffs: pole count mismatch");
  const auto n = node.n();
  const auto lu = st.s.partialPivLu();
  const Matrix sinv_pi1 = lu.solve(st.pi1);
  const Matrix pi2_sinv = st.pi2_adj * lu.inverse();  // Pi2^* S^{-1}
  const int r = static_cast<int>(q.poly.size()) - 1;

  CoefficientValues out = q;
  if (r >= 1) {
    std::vector<Matrix> X, Y;
    Matrix a1k = identity(n), a2k = identity(n);
    for (int k = 0; k < r; ++k) {
      X.push_back(pi2_sinv * a1k * st.pi1);
      Y.push_back(st.pi2_adj * a2k * sinv_pi1);
      a1k = a1k * node.a1;
      a2k = a2k * node.a2;
    }
    for (int k = 0; k <= r; ++k) {
      for (int j = k + 1; j <= r; ++j) {
        const Matrix& qj = q.poly[static_cast<std::size_t>(j)];
        Matrix term = qj * Y[static_cast<std::size_t>(j - k - 1)] - X[static_cast<std::size_t>(j - k - 1)] * qj;
        for (int i = k + 2; i <= j; ++i)
          term += X[static_cast<std::size_t>(j - i)] * qj * Y[static_cast<std::size_t>(i - k - 2)];
        out.poly[static_cast<std::size_t>(k)] -= term;
      }
    }
  }
  for (std::size_t s = 0; s < q.poles.size(); ++s) {
    const int rs = static_cast<int>(q.poles[s].size());
    const Complex c = pole_centers[s];
    const Matrix b1inv = (node.a1 - c * identity(n)).inverse();
    const Matrix b2inv = (node.a2 - c * identity(n)).inverse();
    // Xs[e] = X_{s,-e}, Ys[e] = Y_{s,-e} for e = 1..rs
    std::vector<Matrix> Xs(static_cast<std::size_t>(rs) + 1), Ys(static_cast<std::size_t>(rs) + 1);
    Matrix p1 = identity(n), p2 = identity(n);
    for (int e = 1; e <= rs; ++e) {
      p1 = p1 * b1inv;
      p2 = p2 * b2inv;
      Xs[static_cast<std::size_t>(e)] = pi2_sinv * p1 * st.pi1;
      Ys[static_cast<std::size_t>(e)] = st.pi2_adj * p2 * sinv_pi1;
    }
    auto X = [&](int k) -> const Matrix& { return Xs[static_cast<std::size_t>(-k)]; };
    auto Y = [&](int k) -> const Matrix& { return Ys[static_cast<std::size_t>(-k)]; };
    for (int k = 1; k <= rs; ++k) {
      Matrix acc = Matrix::Zero(q.poles[s][0].rows(), q.poles[s][0].cols());
      for (int j = k; j <= rs; ++j) {
        const Matrix& qj = q.poles[s][static_cast<std::size_t>(j - 1)];
        acc += qj * Y(k - j - 1) - X(k - j - 1) * qj;
        for (int i = k; i <= j; ++i) acc -= X(i - j - 1) * qj * Y(k - i - 1);
      }
      out.poles[s][static_cast<std::size_t>(k - 1)] += acc;
    }
  }
  return out;
}

inline std::vector<Complex> pole_centers(const SpectralPencil& pencil) {
  std::vector<Complex> out;
  for (const auto& p : pencil.poles()) out.push_back(p.c);
  return out;
}

/// Evaluates -(sum z^k q_k + sum (z - c_s)^{-k} q_sk) from coefficient values.
inline Matrix eval_coefficients(const CoefficientValues& cv, const std::vector<Complex>& centers, Complex z) {
  Matrix acc = Matrix::Zero(cv.poly[0].rows(), cv.poly[0].cols());
  Complex zk = 1.0;
  for (const auto& q : cv.poly) {
    acc += zk * q;
    zk *= z;
  }
  for (std::size_t s = 0; s < cv.poles.size(); ++s) {
    const Complex inv = 1.0 / (z - centers[s]);
    Complex ik = inv;
    for (const auto& q : cv.poles[s]) {
      acc += ik * q;
      ik *= inv;
    }
  }
  return -acc;
}

/// Pencil with the transformed coefficients of `seed` under the node field.
inline SpectralPencil transformed_pencil(const NodeField& field, const SNode& node, const SpectralPencil& seed) {
  const auto centers = pole_centers(seed);
  auto coeffs_at = [field, node, seed, centers](double x, double t) {
    return transformed_coeffs(node, field(x, t), coefficient_values(seed, x, t), centers);
  };
  std::vector<Coefficient> poly;
  for (std::size_t k = 0; k < seed.poly().size(); ++k)
    poly.emplace_back([coeffs_at, k](double x, double t) { return coeffs_at(x, t).poly[k]; });
  std::vector<Pole> poles;
  for (std::size_t s = 0; s < seed.poles().size(); ++s) {
    Pole p{seed.poles()[s].c, {}};
    for (std::size_t k = 0; k < seed.poles()[s].coeffs.size(); ++k)
      p.coeffs.emplace_back([coeffs_at, s, k](double x, double t) { return coeffs_at(x, t).poles[s][k]; });
    poles.push_back(std::move(p));
  }
  return SpectralPencil(seed.dim(), seed.domain(), std::move(poly), std::move(poles), seed.fd());
}

struct TransformedPencils {
  SpectralPencil G;
  SpectralPencil F;
};

inline TransformedPencils transformed_pencils(const NodeField& field, const SNode& node, const SpectralPencil& g,
                                              const SpectralPencil& f) {
  return {transformed_pencil(field, node, g), transformed_pencil(field, node, f)};
}

/// ||D w_A - (P~ w_A - w_A P)|| with a central difference D at spacing h
/// along `axis`, where P is the seed pencil for that axis (G for x, F for t).
inline double darboux_ode_residual(const NodeField& field, const SNode& node, const SpectralPencil& seed, Axis axis,
                                   double x, double t, Complex z, double h) {
  require(h > 0.0, "darboux_ode_residual: h must be positive");
  const auto centers = pole_centers(seed);
  const NodeState st = field(x, t);
  const Matrix wa = darboux_matrix(node, st, z);
  const Matrix wp = axis == Axis::x ? darboux_matrix(node, field(x + h, t), z) : darboux_matrix(node, field(x, t + h), z);
  const Matrix wm = axis == Axis::x ? darboux_matrix(node, field(x - h, t), z) : darboux_matrix(node, field(x, t - h), z);
  const CoefficientValues q = coefficient_values(seed, x, t);
  const Matrix p = eval_coefficients(q, centers, z);
  const Matrix pt = eval_coefficients(transformed_coeffs(node, st, q, centers), centers, z);
  return op_norm((wp - wm) / (2.0 * h) - (pt * wa - wa * p));
}

struct TransformedCurvature {
  double residual = 0.0;
  double abs_det_s = 0.0;
  double cond_s = 1.0;
  bool ill_conditioned = false;  // cond(S) > 1e8
};

/// Zero-curvature residual of the transformed pair at (x, t, z).
inline TransformedCurvature verify_transformed_zero_curvature(const NodeField& field, const SNode& node,
                                                              const SpectralPencil& g, const SpectralPencil& f,
                                                              double x, double t, Complex z) {
  const NodeState st = field(x, t);
  require_in_ds(st);
  TransformedCurvature out;
  out.abs_det_s = std::abs(st.s.determinant());
  out.cond_s = op_norm(st.s) / min_singular_value(st.s);
  out.ill_conditioned = out.cond_s > 1e8;
  const auto tp = transformed_pencils(field, node, g, f);
  out.residual = zero_curvature_residual(tp.G, tp.F, x, t, z);
  return out;
}

/// w_A(x,t,z) w(x,t,z) w_A(0,0,z)^{-1} with w the seed wave function.
inline Matrix normalized_wave(const NodeField& field, const SNode& node, const SpectralPencil& g,
                              const SpectralPencil& f, double x, double t, Complex z, int steps) {
  const Matrix w = (x == 0.0 && t == 0.0) ? identity(g.dim()) : wave_function(g, f, x, t, z, steps);
  return darboux_matrix(node, field(x, t), z) * w * darboux_inverse(node, field(0.0, 0.0), z);
}

/// ||gamma_t - Gamma_x + [gamma, Gamma]|| with gamma = sum q_k^T (x) A1^k and
/// Gamma = sum Q_s^T (x) A1^s for polynomial pencils.
inline double kronecker_compat_check(const SpectralPencil& g, const SpectralPencil& f, const Matrix& a1, double x,
                                     double t) {
  if (g.has_poles() || f.has_poles()) fail(Errc::poles_present, "Kronecker compatibility needs polynomial pencils");
  g.check_point(x, t);
  f.check_point(x, t);
  const int deg = std::max(g.degree(), f.degree());
  const auto apow = powers(a1, 2 * deg + 1);
  auto assemble = [&](const SpectralPencil& pen, auto&& coefficient) {
    Matrix acc = Matrix::Zero(pen.dim() * a1.rows(), pen.dim() * a1.rows());
    for (std::size_t k = 0; k < pen.poly().size(); ++k)
      acc += Eigen::kroneckerProduct(Matrix(coefficient(pen.poly()[k]).transpose()), apow[k]).eval();
    return acc;
  };
  const Matrix gamma = assemble(g, [&](const Coefficient& c) { return c.value(x, t); });
  const Matrix Gamma = assemble(f, [&](const Coefficient& c) { return c.value(x, t); });
  const Matrix gamma_t = assemble(g, [&](const Coefficient& c) { return g.coefficient_derivative(c, Axis::t, x, t); });
  const Matrix Gamma_x = assemble(f, [&](const Coefficient& c) { return f.coefficient_derivative(c, Axis::x, x, t); });
  return op_norm(gamma_t - Gamma_x + gamma * Gamma - Gamma * gamma);
}

/// Closed-form node field for the zero-seed mKdV pair (G = i z j, F = -i z^3 j):
///   Pi1 = [e^{-i A1 x + i A1^3 t} Phi1, e^{i A1 x - i A1^3 t} Phi2],
///   Pi2^* = [Psi1^* e^{i A2 x - i A2^3 t}; Psi2^* e^{-i A2 x + i A2^3 t}],
/// and S from the node identity (spectra of A1 and A2 disjoint).
class ZeroSeedMkdvField {
 public:
  ZeroSeedMkdvField(const SNode& node, int p) : node_(node), p_(p), id_(next_id()) {
    node.validate();
    require(node.m() == 2 * p, "zero-seed mKdV field needs m = 2p");
    a1_3_ = node.a1 * node.a1 * node.a1;
    a2_3_ = node.a2 * node.a2 * node.a2;
    // uniqueness of S; also confirms the supplied S0
    const Matrix s_check = solve_sylvester(node.a1, node.a2, node.pi1_0 * node.pi2_0.adjoint());
    require(op_norm(s_check - node.s0) <= 1e-10 * std::max(1.0, op_norm(node.s0)), "S0 disagrees with the node identity");
  }

  const SNode& node() const { return node_; }
  int p() const { return p_; }

  NodeState operator()(double x, double t) const {
    const Matrix e1 = expm(-kI * (x * node_.a1 - t * a1_3_));
    const Matrix e2 = expm(kI * (x * node_.a2 - t * a2_3_));
    NodeState st;
    st.pi1.resize(node_.n(), 2 * p_);
    st.pi1.leftCols(p_) = e1 * node_.pi1_0.leftCols(p_);
    st.pi1.rightCols(p_) = e1.inverse() * node_.pi1_0.rightCols(p_);
    const Matrix pi2_adj0 = node_.pi2_0.adjoint();
    st.pi2_adj.resize(2 * p_, node_.n());
    st.pi2_adj.topRows(p_) = pi2_adj0.topRows(p_) * e2;
    st.pi2_adj.bottomRows(p_) = pi2_adj0.bottomRows(p_) * e2.inverse();
    st.s = solve_sylvester(node_.a1, node_.a2, st.pi1 * st.pi2_adj);
    return st;
  }

  /// Transformed potential block matrix V~ = i (X0 j - j X0) and its first two x-derivatives.
  std::array<Matrix, 3> potential_jet(double x, double t) const {
    // pencil coefficients ask for v, v_x, v_xx at the same point in a row
    struct Cache {
      std::uint64_t owner = 0;
      double x = 0.0, t = 0.0;
      std::array<Matrix, 3> jet;
    };
    thread_local Cache cache;
    if (cache.owner == id_ && cache.x == x && cache.t == t) return cache.jet;
    cache.jet = compute_jet(x, t);
    cache.owner = id_;
    cache.x = x;
    cache.t = t;
    return cache.jet;
  }

 private:
  std::array<Matrix, 3> compute_jet(double x, double t) const {
    const NodeState st = (*this)(x, t);
    const Matrix j = signature(p_);
    const Matrix& Q = st.pi1;
    const Matrix& P = st.pi2_adj;
    const Matrix Qx = -kI * node_.a1 * Q * j;
    const Matrix Qxx = -(node_.a1 * node_.a1 * Q);
    const Matrix Px = kI * j * P * node_.a2;
    const Matrix Pxx = -(P * node_.a2 * node_.a2);
    const Matrix Sx = -kI * Q * j * P;
    const Matrix Sxx = -kI * (Qx * j * P + Q * j * Px);
    const Matrix B = st.s.inverse();
    const Matrix Bx = -B * Sx * B;
    const Matrix Bxx = 2.0 * B * Sx * B * Sx * B - B * Sxx * B;
    const Matrix X = P * B * Q;
    const Matrix Xx = Px * B * Q + P * Bx * Q + P * B * Qx;
    const Matrix Xxx = Pxx * B * Q + 2.0 * Px * Bx * Q + 2.0 * Px * B * Qx + P * Bxx * Q + 2.0 * P * Bx * Qx +
                       P * B * Qxx;
    auto vt = [&](const Matrix& m) -> Matrix { return kI * (m * j - j * m); };
    return {vt(X), vt(Xx), vt(Xxx)};
  }

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  SNode node_;
  int p_;
  std::uint64_t id_;
  Matrix a1_3_, a2_3_;
};

/// Zero-seed mKdV pencils (v = 0) on a domain.
inline MkdvPair zero_seed_pair(int p, const Domain2D& d, FdOptions fd = {}) {
  return build_mkdv_pair(MkdvPotential::zero(p, d), fd);
}

struct MkdvSoliton {
  MkdvPotential potential;
  GBDTField field;                 // closed-form node values on the domain grid
  NodeField node_field;            // closed-form node values anywhere
  double structure_defect = 0.0;   // sup ||V~_21 + v~^*|| on the grid
  double sup_v = 0.0;              // sup ||v~|| on the grid
};

/// V~ = i (X0 j - j X0) with X0 = Pi2^* S^{-1} Pi1 (zero seed, q1 = -i j).
inline Matrix zero_seed_potential_block(const NodeState& st, int p) {
  require_in_ds(st);
  const Matrix X = st.pi2_adj * st.s.partialPivLu().solve(st.pi1);
  const Matrix j = signature(p);
  return kI * (X * j - j * X);
}

/// Builds the GBDT soliton of the focusing mKdV from a zero seed. The
/// upper-right block of V~ is the solution; the lower-left block must equal
/// -v~^* (checked on the grid). `declared_M` defaults to the sampled sup.
/// Nodes whose spectra overlap have no closed form; their field is obtained
/// from the RK4 flows with `flow_steps` steps per leg and v_x, v_xx from
/// finite differences.
inline MkdvSoliton mkdv_soliton(const SNode& node, int p, const Domain2D& d, std::optional<double> declared_M = {},
                                int flow_steps = 400) {
  require(std::isfinite(d.x_length) && std::isfinite(d.t_length), "mkdv_soliton needs a bounded domain");
  node.validate();
  require(node.m() == 2 * p, "mkdv_soliton needs m = 2p");
  std::shared_ptr<ZeroSeedMkdvField> cf;
  MkdvSoliton out;
  try {
    cf = std::make_shared<ZeroSeedMkdvField>(node, p);
    out.node_field = [cf](double x, double t) { return (*cf)(x, t); };
  } catch (const Error& e) {
    if (e.code() != Errc::spectra_clash) throw;
    const auto seed = zero_seed_pair(p, Domain2D::unbounded());
    out.node_field = memoize_node_field(flow_node_field(node, seed.G, seed.F, flow_steps));
  }
  out.field = sample_field(out.node_field, d);
  if (const auto bad = find_ds_violation(out.field)) {
    fail(Errc::ds_violation, "det S vanishes near (x, t) = (" + std::to_string(bad->first) + ", " +
                                 std::to_string(bad->second) + ")");
  }
  for (int k = 0; k <= d.nt; ++k) {
    for (int i = 0; i <= d.nx; ++i) {
      const Matrix V = zero_seed_potential_block(out.field.at(i, k), p);
      const Matrix v = V.topRightCorner(p, p);
      out.structure_defect = std::max(out.structure_defect, op_norm(V.bottomLeftCorner(p, p) + v.adjoint()));
      out.sup_v = std::max(out.sup_v, op_norm(v));
    }
  }
  if (out.structure_defect > 1e-6)
    fail(Errc::structure_broken, "lower-left block of V~ is not -v~^* (reduction parameters invalid)");

  MkdvPotential& pot = out.potential;
  pot.p = p;
  if (cf) {
    pot.v = [cf, p](double x, double t) -> Matrix { return cf->potential_jet(x, t)[0].topRightCorner(p, p); };
    pot.v_x = [cf, p](double x, double t) -> Matrix { return cf->potential_jet(x, t)[1].topRightCorner(p, p); };
    pot.v_xx = [cf, p](double x, double t) -> Matrix { return cf->potential_jet(x, t)[2].topRightCorner(p, p); };
  } else {
    const NodeField nf = out.node_field;
    pot.v = [nf, p](double x, double t) -> Matrix { return zero_seed_potential_block(nf(x, t), p).topRightCorner(p, p); };
  }
  pot.M = declared_M.value_or(out.sup_v * (1.0 + 1e-9));
  pot.domain = d;
  return out;
}

/// Weyl function of the transformed Dirac system at time t:
/// phi = (w_A)_12 (w_A)_22^{-1} with w_A evaluated at (0, t, z).
inline Matrix darboux_weyl_function(const SNode& node, const NodeField& field, int p, double t, Complex z) {
  const Matrix wa = darboux_matrix(node, field(0.0, t), z);
  const Matrix num = wa.topRightCorner(p, p);
  const Matrix den = wa.bottomRightCorner(p, p);
  if (min_singular_value(den) < 1e-14 * std::max(1.0, op_norm(den)))
    fail(Errc::singular_denominator, "(w_A)_22 is singular at z");
  return den.transpose().partialPivLu().solve(num.transpose()).transpose();
}

}  // namespace zcf
