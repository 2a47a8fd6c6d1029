#pragma once

// Potentials tabulated on a tensor grid: natural cubic splines in x, linear
// interpolation in t.

#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "zcf/mkdv.hpp"

namespace zcf {

class TabulatedTable {
 public:
  /// values[k][i] is v(xs[i], ts[k]).
  TabulatedTable(std::vector<double> xs, std::vector<double> ts, std::vector<std::vector<Matrix>> values)
      : xs_(std::move(xs)), ts_(std::move(ts)), values_(std::move(values)) {
    require(xs_.size() >= 4, "tabulated potential needs at least four x nodes");
    require(!ts_.empty(), "tabulated potential needs at least one t node");
    require(values_.size() == ts_.size(), "tabulated potential: t rows missing");
    for (const auto& row : values_) require(row.size() == xs_.size(), "tabulated potential: ragged rows");
    for (std::size_t i = 1; i < xs_.size(); ++i) require(xs_[i] > xs_[i - 1], "x nodes must increase");
    for (std::size_t k = 1; k < ts_.size(); ++k) require(ts_[k] > ts_[k - 1], "t nodes must increase");
    for (const auto& row : values_) second_.push_back(spline_second_derivatives(row));
  }

  int p() const { return static_cast<int>(values_[0][0].rows()); }
  double x_min() const { return xs_.front(); }
  double x_max() const { return xs_.back(); }
  double t_min() const { return ts_.front(); }
  double t_max() const { return ts_.back(); }

  double sup_norm() const {
    double out = 0.0;
    for (const auto& row : values_)
      for (const auto& m : row) out = std::max(out, op_norm(m));
    return out;
  }

  /// v, v_x or v_xx (deriv = 0, 1, 2) at (x, t).
  Matrix eval(double x, double t, int deriv) const {
    if (ts_.size() == 1) return eval_row(0, x, deriv);
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    std::size_t k = it == ts_.begin() ? 0 : static_cast<std::size_t>(it - ts_.begin()) - 1;
    k = std::min(k, ts_.size() - 2);
    const double w = (t - ts_[k]) / (ts_[k + 1] - ts_[k]);
    return (1.0 - w) * eval_row(k, x, deriv) + w * eval_row(k + 1, x, deriv);
  }

 private:
  std::vector<Matrix> spline_second_derivatives(const std::vector<Matrix>& y) const {
    const std::size_t n = xs_.size();
    std::vector<Matrix> m(n, Matrix::Zero(y[0].rows(), y[0].cols()));
    // tridiagonal solve for interior second derivatives (natural ends)
    std::vector<double> c(n, 0.0);
    std::vector<Matrix> d(n, m[0]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1], h1 = xs_[i + 1] - xs_[i];
      const double a = h0 / 6.0, b = (h0 + h1) / 3.0, cc = h1 / 6.0;
      const Matrix r = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
      const double denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (r - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m[i] = d[i] - c[i] * m[i + 1];
      if (i == 1) break;
    }
    return m;
  }

  Matrix eval_row(std::size_t k, double x, int deriv) const {
    const auto& y = values_[k];
    const auto& m = second_[k];
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i = it == xs_.begin() ? 0 : static_cast<std::size_t>(it - xs_.begin()) - 1;
    i = std::min(i, xs_.size() - 2);
    const double h = xs_[i + 1] - xs_[i];
    const double A = (xs_[i + 1] - x) / h, B = (x - xs_[i]) / h;
    if (deriv == 0)
      return A * y[i] + B * y[i + 1] + ((A * A * A - A) * m[i] + (B * B * B - B) * m[i + 1]) * (h * h / 6.0);
    if (deriv == 1)
      return (y[i + 1] - y[i]) / h - (3.0 * A * A - 1.0) / 6.0 * h * m[i] + (3.0 * B * B - 1.0) / 6.0 * h * m[i + 1];
    return A * m[i] + B * m[i + 1];
  }

  std::vector<double> xs_, ts_;
  std::vector<std::vector<Matrix>> values_;
  std::vector<std::vector<Matrix>> second_;
};

/// Reads "x,t,re_v_11,im_v_11,..." rows (p x p entries row-major) forming a
/// full tensor grid.
inline TabulatedTable read_tabulated_csv(const std::string& path, int p) {
  std::ifstream in(path);
  if (!in) fail(Errc::config_error, "cannot open tabulated potential file " + path);
  std::string line;
  std::getline(in, line);  // header
  std::map<double, std::map<double, Matrix>> rows;  // t -> x -> v
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(Errc::config_error, "non-numeric cell in " + path);
      }
    }
    if (vals.size() != static_cast<std::size_t>(2 + 2 * p * p)) fail(Errc::config_error, "wrong column count in " + path);
    Matrix v(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) {
        const std::size_t c = static_cast<std::size_t>(2 + 2 * (a * p + b));
        v(a, b) = Complex(vals[c], vals[c + 1]);
      }
    rows[vals[1]][vals[0]] = v;
  }
  if (rows.empty()) fail(Errc::config_error, "tabulated potential file is empty");
  std::vector<double> ts, xs;
  for (const auto& [x, v] : rows.begin()->second) xs.push_back(x);
  std::vector<std::vector<Matrix>> values;
  for (const auto& [t, row] : rows) {
    ts.push_back(t);
    if (row.size() != xs.size()) fail(Errc::config_error, "tabulated potential is not a full tensor grid");
    values.emplace_back();
    std::size_t i = 0;
    for (const auto& [x, v] : row) {
      if (x != xs[i++]) fail(Errc::config_error, "tabulated potential is not a full tensor grid");
      values.back().push_back(v);
    }
  }
  try {
    return TabulatedTable(std::move(xs), std::move(ts), std::move(values));
  } catch (const Error& e) {
    fail(Errc::config_error, e.what());
  }
}

/// Potential backed by a table; the domain is the table's range.
inline MkdvPotential tabulated_potential(std::shared_ptr<const TabulatedTable> table, int nx = 16, int nt = 16) {
  require(table->x_min() == 0.0 && table->t_min() == 0.0, "tabulated potential must start at x = 0, t = 0");
  MkdvPotential pot;
  pot.p = table->p();
  pot.v = [table](double x, double t) { return table->eval(x, t, 0); };
  pot.v_x = [table](double x, double t) { return table->eval(x, t, 1); };
  pot.v_xx = [table](double x, double t) { return table->eval(x, t, 2); };
  pot.M = table->sup_norm();
  const double t_len = table->t_max() > 0.0 ? table->t_max() : 1.0;
  pot.domain = Domain2D(table->x_max(), t_len, nx, nt);
  return pot;
}

}  // namespace zcf
