#pragma once

// Command implementations behind the zcf executable. Each command reads a
// JSON run configuration, writes CSV tables and a JSON summary into an output
// directory and reports an exit code: 0 pass, 2 numerical failure, 3 config
// error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "zcf/gbdt.hpp"
#include "zcf/inverse.hpp"
#include "zcf/parallel.hpp"
#include "zcf/tabulated.hpp"

namespace zcf::cli {

using json = nlohmann::json;

inline constexpr int kExitPass = 0;
inline constexpr int kExitFailure = 2;
inline constexpr int kExitConfig = 3;

[[noreturn]] inline void config_fail(const std::string& msg) { fail(Errc::config_error, msg); }

inline Complex parse_complex(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  config_fail("expected a number or [re, im], got " + j.dump());
}

/// Rows of numbers or [re, im] pairs.
inline Matrix parse_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) config_fail(what + ": expected a matrix (array of rows)");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) config_fail(what + ": ragged matrix");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_complex(j[r][c]);
  }
  return m;
}

struct NodeSpec {
  Matrix a1, pi1;
  std::optional<Matrix> a2, pi2, s0;

  SNode build() const {
    try {
      if (!a2 && !pi2 && !s0) return SNode::skew_reduction(a1, pi1);
      const Matrix A2 = a2.value_or(Matrix(a1.adjoint()));
      const Matrix P2 = pi2.value_or(Matrix(-kI * pi1));
      if (s0) {
        SNode node{a1, A2, *s0, pi1, P2};
        node.validate(1e-10);
        return node;
      }
      return SNode::from_parameters(a1, A2, pi1, P2);
    } catch (const Error& e) {
      config_fail(std::string("S-node: ") + e.what());
    }
  }
};

struct PotentialSpec {
  std::string kind = "zero";  // zero | constant | gbdt-soliton | tabulated | tx-product
  int p = 1;
  Matrix c;
  NodeSpec node;
  std::string file;
  std::optional<double> M;
};

struct InverseSpec {
  double l = 1.0;
  int n = 200;
  double a0 = 200.0;
  double d_xi = 0.25;
  std::optional<double> eta;
  std::string weyl = "analytic";  // analytic | file
  std::string weyl_file;
};

struct RunConfig {
  std::string scenario = "run";
  PotentialSpec potential;
  Domain2D domain{1.0, 1.0, 4, 4};
  std::vector<Complex> z_samples;
  int steps = 2000;
  double t_final = 0.4;
  std::string pair = "standard";  // standard | alternate
  double tol_factorization = 1e-6;
  double tol_weyl_gap = 1e-4;
  double tol_inverse = 1e-2;
  double tol_residual = 1e-5;
  double tol_mkdv = 1e-4;
  double tol_identity = 1e-8;
  InverseSpec inverse;
  std::filesystem::path base_dir;  // directory of the config file, for relative paths
};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_fail(std::string("field '") + key + "' has the wrong type");
  }
}

inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) config_fail("configuration must be a JSON object");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.scenario = get_or<std::string>(j, "scenario", cfg.scenario);
  cfg.steps = get_or<int>(j, "steps", cfg.steps);
  cfg.t_final = get_or<double>(j, "t", cfg.t_final);
  cfg.pair = get_or<std::string>(j, "pair", cfg.pair);
  if (cfg.steps < 1) config_fail("steps must be positive");
  if (cfg.t_final < 0.0) config_fail("t must be nonnegative");
  if (cfg.pair != "standard" && cfg.pair != "alternate") config_fail("pair must be 'standard' or 'alternate'");

  if (j.contains("domain")) {
    const json& d = j["domain"];
    const double b1 = get_or<double>(d, "x_length", 1.0), b2 = get_or<double>(d, "t_length", 1.0);
    const int nx = get_or<int>(d, "nx", 4), nt = get_or<int>(d, "nt", 4);
    if (!(b1 > 0.0) || !(b2 > 0.0) || nx < 1 || nt < 1) config_fail("domain extents and grid sizes must be positive");
    cfg.domain = Domain2D(b1, b2, nx, nt);
  }

  const json pj = j.value("potential", json::object());
  PotentialSpec& ps = cfg.potential;
  ps.kind = get_or<std::string>(pj, "kind", ps.kind);
  ps.p = get_or<int>(pj, "p", ps.p);
  if (pj.contains("M")) ps.M = get_or<double>(pj, "M", 0.0);
  if (ps.kind == "zero") {
  } else if (ps.kind == "constant" || ps.kind == "tx-product") {
    if (!pj.contains("c")) config_fail(ps.kind + " potential needs 'c'");
    ps.c = parse_matrix(pj["c"], "potential.c");
    if (ps.c.rows() != ps.c.cols()) config_fail("potential.c must be square");
    ps.p = static_cast<int>(ps.c.rows());
  } else if (ps.kind == "gbdt-soliton") {
    if (!pj.contains("node")) config_fail("gbdt-soliton potential needs 'node'");
    const json& nj = pj["node"];
    if (!nj.contains("a1") || !nj.contains("pi1")) config_fail("node needs 'a1' and 'pi1'");
    ps.node.a1 = parse_matrix(nj["a1"], "node.a1");
    ps.node.pi1 = parse_matrix(nj["pi1"], "node.pi1");
    if (nj.contains("a2")) ps.node.a2 = parse_matrix(nj["a2"], "node.a2");
    if (nj.contains("pi2")) ps.node.pi2 = parse_matrix(nj["pi2"], "node.pi2");
    if (nj.contains("s0")) ps.node.s0 = parse_matrix(nj["s0"], "node.s0");
    if (ps.node.pi1.cols() % 2 != 0) config_fail("node.pi1 must have an even number of columns");
    ps.p = static_cast<int>(ps.node.pi1.cols() / 2);
  } else if (ps.kind == "tabulated") {
    ps.file = get_or<std::string>(pj, "file", "");
    if (ps.file.empty()) config_fail("tabulated potential needs 'file'");
  } else {
    config_fail("unknown potential kind '" + ps.kind + "'");
  }
  if (ps.p < 1) config_fail("p must be positive");
  if (ps.M && *ps.M < 0.0) config_fail("M must be nonnegative");

  if (j.contains("z_samples")) {
    if (!j["z_samples"].is_array()) config_fail("z_samples must be an array");
    for (const auto& z : j["z_samples"]) cfg.z_samples.push_back(parse_complex(z));
  }

  const json tj = j.value("tolerances", json::object());
  cfg.tol_factorization = get_or<double>(tj, "factorization", cfg.tol_factorization);
  cfg.tol_weyl_gap = get_or<double>(tj, "weyl_gap", cfg.tol_weyl_gap);
  cfg.tol_inverse = get_or<double>(tj, "inverse", cfg.tol_inverse);
  cfg.tol_residual = get_or<double>(tj, "residual", cfg.tol_residual);
  cfg.tol_mkdv = get_or<double>(tj, "mkdv", cfg.tol_mkdv);
  cfg.tol_identity = get_or<double>(tj, "identity", cfg.tol_identity);
  for (double tol : {cfg.tol_factorization, cfg.tol_weyl_gap, cfg.tol_inverse, cfg.tol_residual, cfg.tol_mkdv,
                     cfg.tol_identity})
    if (!(tol > 0.0)) config_fail("tolerances must be positive");

  const json ij = j.value("inverse", json::object());
  InverseSpec& inv = cfg.inverse;
  inv.l = get_or<double>(ij, "l", inv.l);
  inv.n = get_or<int>(ij, "n", inv.n);
  inv.a0 = get_or<double>(ij, "a0", inv.a0);
  inv.d_xi = get_or<double>(ij, "d_xi", inv.d_xi);
  if (ij.contains("eta")) inv.eta = get_or<double>(ij, "eta", 0.0);
  inv.weyl = get_or<std::string>(ij, "weyl", inv.weyl);
  inv.weyl_file = get_or<std::string>(ij, "weyl_file", "");
  if (!(inv.l > 0.0) || inv.n < 4 || !(inv.a0 > 0.0) || !(inv.d_xi > 0.0)) config_fail("invalid inverse settings");
  if (inv.weyl != "analytic" && inv.weyl != "file") config_fail("inverse.weyl must be 'analytic' or 'file'");
  if (inv.weyl == "file" && inv.weyl_file.empty()) config_fail("inverse.weyl_file is required for weyl = file");
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    config_fail(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

inline std::filesystem::path resolve(const RunConfig& cfg, const std::string& file) {
  const std::filesystem::path p(file);
  return p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p;
}

/// A potential together with its GBDT node, when it came from one.
struct BuiltPotential {
  MkdvPotential pot;
  std::optional<SNode> node;
  NodeField field;
  std::optional<MkdvSoliton> soliton;
  bool global_in_x = true;  // defined on the whole half-line x >= 0
};

inline BuiltPotential build_potential(const RunConfig& cfg) {
  const PotentialSpec& ps = cfg.potential;
  const Domain2D& d = cfg.domain;
  BuiltPotential out;
  if (ps.kind == "zero") {
    out.pot = MkdvPotential::zero(ps.p, d);
  } else if (ps.kind == "constant") {
    out.pot = MkdvPotential::constant(ps.c, d);
  } else if (ps.kind == "tx-product") {
    const Matrix c = ps.c;
    const Matrix zero = Matrix::Zero(c.rows(), c.cols());
    out.pot.p = ps.p;
    out.pot.v = [c](double x, double t) -> Matrix { return c * (x * t); };
    out.pot.v_x = [c](double, double t) -> Matrix { return c * t; };
    out.pot.v_xx = [zero](double, double) { return zero; };
    out.pot.M = op_norm(c) * d.x_length * d.t_length;
    out.pot.domain = d;
    out.global_in_x = false;
  } else if (ps.kind == "gbdt-soliton") {
    const SNode node = ps.node.build();
    out.soliton = mkdv_soliton(node, ps.p, d, ps.M);
    out.pot = out.soliton->potential;
    out.node = node;
    out.field = out.soliton->node_field;
  } else {
    auto table = std::make_shared<const TabulatedTable>(read_tabulated_csv(resolve(cfg, ps.file).string(), ps.p));
    if (table->p() != ps.p) config_fail("tabulated potential has a different p");
    try {
      out.pot = tabulated_potential(table, d.nx, d.nt);
    } catch (const Error& e) {
      config_fail(e.what());
    }
    out.global_in_x = false;
  }
  if (ps.M) out.pot.M = *ps.M;
  return out;
}

inline void require_half_plane(const RunConfig& cfg, double M) {
  if (cfg.z_samples.empty()) config_fail("z_samples must not be empty");
  for (const Complex z : cfg.z_samples)
    if (!(z.imag() < -M)) config_fail("z-sample violates Im z < -M");
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

/// CSV with a fixed header; numbers in %.16e.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<double>& values) {
    require(values.size() == header_.size(), "CSV row has the wrong width");
    rows_.push_back(values);
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::config_error, "cannot write " + path.string());
    for (std::size_t k = 0; k < header_.size(); ++k) out << (k ? "," : "") << header_[k];
    out << '\n';
    for (const auto& r : rows_) {
      for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << fmt(r[k]);
      out << '\n';
    }
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

/// Column names re_<prefix>_ab, im_<prefix>_ab for a p x p matrix, row-major.
inline std::vector<std::string> matrix_columns(const std::string& prefix, int p) {
  std::vector<std::string> out;
  for (int a = 1; a <= p; ++a)
    for (int b = 1; b <= p; ++b) {
      out.push_back("re_" + prefix + "_" + std::to_string(a) + std::to_string(b));
      out.push_back("im_" + prefix + "_" + std::to_string(a) + std::to_string(b));
    }
  return out;
}

inline void append_matrix(std::vector<double>& row, const Matrix& m) {
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b) {
      row.push_back(m(a, b).real());
      row.push_back(m(a, b).imag());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::config_error, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct CommandResult {
  int exit_code = kExitPass;
  json summary;
};

inline json check_entry(double value, double tol) { return json{{"value", value}, {"tolerance", tol}, {"pass", value <= tol}}; }

/// Factorization residual on the domain grid for each z-sample.
inline CommandResult cmd_factor_check(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const BuiltPotential bp = build_potential(cfg);
  require_half_plane(cfg, bp.pot.M);
  const auto pair = build_mkdv_pair(bp.pot);
  const Domain2D& d = cfg.domain;
  const int unit = std::lcm(d.nx, d.nt);
  const int steps = ((cfg.steps + unit - 1) / unit) * unit;
  std::vector<std::vector<double>> residuals(cfg.z_samples.size());
  parallel_for(cfg.z_samples.size(),
               [&](std::size_t k) { residuals[k] = factorization_residual_grid(pair.G, pair.F, cfg.z_samples[k], steps); });

  CsvWriter csv({"x", "t", "re_z", "im_z", "residual"});
  double worst = 0.0;
  for (std::size_t k = 0; k < cfg.z_samples.size(); ++k) {
    std::size_t idx = 0;
    for (int it = 0; it <= d.nt; ++it)
      for (int ix = 0; ix <= d.nx; ++ix) {
        const double r = residuals[k][idx++];
        worst = std::max(worst, r);
        csv.row({d.x_at(ix), d.t_at(it), cfg.z_samples[k].real(), cfg.z_samples[k].imag(), r});
      }
  }
  csv.write(out_dir / "factor_check.csv");
  CommandResult res;
  res.summary = {{"command", "factor-check"},
                 {"scenario", cfg.scenario},
                 {"steps", steps},
                 {"max_residual", worst},
                 {"tolerance", cfg.tol_factorization},
                 {"pass", worst <= cfg.tol_factorization}};
  res.exit_code = worst <= cfg.tol_factorization ? kExitPass : kExitFailure;
  return res;
}

inline PropertyJPair make_pair(const std::string& name, int p) {
  if (name == "standard") return PropertyJPair::standard(p);
  return {[p](Complex) { return identity(p); },
          [p](Complex z) { return Matrix((z / std::abs(z) + 2.0) * identity(p)); }};
}

/// Weyl function at t = 0 and t = T by direct limits, and at T by the Moebius evolution.
inline CommandResult cmd_weyl_evolve(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const BuiltPotential bp = build_potential(cfg);
  if (!bp.global_in_x) config_fail("weyl-evolve needs a potential defined on the whole half-line");
  require_half_plane(cfg, bp.pot.M);
  const double T = cfg.t_final;
  const MkdvPotential pot = bp.pot.with_domain(Domain2D(kInf, std::max(T, 1e-300)));
  const PropertyJPair pair = make_pair(cfg.pair, pot.p);

  struct Row {
    Matrix phi0, phiT, evolved;
    double gap = 0.0;
    bool in_sector = false;
  };
  std::vector<Row> rows(cfg.z_samples.size());
  parallel_for(cfg.z_samples.size(), [&](std::size_t k) {
    const Complex z = cfg.z_samples[k];
    Row& r = rows[k];
    r.phi0 = weyl_direct(pot, 0.0, pair, z).value;
    r.phiT = weyl_direct(pot, T, pair, z).value;
    const auto ev = weyl_evolve(r.phi0, pot, T, z, cfg.steps);
    r.evolved = ev.value;
    r.in_sector = ev.in_sector;
    r.gap = max_entry(r.evolved - r.phiT);
  });

  std::vector<std::string> header{"t", "re_z", "im_z"};
  for (const char* name : {"phi0", "phiT", "evolved"})
    for (auto& c : matrix_columns(name, pot.p)) header.push_back(c);
  header.push_back("gap");
  header.push_back("in_sector");
  CsvWriter csv(header);
  double worst = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::vector<double> row{T, cfg.z_samples[k].real(), cfg.z_samples[k].imag()};
    append_matrix(row, rows[k].phi0);
    append_matrix(row, rows[k].phiT);
    append_matrix(row, rows[k].evolved);
    row.push_back(rows[k].gap);
    row.push_back(rows[k].in_sector ? 1.0 : 0.0);
    csv.row(row);
    worst = std::max(worst, rows[k].gap);
  }
  csv.write(out_dir / "weyl_evolve.csv");
  CommandResult res;
  res.summary = {{"command", "weyl-evolve"},
                 {"scenario", cfg.scenario},
                 {"t", T},
                 {"pair", cfg.pair},
                 {"max_gap", worst},
                 {"tolerance", cfg.tol_weyl_gap},
                 {"pass", worst <= cfg.tol_weyl_gap}};
  res.exit_code = worst <= cfg.tol_weyl_gap ? kExitPass : kExitFailure;
  return res;
}

/// Weyl samples "re_zeta,im_zeta,re_phi_11,im_phi_11,..." on one horizontal
/// line, linearly interpolated in Re zeta; beyond the table the c1/zeta +
/// c2/zeta^2 model fitted at the two ends is used.
inline WeylProvider read_weyl_samples(const std::string& path, int p) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open Weyl samples " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, Matrix>> samples;
  double im = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        config_fail("non-numeric cell in " + path);
      }
    }
    if (vals.size() != static_cast<std::size_t>(2 + 2 * p * p)) config_fail("wrong column count in " + path);
    if (!samples.empty() && vals[1] != im) config_fail("Weyl samples must share one imaginary part");
    im = vals[1];
    Matrix m(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) {
        const std::size_t c = static_cast<std::size_t>(2 + 2 * (a * p + b));
        m(a, b) = Complex(vals[c], vals[c + 1]);
      }
    samples.emplace_back(vals[0], m);
  }
  if (samples.size() < 2) config_fail("need at least two Weyl samples");
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const Complex zl(samples.front().first, im), zr(samples.back().first, im);
  const Matrix gl = zl * samples.front().second, gr = zr * samples.back().second;
  const Matrix c2 = (gr - gl) / (1.0 / zr - 1.0 / zl);
  const Matrix c1 = gr - c2 / zr;
  auto table = std::make_shared<std::vector<std::pair<double, Matrix>>>(std::move(samples));
  return [table, c1, c2, im](Complex zeta) -> Matrix {
    if (std::abs(zeta.imag() - im) > 1e-9 * std::max(1.0, std::abs(im)))
      fail(Errc::config_error, "Weyl samples lie on a different line than Im zeta = eta / 2");
    const double x = zeta.real();
    const auto& t = *table;
    if (x < t.front().first || x > t.back().first) return Matrix(c1 / zeta + c2 / (zeta * zeta));
    auto it = std::upper_bound(t.begin(), t.end(), x, [](double v, const auto& e) { return v < e.first; });
    if (it == t.end()) return t.back().second;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (x - lo.first) / (hi.first - lo.first);
    return Matrix((1.0 - w) * lo.second + w * hi.second);
  };
}

/// Runs the inverse pipeline on the Weyl function of the configured potential
/// at t = 0 (analytic for GBDT solitons and the zero potential) or on samples
/// from a file, and compares with the potential when it is known.
inline CommandResult cmd_invert(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const BuiltPotential bp = build_potential(cfg);
  const InverseSpec& inv = cfg.inverse;
  const int p = bp.pot.p;
  const double M = bp.pot.M;
  FourierOptions fo;
  fo.a0 = inv.a0;
  fo.d_xi = inv.d_xi;
  fo.eta = inv.eta;
  const double eta = inv.eta.value_or(-2.0 * M - 1.0);
  if (eta >= -2.0 * M) config_fail("inverse.eta must satisfy eta < -2M");

  WeylProvider phi;
  bool reference = true;
  if (inv.weyl == "file") {
    phi = read_weyl_samples(resolve(cfg, inv.weyl_file).string(), p);
    fo.fixed_truncation = true;
    reference = cfg.potential.kind != "tabulated" && cfg.potential.kind != "tx-product";
  } else if (cfg.potential.kind == "zero") {
    phi = [p](Complex) { return Matrix(Matrix::Zero(p, p)); };
  } else if (cfg.potential.kind == "gbdt-soliton") {
    const SNode node = *bp.node;
    const NodeField field = bp.field;
    phi = [node, field, p](Complex z) { return darboux_weyl_function(node, field, p, 0.0, z); };
  } else {
    config_fail("invert with weyl = analytic needs a zero or gbdt-soliton potential");
  }

  const InversionResult r = invert_weyl(phi, M, p, Grid1D{inv.l, inv.n}, fo);

  std::vector<std::string> header{"x"};
  for (auto& c : matrix_columns("v", p)) header.push_back(c);
  CsvWriter csv(header);
  double err = 0.0;
  const int n = inv.n;
  for (int i = 0; i <= n; ++i) {
    const double x = r.kernel.grid.at(i);
    std::vector<double> row{x};
    append_matrix(row, r.v[static_cast<std::size_t>(i)]);
    csv.row(row);
    if (reference && i > 0 && i < n && x <= bp.pot.domain.x_length)
      err = std::max(err, max_entry(r.v[static_cast<std::size_t>(i)] - bp.pot.value(x, 0.0)));
  }
  csv.write(out_dir / "invert_v.csv");
  CsvWriter diag({"l", "min_eig"});
  for (int i = 0; i <= n; ++i) diag.row({r.kernel.grid.at(i), r.min_eig[static_cast<std::size_t>(i)]});
  diag.write(out_dir / "invert_min_eig.csv");

  double min_eig = kInf;
  for (double e : r.min_eig) min_eig = std::min(min_eig, e);
  CommandResult res;
  res.summary = {{"command", "invert"},
                 {"scenario", cfg.scenario},
                 {"n", n},
                 {"l", inv.l},
                 {"eta", r.kernel.eta},
                 {"a_trunc", r.kernel.a_trunc},
                 {"s0_offset", r.kernel.s0_offset},
                 {"min_eig", min_eig},
                 {"orthonormality_defect", orthonormality_defect(r.rows)}};
  bool pass = true;
  if (reference) {
    res.summary["sup_error"] = err;
    res.summary["tolerance"] = cfg.tol_inverse;
    pass = err <= cfg.tol_inverse;
  }
  res.summary["pass"] = pass;
  res.exit_code = pass ? kExitPass : kExitFailure;
  return res;
}

/// GBDT soliton with its verification suites.
inline CommandResult cmd_gbdt(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.potential.kind != "gbdt-soliton") config_fail("gbdt needs a gbdt-soliton potential");
  const Domain2D& d = cfg.domain;
  const int p = cfg.potential.p;
  const SNode node = cfg.potential.node.build();
  std::vector<Complex> zs = cfg.z_samples;

  CommandResult res;
  res.summary = {{"command", "gbdt"}, {"scenario", cfg.scenario}};
  std::optional<MkdvSoliton> sol;
  try {
    sol = mkdv_soliton(node, p, d, cfg.potential.M);
  } catch (const Error& e) {
    if (e.code() != Errc::ds_violation && e.code() != Errc::structure_broken) throw;
    res.summary["error"] = to_string(e.code());
    res.summary["message"] = e.what();
    res.summary["pass"] = false;
    res.exit_code = kExitFailure;
    return res;
  }
  const MkdvPotential& pot = sol->potential;
  if (zs.empty()) zs = {Complex(0.0, -pot.M - 2.0)};
  for (const Complex z : zs)
    if (!(z.imag() < -pot.M)) config_fail("z-sample violates Im z < -M");

  std::vector<std::string> header{"x", "t"};
  for (auto& c : matrix_columns("v", p)) header.push_back(c);
  header.push_back("abs_det_s");
  CsvWriter csv(header);
  for (int k = 0; k <= d.nt; ++k)
    for (int i = 0; i <= d.nx; ++i) {
      std::vector<double> row{d.x_at(i), d.t_at(k)};
      append_matrix(row, pot.value(d.x_at(i), d.t_at(k)));
      row.push_back(std::abs(sol->field.det_s[sol->field.index(i, k)]));
      csv.row(row);
    }
  csv.write(out_dir / "gbdt_soliton.csv");

  const auto seed = zero_seed_pair(p, Domain2D::unbounded());
  const NodeField& nf = sol->node_field;
  json checks;
  bool pass = true;
  auto record = [&](const char* name, double value, double tol) {
    checks[name] = check_entry(value, tol);
    pass = pass && value <= tol;
  };

  const double scale = std::max(1.0, op_norm(node.a1) + op_norm(node.a2));
  record("identity_drift", sol->field.max_identity_defect(node) / scale, cfg.tol_identity);

  // interior points of the grid, away from the edges for the stencils
  const double hm = 1e-3;
  double mk = 0.0, dx_res = 0.0, dt_res = 0.0, zc = 0.0;
  std::vector<std::pair<double, double>> pts;
  for (int k = 0; k <= d.nt; ++k)
    for (int i = 0; i <= d.nx; ++i) {
      const double x = d.x_at(i), t = d.t_at(k);
      if (x - 2 * hm < 0.0 || t - hm < 0.0 || x + 2 * hm > d.x_length || t + hm > d.t_length) continue;
      pts.emplace_back(x, t);
    }
  for (const auto& [x, t] : pts) {
    mk = std::max(mk, mkdv_residual(pot, x, t, hm));
    for (const Complex z : zs) {
      dx_res = std::max(dx_res, darboux_ode_residual(nf, node, seed.G, Axis::x, x, t, z, 1e-4));
      dt_res = std::max(dt_res, darboux_ode_residual(nf, node, seed.F, Axis::t, x, t, z, 1e-4));
      zc = std::max(zc, verify_transformed_zero_curvature(nf, node, seed.G, seed.F, x, t, z).residual);
    }
  }
  record("mkdv_residual", mk, cfg.tol_mkdv);
  record("darboux_ode_x", dx_res, cfg.tol_residual);
  record("darboux_ode_t", dt_res, cfg.tol_residual);
  record("transformed_zero_curvature", zc, cfg.tol_residual);

  const auto pair = build_mkdv_pair(pot);
  const int unit = std::lcm(d.nx, d.nt);
  const int steps = ((cfg.steps + unit - 1) / unit) * unit;
  std::vector<double> fres(zs.size());
  parallel_for(zs.size(), [&](std::size_t k) {
    const auto g = factorization_residual_grid(pair.G, pair.F, zs[k], steps);
    fres[k] = *std::max_element(g.begin(), g.end());
  });
  record("factorization", *std::max_element(fres.begin(), fres.end()), cfg.tol_factorization);

  res.summary["interior_points"] = pts.size();
  res.summary["M"] = pot.M;
  res.summary["sup_v"] = sol->sup_v;
  res.summary["checks"] = checks;
  res.summary["pass"] = pass;
  res.exit_code = pass ? kExitPass : kExitFailure;
  return res;
}

/// Dispatches a command, writes summary.json, and maps errors to exit codes.
inline int run_command(const std::string& name, const std::filesystem::path& config_path,
                       const std::filesystem::path& out_dir, std::optional<int> steps_override) {
  json summary;
  int code = kExitPass;
  try {
    RunConfig cfg = load_config(config_path);
    if (steps_override) {
      if (*steps_override < 1) config_fail("--steps must be positive");
      cfg.steps = *steps_override;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) config_fail("cannot create output directory " + out_dir.string());
    CommandResult res;
    if (name == "factor-check") res = cmd_factor_check(cfg, out_dir);
    else if (name == "weyl-evolve") res = cmd_weyl_evolve(cfg, out_dir);
    else if (name == "invert") res = cmd_invert(cfg, out_dir);
    else if (name == "gbdt") res = cmd_gbdt(cfg, out_dir);
    else config_fail("unknown command " + name);
    summary = res.summary;
    code = res.exit_code;
  } catch (const Error& e) {
    code = e.code() == Errc::config_error ? kExitConfig : kExitFailure;
    summary = {{"command", name}, {"error", to_string(e.code())}, {"message", e.what()}, {"pass", false}};
  } catch (const std::exception& e) {
    code = kExitFailure;
    summary = {{"command", name}, {"error", "Exception"}, {"message", e.what()}, {"pass", false}};
  }
  summary["exit_code"] = code;
  std::error_code ec;
  if (std::filesystem::is_directory(out_dir, ec)) {
    try {
      write_json(out_dir / "summary.json", summary);
    } catch (const Error&) {
    }
  }
  return code;
}

}  // namespace zcf::cli
