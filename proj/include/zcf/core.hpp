#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace zcf {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A matrix-valued coefficient of the two real variables (x, t).
using Provider = std::function<Matrix(double x, double t)>;

enum class Errc {
  invalid_argument,
  pole_hit,
  domain_error,
  derivative_unavailable,
  step_overflow,
  sector_error,
  singular_denominator,
  no_convergence,
  tail_too_fat,
  eta_violation,
  grid_too_coarse,
  solve_failure,
  phase_jump,
  spectra_clash,
  outside_ds,
  resolvent_singular,
  poles_present,
  structure_broken,
  ds_violation,
  config_error,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::pole_hit: return "PoleHit";
    case Errc::domain_error: return "DomainError";
    case Errc::derivative_unavailable: return "DerivativeUnavailable";
    case Errc::step_overflow: return "StepOverflow";
    case Errc::sector_error: return "SectorError";
    case Errc::singular_denominator: return "SingularDenominator";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::tail_too_fat: return "TailTooFat";
    case Errc::eta_violation: return "EtaViolation";
    case Errc::grid_too_coarse: return "GridTooCoarse";
    case Errc::solve_failure: return "SolveFailure";
    case Errc::phase_jump: return "PhaseJump";
    case Errc::spectra_clash: return "SpectraClash";
    case Errc::outside_ds: return "OutsideDS";
    case Errc::resolvent_singular: return "ResolventSingular";
    case Errc::poles_present: return "PolesPresent";
    case Errc::structure_broken: return "StructureBroken";
    case Errc::ds_violation: return "DSViolation";
    case Errc::config_error: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(Errc::invalid_argument, what);
}

}  // namespace zcf
