#pragma once

#include <stdexcept>
#include <string>

namespace lindyn {

/// Failure categories raised by the library. Each maps to one named error
/// condition of an operation contract.
enum class Errc {
  invalid_argument,
  non_stochastic,
  negative_entry,
  bad_discount,
  solve_failure,
  no_convergence,
  gamma_mismatch,
  too_large,
  degenerate_spectrum,
  generation_failure,
  not_diagonalizable,
  minimality_violation,
  numerical_failure,
  degenerate_gap,
  dimension_mismatch,
  shape_mismatch,
  collapse,
  singular_f,
  td_unstable,
  step_rejected,
  not_stationary,
  io_error,
  parse_error,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::non_stochastic: return "NonStochastic";
    case Errc::negative_entry: return "NegativeEntry";
    case Errc::bad_discount: return "BadDiscount";
    case Errc::solve_failure: return "SolveFailure";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::gamma_mismatch: return "GammaMismatch";
    case Errc::too_large: return "TooLarge";
    case Errc::degenerate_spectrum: return "DegenerateSpectrum";
    case Errc::generation_failure: return "GenerationFailure";
    case Errc::not_diagonalizable: return "NotDiagonalizable";
    case Errc::minimality_violation: return "MinimalityViolation";
    case Errc::numerical_failure: return "NumericalFailure";
    case Errc::degenerate_gap: return "DegenerateGap";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::collapse: return "Collapse";
    case Errc::singular_f: return "SingularF";
    case Errc::td_unstable: return "TDUnstable";
    case Errc::step_rejected: return "StepRejected";
    case Errc::not_stationary: return "NotStationary";
    case Errc::io_error: return "IOError";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace lindyn
