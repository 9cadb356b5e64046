#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qrule {

enum class ErrorKind {
  invalid_parameter,
  joint_discontinuity,
  tangency,
  non_confining,
  odd_turning_points,
  pole,
  non_convergence,
  out_of_range,
  truncation_too_shallow,
  overflow,
  coverage,
  negative_radicand,
  degenerate_state,
  multi_well,
  domain_too_small,
  bracket_collision,
  ratio_pole,
  regime,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_parameter: return "invalid parameter";
    case ErrorKind::joint_discontinuity: return "joint discontinuity";
    case ErrorKind::tangency: return "tangency";
    case ErrorKind::non_confining: return "non-confining";
    case ErrorKind::odd_turning_points: return "odd turning-point count";
    case ErrorKind::pole: return "pole";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::out_of_range: return "out of range";
    case ErrorKind::truncation_too_shallow: return "truncation too shallow";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::negative_radicand: return "negative radicand";
    case ErrorKind::degenerate_state: return "degenerate state";
    case ErrorKind::multi_well: return "multi-well";
    case ErrorKind::domain_too_small: return "domain too small";
    case ErrorKind::bracket_collision: return "bracket collision";
    case ErrorKind::ratio_pole: return "ratio pole";
    case ErrorKind::regime: return "turning-point regime";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qrule
