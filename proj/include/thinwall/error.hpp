#pragma once

#include <stdexcept>
#include <string>

namespace thinwall {

enum class ErrorKind {
  invalid_domain,
  invalid_field,
  invalid_spec,
  stale_field,
  stale_state,
  transfer_failure,
  assembly_error,
  convergence_failure,
  io_error,
  parse_error,
  config_invariant,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_domain: return "invalid-domain";
    case ErrorKind::invalid_field: return "invalid-field";
    case ErrorKind::invalid_spec: return "invalid-spec";
    case ErrorKind::stale_field: return "stale-field";
    case ErrorKind::stale_state: return "stale-state";
    case ErrorKind::transfer_failure: return "transfer-failure";
    case ErrorKind::assembly_error: return "assembly-error";
    case ErrorKind::convergence_failure: return "convergence-failure";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::config_invariant: return "config-invariant";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers can branch
/// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace thinwall
