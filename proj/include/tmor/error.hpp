#pragma once

#include <stdexcept>
#include <string>

namespace tmor {

enum class ErrorCode {
  invalid_input,
  degenerate_reference,
  degenerate_snapshot,
  convergence_failure,
  training_divergence,
  contract_violation,
  not_achievable,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid input";
    case ErrorCode::degenerate_reference: return "degenerate reference";
    case ErrorCode::degenerate_snapshot: return "degenerate snapshot";
    case ErrorCode::convergence_failure: return "convergence failure";
    case ErrorCode::training_divergence: return "training divergence";
    case ErrorCode::contract_violation: return "contract violation";
    case ErrorCode::not_achievable: return "not achievable";
    case ErrorCode::io: return "i/o error";
  }
  return "unknown";
}

/// Library-wide exception; `code()` lets callers (the CLI in particular) map
/// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tmor
