#pragma once

#include <stdexcept>
#include <string>

namespace redlab {

// Base for all errors raised by the library. The CLI maps these to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file (registry, behaviors, scripts, campaign config).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that violates an invariant (duplicate id,
// score outside (0,1), missing reference). Message names the offender.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad CLI/campaign configuration discovered before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class GatewayFailure {
  non_retryable_status,  // 400/401/403 and other non-retryable HTTP statuses
  exhausted_retries,     // retryable failures persisted through max_attempts
  timeout,               // every attempt timed out
};

// Chat backend failure. Carries the last HTTP status (0 for transport-level
// failures) and the number of attempts actually issued.
class GatewayError : public Error {
 public:
  GatewayError(GatewayFailure kind, int status, int attempts, const std::string& what)
      : Error(what), kind(kind), status(status), attempts(attempts) {}

  GatewayFailure kind;
  int status;
  int attempts;
};

// Numeric preconditions (logit domain, degenerate regression input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace redlab
