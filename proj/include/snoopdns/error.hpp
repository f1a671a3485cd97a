#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace snoopdns {

/// Failure categories surfaced by every module. The enumerator names double as
/// the stable identifiers written to observation logs and CLI output.
enum class ErrorCode {
  InvalidName,
  Malformed,
  Timeout,
  ServerPrefetches,
  NonMonotonicTtl,
  TtlExceedsMax,
  RdNotHonored,
  InsufficientSeparation,
  PreconditionViolation,
  Unconfirmed,
  ResolveFailed,
  LateProbe,
  Truncated,
  NoObservation,
  DomainError,
  ConfigError,
  BindError,
  ParseError,
  InvalidDomain,
  ResolverUnreachable,
  IoError,
  EmptyLog,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace snoopdns
