#include "snoopdns/error.hpp"

namespace snoopdns {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ServerPrefetches: return "ServerPrefetches";
    case ErrorCode::NonMonotonicTtl: return "NonMonotonicTtl";
    case ErrorCode::TtlExceedsMax: return "TtlExceedsMax";
    case ErrorCode::RdNotHonored: return "RdNotHonored";
    case ErrorCode::InsufficientSeparation: return "InsufficientSeparation";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::Unconfirmed: return "Unconfirmed";
    case ErrorCode::ResolveFailed: return "ResolveFailed";
    case ErrorCode::LateProbe: return "LateProbe";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::NoObservation: return "NoObservation";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::BindError: return "BindError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidDomain: return "InvalidDomain";
    case ErrorCode::ResolverUnreachable: return "ResolverUnreachable";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyLog: return "EmptyLog";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::EmptyLog); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace snoopdns
