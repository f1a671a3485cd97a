#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "snoopdns/clock.hpp"
#include "snoopdns/dns/name.hpp"
#include "snoopdns/error.hpp"

namespace snoopdns::snoop {

enum class Method { rd0, ttl_recursive, timing };

std::string_view to_string(Method m);
/// Throws Error{ConfigError} for unknown names.
Method parse_method(std::string_view s);

struct RefreshEvent {
  Seconds delay_after_expiry{0};
  Seconds inferred_refresh_time{0};

  friend bool operator==(const RefreshEvent&, const RefreshEvent&) = default;
};

/// Outcome of one probe cycle. window_start is the expiry instant the cycle
/// watched from; window_length is how long the record was watched. Either an
/// external refresh was seen at delay_after_expiry, or the window is censored.
struct RefreshObservation {
  std::string server;
  dns::DomainName domain;
  Method method = Method::ttl_recursive;
  Seconds window_start{0};
  Seconds window_length{0};
  std::optional<RefreshEvent> event;
  double probe_rtt_ms = 0;
  bool censored = false;

  /// window_length > 0, censored xor event, 0 <= delay <= window_length.
  bool satisfies_invariants() const;
  /// Seconds of exposure this cycle contributes: the delay for events, the
  /// whole window for censored cycles.
  Seconds observed_time() const;

  friend bool operator==(const RefreshObservation&, const RefreshObservation&) = default;
};

/// A per-cycle failure that did not end the scan.
struct ProbeFault {
  std::string server;
  dns::DomainName domain;
  Method method = Method::ttl_recursive;
  Seconds at{0};
  ErrorCode code = ErrorCode::Timeout;
  std::string detail;

  friend bool operator==(const ProbeFault&, const ProbeFault&) = default;
};

using ScanEvent = std::variant<RefreshObservation, ProbeFault>;
using ScanSink = std::function<void(const ScanEvent&)>;

}  // namespace snoopdns::snoop
