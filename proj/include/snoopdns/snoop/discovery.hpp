#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::snoop {

/// Maximum TTL a caching server assigns to one domain on refresh.
struct MaxTtlEstimate {
  std::string server;
  dns::DomainName domain;
  std::uint32_t max_ttl = 0;
  int confirmations = 0;
  bool confirmed = false;
  /// True when at least one sighting counted toward max_ttl was snapped up
  /// to the grid.
  bool snapped_to_grid = false;
  /// Raw rolled-over readings and how often each was seen.
  std::map<std::uint32_t, int> candidates_seen;
};

struct DiscoveryConfig {
  int required_confirmations = 5;
  /// Round-number grids tried in order when snapping a reading.
  std::vector<std::uint32_t> grid{60, 15, 20};
  std::uint32_t snap_tolerance = 2;
  /// Delay after the predicted expiry before reading the rolled-over value.
  Seconds post_expiry_epsilon{1.0};
  /// Countdown polling starts this long before the predicted expiry.
  Seconds poll_lead{10.0};
  Seconds poll_interval{1.0};
  /// Readings may sit this far above the predicted countdown value.
  double countdown_tolerance = 2.0;
  /// Rollovers attempted before giving up; 0 means 4x required_confirmations.
  int max_rollovers = 0;
};

struct SnapResult {
  std::uint32_t value = 0;
  bool snapped = false;
};

/// Snaps `reading` up to the first grid multiple (trying grids in order) that
/// lies within `tolerance` seconds above it. Readings already on a grid, or
/// not close to any, come back unchanged with snapped = false.
SnapResult snap_to_grid(std::uint32_t reading, std::span<const std::uint32_t> grid, std::uint32_t tolerance);

/// Counts rolled-over readings until one snapped value has been seen the
/// required number of times.
class MaxTtlTally {
 public:
  explicit MaxTtlTally(const DiscoveryConfig& config);

  /// Returns true once some candidate reaches the required confirmations.
  bool add(std::uint32_t reading);

  bool confirmed() const { return confirmed_.has_value(); }
  /// Fills max_ttl/confirmations/snapped/candidates on `out`.
  void fill(MaxTtlEstimate& out) const;

 private:
  const DiscoveryConfig& config_;
  std::map<std::uint32_t, int> raw_;
  std::map<std::uint32_t, int> snapped_counts_;
  std::map<std::uint32_t, bool> snapped_any_;
  std::optional<std::uint32_t> confirmed_;
};

struct TtlReading {
  Seconds at{0};
  std::uint32_t ttl = 0;
  double rtt_ms = 0;
};

/// Queries `domain` and returns the minimum TTL along its answer chain.
/// Throws Error{ResolveFailed} when nothing is answered, Error{Truncated} for
/// TC responses and Error{Timeout} when the server is silent.
TtlReading read_ttl(Resolver& resolver, const dns::DomainName& domain, bool recursion_desired = true);

/// Polls a cached record through the last `poll_lead` seconds of its countdown.
/// Throws Error{ServerPrefetches} when the TTL jumps back up before expiry and
/// Error{NonMonotonicTtl} when it stops counting down. Returns false when a
/// poll went out after the predicted expiry, in which case that poll may have
/// refreshed the record and the caller should read the TTL afresh.
bool watch_countdown(Resolver& resolver, const dns::DomainName& domain, const TtlReading& anchor,
                     const DiscoveryConfig& config);

/// Repeatedly lets the record expire and reads the value it rolls over to
/// until the same (grid-snapped) value is confirmed. Throws
/// Error{Unconfirmed} when max_rollovers is exhausted.
MaxTtlEstimate discover_max_ttl(Resolver& resolver, const dns::DomainName& domain,
                                const DiscoveryConfig& config = {});

}  // namespace snoopdns::snoop
