#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snoopdns/snoop/discovery.hpp"
#include "snoopdns/snoop/observation.hpp"
#include "snoopdns/snoop/timing.hpp"
#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::snoop {

struct SnoopBudget {
  /// Probe cycles are only started while the probe instant lies within
  /// `duration` of the start.
  std::optional<Seconds> duration;
  std::optional<std::uint64_t> max_cycles;
};

struct SnoopPlan {
  Method method = Method::ttl_recursive;
  std::uint32_t max_ttl = 0;
  /// W / max_ttl, in (0, 1].
  double window_fraction = 1.0;
  std::optional<Seconds> grace;
  /// Watch the first expiry countdown for servers that refresh early.
  bool watch_first_expiry = true;
  DiscoveryConfig discovery;
  /// Rediscoveries allowed after TtlExceedsMax before the domain is dropped.
  int max_rediscoveries = 3;
  /// Required for Method::timing.
  std::optional<TimingCalibration> calibration;
  /// Spacing of RD=0 probes; defaults to half the window.
  std::optional<Seconds> rd0_interval;
  /// Consecutive lost cycles before the whole scan gives up.
  int max_consecutive_timeouts = 3;
  SnoopBudget budget;
  /// Checked between cycles; set to abandon the domain early.
  const std::atomic<bool>* stop = nullptr;

  Seconds window() const { return Seconds(window_fraction * max_ttl); }
};

struct SnoopSummary {
  std::uint64_t cycles = 0;
  std::uint64_t events = 0;
  std::uint64_t censored = 0;
  std::uint64_t faults = 0;
  bool aborted = false;
  std::optional<ErrorCode> abort_reason;

  SnoopSummary& operator+=(const SnoopSummary& o);
};

/// Runs probe cycles for one domain until the budget is spent, reporting every
/// observation and per-cycle fault to `sink` in chronological order.
/// ServerPrefetches, NonMonotonicTtl, ResolveFailed and RdNotHonored end this
/// domain (reported as a fault). Throws Error{ResolverUnreachable} after
/// max_consecutive_timeouts lost cycles in a row.
SnoopSummary snoop_domain(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan,
                          const ScanSink& sink);

struct ScanTarget {
  dns::DomainName domain;
  SnoopPlan plan;
};

using TransportFactory = std::function<std::unique_ptr<Transport>()>;

struct ScanTotals {
  SnoopSummary summary;
  std::uint64_t queries_sent = 0;
};

/// Snoops every target concurrently against one server, one task per domain,
/// sharing `limiter`. The sink is called under a lock. A ResolverUnreachable
/// from any task stops the rest and is rethrown.
ScanTotals run_scan(Clock& clock, const std::string& server_label, const TransportFactory& transports,
                    RateLimiter& limiter, std::span<const ScanTarget> targets, const ScanSink& sink,
                    QueryPolicy policy = {}, std::uint64_t seed = 1);

struct DiscoveryOutcome {
  dns::DomainName domain;
  std::optional<MaxTtlEstimate> estimate;
  std::optional<ErrorCode> error;
  std::string detail;
};

/// Runs discover_max_ttl for every domain on a pool of `workers` tasks that
/// share `limiter`. Per-domain failures are reported in the outcome; results
/// keep the order of `domains`.
std::vector<DiscoveryOutcome> discover_many(Clock& clock, const std::string& server_label,
                                            const TransportFactory& transports, RateLimiter& limiter,
                                            std::span<const dns::DomainName> domains, const DiscoveryConfig& config,
                                            std::size_t workers, QueryPolicy policy = {}, std::uint64_t seed = 1);

}  // namespace snoopdns::snoop
