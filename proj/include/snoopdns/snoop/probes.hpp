#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snoopdns/snoop/discovery.hpp"
#include "snoopdns/snoop/observation.hpp"
#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::snoop {

/// Slack for deciding that a post-expiry reading equals the maximum TTL:
/// max(2 s, 1% of max_ttl).
Seconds default_grace(std::uint32_t max_ttl);

/// Classifies the reading taken by a post-expiry probe. `expiry` is the
/// instant the previous record expired and `probe_time` when the probe was
/// sent. A reading within `grace` of max_ttl means the probe refreshed the
/// record itself (censored); anything lower dates an external refresh.
/// Throws Error{TtlExceedsMax} when the reading exceeds max_ttl + grace.
RefreshObservation evaluate_ttl_cycle(const std::string& server, const dns::DomainName& domain,
                                      std::uint32_t max_ttl, Seconds expiry, Seconds probe_time,
                                      std::uint32_t reading, Seconds grace, double rtt_ms = 0);

/// Pipelined TTL-with-recursion cycles for one domain: the probe closing a
/// cycle also tells when the record will next expire.
class TtlCycleRunner {
 public:
  /// Throws Error{PreconditionViolation} unless 0 < window <= max_ttl.
  TtlCycleRunner(Resolver& resolver, dns::DomainName domain, std::uint32_t max_ttl, Seconds window,
                 std::optional<Seconds> grace = std::nullopt);

  /// Reads the current TTL to learn the next expiry.
  TtlReading prime();
  bool primed() const { return expiry_.has_value(); }
  Seconds expiry() const { return *expiry_; }
  Seconds next_probe_at() const { return *expiry_ + window_; }
  std::uint32_t max_ttl() const { return max_ttl_; }

  /// Sleeps until expiry + window, probes and classifies. On TtlExceedsMax
  /// and LateProbe the runner stays primed from the fresh reading; on other
  /// errors it must be primed again.
  RefreshObservation run_cycle();

 private:
  Resolver& resolver_;
  dns::DomainName domain_;
  std::uint32_t max_ttl_;
  Seconds window_;
  Seconds grace_;
  std::optional<Seconds> expiry_;
};

/// One self-contained cycle: learn the expiry, wait it out plus `window`,
/// and read the TTL again.
RefreshObservation run_cycle_ttl_recursive(Resolver& resolver, const dns::DomainName& domain,
                                           std::uint32_t max_ttl, Seconds window);

/// Recursion-disabled probing of one domain. Successive probes that date the
/// same refresh (within `dedup_epsilon`) collapse into one event.
class Rd0Prober {
 public:
  Rd0Prober(Resolver& resolver, dns::DomainName domain, std::uint32_t max_ttl,
            Seconds dedup_epsilon = Seconds{2.0});

  /// Sends one RD=0 query. Returns an event for a newly dated refresh, a
  /// censored window for an empty answer, or nothing when the probe only
  /// re-confirms a known refresh (or is the first probe of the domain).
  /// Throws Error{RdNotHonored} after three consecutive refreshes dated to
  /// the probe instant itself.
  std::optional<RefreshObservation> probe();

  std::optional<Seconds> last_probe() const { return last_probe_; }

 private:
  Resolver& resolver_;
  dns::DomainName domain_;
  std::uint32_t max_ttl_;
  Seconds dedup_epsilon_;
  std::optional<Seconds> last_probe_;
  std::optional<Seconds> last_refresh_;
  /// Since when the record is known absent and under watch.
  std::optional<Seconds> watched_from_;
  int refreshes_at_probe_ = 0;
};

struct RdEvidence {
  dns::DomainName query;
  bool timed_out = false;
  dns::Rcode rcode = dns::Rcode::NoError;
  std::size_t answers = 0;
  double rtt_ms = 0;
};

struct RdBehavior {
  std::string server;
  bool honors_rd0 = false;
  std::vector<RdEvidence> evidence;
};

/// Error{Timeout} raised by check_rd_behavior; carries what was gathered.
class RdCheckTimeout : public Error {
 public:
  RdCheckTimeout(RdBehavior partial, const std::string& what)
      : Error(ErrorCode::Timeout, what), partial_(std::move(partial)) {}
  const RdBehavior& partial() const { return partial_; }

 private:
  RdBehavior partial_;
};

/// Sends RD=0 queries for never-cached canary names. The server honors RD=0
/// iff none of the answered canaries came back with records.
RdBehavior check_rd_behavior(Resolver& resolver, std::span<const dns::DomainName> canaries);

/// Unique labels under `zone` for probes that must miss the cache.
std::vector<dns::DomainName> make_canaries(const dns::DomainName& zone, std::size_t count, std::uint64_t seed);

}  // namespace snoopdns::snoop
