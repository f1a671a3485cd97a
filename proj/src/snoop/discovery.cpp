#include "snoopdns/snoop/discovery.hpp"

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::snoop {

SnapResult snap_to_grid(std::uint32_t reading, std::span<const std::uint32_t> grid, std::uint32_t tolerance) {
  for (std::uint32_t g : grid) {
    if (g == 0) continue;
    const std::uint64_t up = (static_cast<std::uint64_t>(reading) + g - 1) / g * g;
    if (up - reading <= tolerance) return {static_cast<std::uint32_t>(up), up != reading};
  }
  return {reading, false};
}

MaxTtlTally::MaxTtlTally(const DiscoveryConfig& config) : config_(config) {}

bool MaxTtlTally::add(std::uint32_t reading) {
  if (confirmed_) return true;
  ++raw_[reading];
  if (reading == 0) return false;
  const SnapResult s = snap_to_grid(reading, config_.grid, config_.snap_tolerance);
  const int count = ++snapped_counts_[s.value];
  snapped_any_[s.value] = snapped_any_[s.value] || s.snapped;
  if (count >= config_.required_confirmations) confirmed_ = s.value;
  return confirmed_.has_value();
}

void MaxTtlTally::fill(MaxTtlEstimate& out) const {
  out.candidates_seen = raw_;
  out.confirmed = confirmed_.has_value();
  std::uint32_t best = 0;
  int best_count = 0;
  if (confirmed_) {
    best = *confirmed_;
    best_count = snapped_counts_.at(best);
  } else {
    for (const auto& [value, count] : snapped_counts_) {
      if (count > best_count) {
        best = value;
        best_count = count;
      }
    }
  }
  out.max_ttl = best;
  out.confirmations = best_count;
  auto it = snapped_any_.find(best);
  out.snapped_to_grid = it != snapped_any_.end() && it->second;
}

TtlReading read_ttl(Resolver& resolver, const dns::DomainName& domain, bool recursion_desired) {
  QueryOutcome q = resolver.query(domain, recursion_desired);
  if (q.response.truncated) {
    throw Error(ErrorCode::Truncated, fmt::format("{}: truncated response", domain.str()));
  }
  auto ttl = dns::min_answer_ttl(q.response, domain);
  if (!ttl) {
    throw Error(ErrorCode::ResolveFailed,
                fmt::format("{}: no answer (rcode {})", domain.str(), static_cast<int>(q.response.rcode)));
  }
  return {q.sent_at, *ttl, q.rtt_ms};
}

bool watch_countdown(Resolver& resolver, const dns::DomainName& domain, const TtlReading& anchor,
                     const DiscoveryConfig& config) {
  Clock& clock = resolver.clock();
  const Seconds expiry = anchor.at + Seconds(anchor.ttl);
  const double tol = config.countdown_tolerance;
  TtlReading prev = anchor;
  Seconds next = std::max(clock.now(), expiry - config.poll_lead);
  // Stop while at least one poll interval remains so the watch never itself
  // triggers the rollover.
  while (next <= expiry - config.poll_interval) {
    clock.sleep_until(next);
    const TtlReading r = read_ttl(resolver, domain);
    // A poll held back past the predicted expiry (rate limiting) may have
    // found the record gone and refreshed it; that says nothing about the server.
    if (r.at >= expiry) return false;
    const double expected = anchor.ttl - (r.at - anchor.at).count();
    if (r.ttl > prev.ttl + tol) {
      throw Error(ErrorCode::ServerPrefetches,
                  fmt::format("{}: TTL reset from {} to {} with {:.1f}s left before expiry", domain.str(), prev.ttl,
                              r.ttl, expected));
    }
    if (r.ttl > expected + tol) {
      throw Error(ErrorCode::NonMonotonicTtl,
                  fmt::format("{}: TTL {} after {:.1f}s, expected about {:.0f}", domain.str(), r.ttl,
                              (r.at - anchor.at).count(), expected));
    }
    prev = r;
    next = std::max(next + config.poll_interval, clock.now());
  }
  return true;
}

MaxTtlEstimate discover_max_ttl(Resolver& resolver, const dns::DomainName& domain, const DiscoveryConfig& config) {
  if (config.required_confirmations <= 0) {
    throw Error(ErrorCode::PreconditionViolation, "required_confirmations must be positive");
  }
  Clock& clock = resolver.clock();
  MaxTtlEstimate est;
  est.server = resolver.server();
  est.domain = domain;
  MaxTtlTally tally(config);

  const int rollovers = config.max_rollovers > 0 ? config.max_rollovers : 4 * config.required_confirmations;
  TtlReading anchor = read_ttl(resolver, domain);
  for (int i = 0; i < rollovers; ++i) {
    watch_countdown(resolver, domain, anchor, config);
    clock.sleep_until(anchor.at + Seconds(anchor.ttl) + config.post_expiry_epsilon);
    anchor = read_ttl(resolver, domain);
    if (tally.add(anchor.ttl)) break;
  }
  tally.fill(est);
  if (!est.confirmed) {
    throw Error(ErrorCode::Unconfirmed, fmt::format("{}: no TTL confirmed {} times in {} rollovers", domain.str(),
                                                    config.required_confirmations, rollovers));
  }
  return est;
}

}  // namespace snoopdns::snoop
