#include "snoopdns/snoop/probes.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::snoop {

namespace {

// A probe later than this past max_ttl may be reading a second refresh.
constexpr double kLateProbeSlack = 0.5;

}  // namespace

Seconds default_grace(std::uint32_t max_ttl) { return Seconds(std::max(2.0, 0.01 * max_ttl)); }

RefreshObservation evaluate_ttl_cycle(const std::string& server, const dns::DomainName& domain,
                                      std::uint32_t max_ttl, Seconds expiry, Seconds probe_time,
                                      std::uint32_t reading, Seconds grace, double rtt_ms) {
  const Seconds window = probe_time - expiry;
  if (!(window.count() > 0)) {
    throw Error(ErrorCode::PreconditionViolation,
                fmt::format("{}: probe at {:.3f} is not after expiry {:.3f}", domain.str(), probe_time.count(),
                            expiry.count()));
  }
  const double m = max_ttl;
  if (reading > m + grace.count()) {
    throw Error(ErrorCode::TtlExceedsMax,
                fmt::format("{}: read TTL {} above confirmed maximum {}", domain.str(), reading, max_ttl));
  }
  RefreshObservation obs;
  obs.server = server;
  obs.domain = domain;
  obs.method = Method::ttl_recursive;
  obs.window_start = expiry;
  obs.window_length = window;
  obs.probe_rtt_ms = rtt_ms;
  if (reading >= m - grace.count()) {
    obs.censored = true;
    return obs;
  }
  const Seconds refreshed_at = probe_time - Seconds(m - reading);
  Seconds delay = refreshed_at - expiry;
  if (delay < -grace) {
    throw Error(ErrorCode::NonMonotonicTtl,
                fmt::format("{}: TTL {} dates a refresh {:.1f}s before the record expired", domain.str(), reading,
                            -delay.count()));
  }
  delay = std::clamp(delay, Seconds{0}, window);
  obs.event = RefreshEvent{delay, expiry + delay};
  return obs;
}

TtlCycleRunner::TtlCycleRunner(Resolver& resolver, dns::DomainName domain, std::uint32_t max_ttl, Seconds window,
                               std::optional<Seconds> grace)
    : resolver_(resolver),
      domain_(std::move(domain)),
      max_ttl_(max_ttl),
      window_(window),
      grace_(grace.value_or(default_grace(max_ttl))) {
  if (max_ttl == 0 || !(window.count() > 0) || window.count() > max_ttl) {
    throw Error(ErrorCode::PreconditionViolation,
                fmt::format("window {:.1f}s must lie in (0, {}]", window.count(), max_ttl));
  }
}

TtlReading TtlCycleRunner::prime() {
  expiry_.reset();
  TtlReading r = read_ttl(resolver_, domain_);
  expiry_ = r.at + Seconds(r.ttl);
  return r;
}

RefreshObservation TtlCycleRunner::run_cycle() {
  if (!expiry_) prime();
  const Seconds expiry = *expiry_;
  resolver_.clock().sleep_until(expiry + window_);
  expiry_.reset();
  const TtlReading r = read_ttl(resolver_, domain_);
  expiry_ = r.at + Seconds(r.ttl);
  if ((r.at - expiry).count() > max_ttl_ + kLateProbeSlack) {
    throw Error(ErrorCode::LateProbe, fmt::format("{}: probe {:.1f}s after expiry exceeds max TTL {}", domain_.str(),
                                                  (r.at - expiry).count(), max_ttl_));
  }
  return evaluate_ttl_cycle(resolver_.server(), domain_, max_ttl_, expiry, r.at, r.ttl, grace_, r.rtt_ms);
}

RefreshObservation run_cycle_ttl_recursive(Resolver& resolver, const dns::DomainName& domain,
                                           std::uint32_t max_ttl, Seconds window) {
  TtlCycleRunner runner(resolver, domain, max_ttl, window);
  runner.prime();
  return runner.run_cycle();
}

Rd0Prober::Rd0Prober(Resolver& resolver, dns::DomainName domain, std::uint32_t max_ttl, Seconds dedup_epsilon)
    : resolver_(resolver), domain_(std::move(domain)), max_ttl_(max_ttl), dedup_epsilon_(dedup_epsilon) {
  if (max_ttl == 0) throw Error(ErrorCode::PreconditionViolation, "max_ttl must be positive");
}

std::optional<RefreshObservation> Rd0Prober::probe() {
  const QueryOutcome q = resolver_.query(domain_, false);
  if (q.response.truncated) throw Error(ErrorCode::Truncated, fmt::format("{}: truncated response", domain_.str()));
  const Seconds p = q.sent_at;
  last_probe_ = p;

  RefreshObservation obs;
  obs.server = resolver_.server();
  obs.domain = domain_;
  obs.method = Method::rd0;
  obs.probe_rtt_ms = q.rtt_ms;

  std::optional<Seconds> from = watched_from_;
  if (!from && last_refresh_) from = *last_refresh_ + Seconds(max_ttl_);

  const auto ttl = dns::min_answer_ttl(q.response, domain_);
  if (!ttl) {
    watched_from_ = p;
    if (!from || p <= *from) return std::nullopt;
    obs.window_start = *from;
    obs.window_length = p - *from;
    obs.censored = true;
    return obs;
  }

  if (*ttl > max_ttl_ + default_grace(max_ttl_).count()) {
    throw Error(ErrorCode::TtlExceedsMax,
                fmt::format("{}: read TTL {} above confirmed maximum {}", domain_.str(), *ttl, max_ttl_));
  }
  const Seconds refreshed_at = p - Seconds(static_cast<double>(max_ttl_) - *ttl);
  if (last_refresh_ && std::abs((refreshed_at - *last_refresh_).count()) <= dedup_epsilon_.count()) {
    return std::nullopt;
  }

  const bool was_watching = watched_from_.has_value();
  // A fetch our own probe triggered reads back the full max TTL; a client
  // refresh even a second earlier has already counted down.
  const bool at_probe = (p - refreshed_at).count() < 0.5;
  last_refresh_ = refreshed_at;
  watched_from_.reset();

  refreshes_at_probe_ = (was_watching && at_probe) ? refreshes_at_probe_ + 1 : 0;
  if (refreshes_at_probe_ >= 3) {
    throw Error(ErrorCode::RdNotHonored,
                fmt::format("{}: three refreshes in a row coincide with our RD=0 probes", domain_.str()));
  }

  if (!from) return std::nullopt;
  if (refreshed_at < *from - dedup_epsilon_) {
    throw Error(ErrorCode::NonMonotonicTtl,
                fmt::format("{}: refresh dated {:.1f}s before the previous record could expire", domain_.str(),
                            (*from - refreshed_at).count()));
  }
  if (p <= *from) return std::nullopt;
  const Seconds window = p - *from;
  const Seconds delay = std::clamp(refreshed_at - *from, Seconds{0}, window);
  obs.window_start = *from;
  obs.window_length = window;
  obs.event = RefreshEvent{delay, *from + delay};
  return obs;
}

RdBehavior check_rd_behavior(Resolver& resolver, std::span<const dns::DomainName> canaries) {
  if (canaries.empty()) throw Error(ErrorCode::PreconditionViolation, "no canary domains");
  RdBehavior b;
  b.server = resolver.server();
  bool answered = false;
  bool recursed = false;
  for (const auto& canary : canaries) {
    RdEvidence ev;
    ev.query = canary;
    try {
      const QueryOutcome q = resolver.query(canary, false);
      ev.rcode = q.response.rcode;
      ev.answers = q.response.answers.size();
      ev.rtt_ms = q.rtt_ms;
      answered = true;
      recursed = recursed || ev.answers > 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Timeout) throw;
      ev.timed_out = true;
    }
    b.evidence.push_back(std::move(ev));
  }
  if (!answered) {
    throw RdCheckTimeout(b, fmt::format("{}: no reply to any of {} canaries", b.server, canaries.size()));
  }
  b.honors_rd0 = !recursed;
  return b;
}

std::vector<dns::DomainName> make_canaries(const dns::DomainName& zone, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<dns::DomainName> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(zone.prepend(fmt::format("c{:016x}-{}", rng(), i)));
  }
  return out;
}

}  // namespace snoopdns::snoop
