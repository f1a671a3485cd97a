#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "snoopdns/clock.hpp"
#include "snoopdns/dns/wire.hpp"
#include "snoopdns/sim/config.hpp"

namespace snoopdns::sim {

enum class EventKind { client_query, cache_refresh, probe_query, expiry };
/// What made the resolver fetch a record.
enum class RefreshCause { client, probe, anomaly };

std::string_view to_string(EventKind k);
std::string_view to_string(RefreshCause c);

struct SimEvent {
  Seconds at{0};
  EventKind kind = EventKind::client_query;
  dns::DomainName domain;
  std::optional<RefreshCause> cause;
  /// RD bit of probe queries.
  std::optional<bool> recursion_desired;

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct SimAnswer {
  dns::DnsResponse response;
  double rtt_ms = 0;
};

/// Authoritative data, one caching resolver and its client populations.
/// Client arrivals are generated lazily up to the time of each query, so the
/// same object serves virtual-time tests and the realtime UDP endpoint.
/// All public members are thread-safe.
class Sim {
 public:
  /// Throws Error{ConfigError}.
  explicit Sim(SimConfig config);

  const SimConfig& config() const { return config_; }
  Seconds now() const;

  /// Resolver behaviour for one query arriving at `at`. Throws
  /// Error{PreconditionViolation} when `at` lies before the current time.
  SimAnswer handle_query(const dns::DnsQuery& query, Seconds at);
  /// Wire-level wrapper; malformed packets are dropped (nullopt).
  std::optional<std::pair<dns::Bytes, double>> handle_packet(std::span<const std::uint8_t> packet, Seconds at);

  /// Moves time forward, applying client arrivals; returns the new entries.
  std::vector<SimEvent> advance(Seconds duration);

  std::vector<SimEvent> log() const;
  void write_log_jsonl(std::ostream& out) const;

  /// TTL the resolver caches `name` for; nullopt for unknown names.
  std::optional<std::uint32_t> max_ttl_for(const dns::DomainName& name) const;
  /// Long-run client arrival rate aimed at `name`.
  double true_rate(const dns::DomainName& name) const;

 private:
  struct Entry {
    Seconds refreshed{0};
    Seconds expires{0};
  };
  struct Population {
    ClientPopulation client;
    std::mt19937_64 rng;
    std::optional<Seconds> next;
  };

  const Zone* find_zone(const dns::DomainName& name) const;
  std::uint32_t cache_ttl(const Zone& zone) const;
  void run_until(Seconds t);
  void client_arrival(Population& p);
  void refresh(const dns::DomainName& name, const Zone& zone, Seconds at, RefreshCause cause);
  bool in_prefetch_band(const Entry& e, Seconds at) const;
  void schedule_next(Population& p);
  double draw_cached();
  double draw_recursion();

  mutable std::mutex mu_;
  SimConfig config_;
  std::map<dns::DomainName, Zone> zones_;
  std::map<dns::DomainName, Entry> cache_;
  std::vector<Population> populations_;
  std::mt19937_64 rtt_rng_;
  std::normal_distribution<double> unit_;
  Seconds now_{0};
  std::vector<SimEvent> log_;
};

void write_event_jsonl(std::ostream& out, const SimEvent& e);

}  // namespace snoopdns::sim
