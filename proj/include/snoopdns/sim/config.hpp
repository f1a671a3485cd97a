#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snoopdns/clock.hpp"
#include "snoopdns/dns/name.hpp"
#include "snoopdns/snoop/observation.hpp"

namespace snoopdns::sim {

/// A served record. A name whose first label is "*" answers for every name
/// below its parent.
struct Zone {
  dns::DomainName name;
  std::uint32_t ipv4 = 0xc0000201;  // 192.0.2.1
  std::uint32_t authoritative_ttl = 300;
};

enum class RdPolicy { honor, ignore };

struct TtlPolicy {
  /// Cache every record for this long regardless of the authoritative TTL.
  std::optional<std::uint32_t> override_max;
};

/// Refresh on any query that finds the record's remaining lifetime inside
/// [remaining_low, remaining_high] seconds.
struct PreRefresh {
  double remaining_low = 3;
  double remaining_high = 5;
};

enum class ProcessKind { none, poisson, periodic };

struct ClientPopulation {
  dns::DomainName domain;
  ProcessKind process = ProcessKind::none;
  /// Arrivals per second for poisson.
  double lambda = 0;
  /// Spacing for periodic; the first arrival is at `phase`.
  double interval = 0;
  double phase = 0;
  std::string label;

  /// Long-run arrival rate.
  double true_rate() const;
};

/// Gaussian RTTs in milliseconds, floored at 0.1 ms. A recursive lookup
/// costs a cached draw plus a recursion draw.
struct RttModel {
  double cached_mean = 5;
  double cached_jitter = 1;
  double recursion_extra_mean = 50;
  double recursion_jitter = 5;
};

enum class ClockMode { virtual_time, realtime };

struct SimConfig {
  std::vector<Zone> zones;
  RdPolicy rd_policy = RdPolicy::honor;
  TtlPolicy ttl_policy;
  std::optional<PreRefresh> anomaly;
  std::vector<ClientPopulation> clients;
  RttModel rtt_model;
  std::uint64_t seed = 1;
  ClockMode clock_mode = ClockMode::virtual_time;

  /// Throws Error{ConfigError} naming the first violated constraint.
  void validate() const;
};

/// Virtual scan run against the simulator from a scenario file.
struct BatchConfig {
  snoop::Method method = snoop::Method::ttl_recursive;
  double window_fraction = 1.0;
  Seconds duration{48 * 3600.0};
  double rate = 10;
  double confidence = 0.95;
  int confirmations = 5;
  /// Discover max TTLs first; otherwise trust the configured ones.
  bool discover = true;
  int calibration_samples = 50;
};

struct Scenario {
  SimConfig sim;
  BatchConfig batch;
  /// Listen address for realtime scenarios.
  std::string bind = "127.0.0.1:5353";
};

/// Throws Error{ConfigError}; JSON syntax errors carry the byte position.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

std::uint32_t parse_ipv4(std::string_view text);
std::string format_ipv4(std::uint32_t addr);

}  // namespace snoopdns::sim
