#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "snoopdns/clock.hpp"
#include "snoopdns/dns/name.hpp"
#include "snoopdns/snoop/observation.hpp"

namespace snoopdns::stats {

/// Exposure bookkeeping for one domain: t first-refresh events seen over o
/// seconds of watched time.
struct DomainStats {
  dns::DomainName domain;
  std::uint64_t t = 0;
  double o = 0;
  std::uint64_t cycles = 0;
  std::optional<Seconds> first_seen;
  std::optional<Seconds> last_seen;

  void add(const snoop::RefreshObservation& obs);
  /// Associative and commutative; domains must match.
  DomainStats& merge(const DomainStats& other);

  friend bool operator==(const DomainStats&, const DomainStats&) = default;
};

using StatsMap = std::map<dns::DomainName, DomainStats>;

struct Aggregate {
  StatsMap domains;
  std::size_t skipped = 0;
};

/// Records that break the observation invariants are skipped and counted.
Aggregate aggregate(std::span<const snoop::RefreshObservation> observations);

/// Folds `shard` into `into`.
void merge_into(StatsMap& into, const StatsMap& shard);

struct ArrivalEstimate {
  dns::DomainName domain;
  double lambda_hat = 0;
  double ci_half_width = 0;
  /// o / t; absent when no event was seen.
  std::optional<double> mean_refresh_period;
  std::size_t rank = 0;
  std::uint64_t events = 0;
  double observed_seconds = 0;
  std::uint64_t cycles = 0;
};

/// Two-sided normal multiplier; exactly 1.96 at 0.95. Throws
/// Error{DomainError} outside (0, 1).
double z_for_confidence(double confidence);

/// lambda_hat = t/o, half-width z*sqrt(lambda_hat/o). Throws
/// Error{NoObservation} when o = 0.
ArrivalEstimate estimate(const DomainStats& stats, double confidence = 0.95);

/// Probability of x arrivals at mean lambda, evaluated in log space.
/// Throws Error{DomainError} for negative or non-finite lambda.
double poisson_pmf(double lambda, std::int64_t x);

/// Sorts by lambda_hat descending, then larger observed time, then name;
/// assigns 1-based ranks and keeps the first top_n when given.
std::vector<ArrivalEstimate> rank_domains(std::vector<ArrivalEstimate> estimates,
                                          std::optional<std::size_t> top_n = std::nullopt);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace snoopdns::stats
