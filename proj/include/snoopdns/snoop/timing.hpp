#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::snoop {

struct TimingConfig {
  /// Calibration fails below this fraction of correctly separated samples.
  double min_separation = 0.95;
  /// Half-width of the abstain band, as a fraction of the median gap.
  double guard_fraction = 0.25;
  /// Zone whose unique subdomains are used for cache misses; defaults to the
  /// calibration domain itself.
  std::optional<dns::DomainName> miss_zone;
  std::uint64_t seed = 1;
};

struct TimingCalibration {
  std::string server;
  std::vector<double> cached_rtt_samples;
  std::vector<double> miss_rtt_samples;
  double cached_median_ms = 0;
  double miss_median_ms = 0;
  double threshold_ms = 0;
  double guard_ms = 0;
  double separation_quality = 0;
};

enum class TimingVerdict { cached, miss, abstain };

std::string_view to_string(TimingVerdict v);

double median(std::vector<double> values);

/// Builds a calibration from labelled RTT samples: threshold at the midpoint
/// of the two medians, quality as the fraction of samples on their own side.
TimingCalibration calibration_from_samples(std::string server, std::vector<double> cached_ms,
                                           std::vector<double> miss_ms, double guard_fraction);

/// Measures `samples` cached RTTs (repeat queries inside one TTL lifetime) and
/// `samples` miss RTTs (unique never-cached names), as one serialized burst.
/// Throws Error{PreconditionViolation} for samples < 20 and
/// Error{InsufficientSeparation} below config.min_separation.
TimingCalibration calibrate_timing(Resolver& resolver, const dns::DomainName& calibration_domain, int samples,
                                   const TimingConfig& config = {});

TimingVerdict classify_timing(double rtt_ms, const TimingCalibration& calibration);

}  // namespace snoopdns::snoop
