#include "snoopdns/snoop/timing.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "snoopdns/error.hpp"
#include "snoopdns/snoop/probes.hpp"

namespace snoopdns::snoop {

std::string_view to_string(TimingVerdict v) {
  switch (v) {
    case TimingVerdict::cached: return "cached";
    case TimingVerdict::miss: return "miss";
    case TimingVerdict::abstain: return "abstain";
  }
  return "abstain";
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid))) / 2;
  }
  return m;
}

TimingCalibration calibration_from_samples(std::string server, std::vector<double> cached_ms,
                                           std::vector<double> miss_ms, double guard_fraction) {
  TimingCalibration cal;
  cal.server = std::move(server);
  cal.cached_median_ms = median(cached_ms);
  cal.miss_median_ms = median(miss_ms);
  cal.threshold_ms = (cal.cached_median_ms + cal.miss_median_ms) / 2;
  const double gap = cal.miss_median_ms - cal.cached_median_ms;
  cal.guard_ms = gap > 0 ? guard_fraction * gap : 0;
  std::size_t correct = 0;
  if (gap > 0) {
    correct += std::count_if(cached_ms.begin(), cached_ms.end(), [&](double v) { return v < cal.threshold_ms; });
    correct += std::count_if(miss_ms.begin(), miss_ms.end(), [&](double v) { return v > cal.threshold_ms; });
  }
  const std::size_t total = cached_ms.size() + miss_ms.size();
  cal.separation_quality = total ? static_cast<double>(correct) / static_cast<double>(total) : 0;
  cal.cached_rtt_samples = std::move(cached_ms);
  cal.miss_rtt_samples = std::move(miss_ms);
  return cal;
}

TimingCalibration calibrate_timing(Resolver& resolver, const dns::DomainName& calibration_domain, int samples,
                                   const TimingConfig& config) {
  if (samples < 20) {
    throw Error(ErrorCode::PreconditionViolation, fmt::format("calibration needs >= 20 samples, got {}", samples));
  }
  std::vector<double> cached;
  std::vector<double> miss;
  cached.reserve(samples);
  miss.reserve(samples);

  // Prime, then keep only replies whose TTL kept counting down: a reading that
  // went back up means that query refreshed the record and was a miss.
  TtlReading prev = read_ttl(resolver, calibration_domain);
  int guard = 0;
  while (static_cast<int>(cached.size()) < samples) {
    if (++guard > samples * 10) {
      throw Error(ErrorCode::PreconditionViolation,
                  fmt::format("{}: record would not stay cached long enough to sample", calibration_domain.str()));
    }
    const TtlReading r = read_ttl(resolver, calibration_domain);
    if (r.ttl <= prev.ttl) cached.push_back(r.rtt_ms);
    prev = r;
  }

  const dns::DomainName zone = config.miss_zone.value_or(calibration_domain);
  for (const auto& name : make_canaries(zone, static_cast<std::size_t>(samples), config.seed)) {
    miss.push_back(resolver.query(name, true).rtt_ms);
  }

  TimingCalibration cal =
      calibration_from_samples(resolver.server(), std::move(cached), std::move(miss), config.guard_fraction);
  if (cal.separation_quality < config.min_separation) {
    throw Error(ErrorCode::InsufficientSeparation,
                fmt::format("{}: cached/miss RTTs separate only {:.1f}% of samples (cached median {:.2f} ms, miss "
                            "median {:.2f} ms)",
                            resolver.server(), 100 * cal.separation_quality, cal.cached_median_ms,
                            cal.miss_median_ms));
  }
  return cal;
}

TimingVerdict classify_timing(double rtt_ms, const TimingCalibration& calibration) {
  if (rtt_ms < calibration.threshold_ms - calibration.guard_ms) return TimingVerdict::cached;
  if (rtt_ms > calibration.threshold_ms + calibration.guard_ms) return TimingVerdict::miss;
  return TimingVerdict::abstain;
}

}  // namespace snoopdns::snoop
