#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snoopdns/snoop/observation.hpp"
#include "snoopdns/stats/estimate.hpp"

namespace snoopdns::stats {

struct Report {
  std::vector<ArrivalEstimate> rows;
  std::size_t domains = 0;
  std::size_t skipped_records = 0;
};

/// aggregate -> estimate -> rank. Throws Error{EmptyLog} when no usable
/// observation is present.
Report build_report(std::span<const snoop::RefreshObservation> observations, std::optional<std::size_t> top_n,
                    double confidence = 0.95);

/// rank,domain,lambda_per_s,ci_half_width,mean_refresh_period_s,events,observed_seconds,cycles
std::string to_csv(std::span<const ArrivalEstimate> rows);
/// Column-aligned rendering of the same rows.
std::string to_table(std::span<const ArrivalEstimate> rows);

}  // namespace snoopdns::stats
