#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snoopdns/sim/config.hpp"
#include "snoopdns/snoop/discovery.hpp"
#include "snoopdns/snoop/snooper.hpp"
#include "snoopdns/stats/estimate.hpp"

namespace snoopdns::sim {

struct BatchRow {
  dns::DomainName domain;
  double true_lambda = 0;
  std::uint32_t max_ttl = 0;
  std::optional<stats::ArrivalEstimate> estimate;
  /// True lambda lies inside lambda_hat +/- b.
  bool covered = false;
  /// Why the domain produced no estimate, if it did not.
  std::optional<ErrorCode> failure;
};

struct BatchResult {
  std::vector<BatchRow> rows;
  /// Rank correlation of estimated against true rates; nullopt below two
  /// estimated domains.
  std::optional<double> spearman;
  /// Fraction of estimated domains whose interval covers the true rate.
  double coverage = 0;
  snoop::ScanTotals totals;
  std::vector<snoop::RefreshObservation> observations;
  std::vector<snoop::ProbeFault> faults;
};

/// Full virtual scan of every non-wildcard zone: max-TTL discovery (or the
/// configured TTLs), optional timing calibration, then snooping for
/// batch.duration. `sink`, when set, also receives every scan event.
BatchResult run_batch(const SimConfig& config, const BatchConfig& batch, const snoop::ScanSink& sink = {});

/// Estimated-vs-true table with per-domain coverage flags.
std::string format_batch(const BatchResult& result);

}  // namespace snoopdns::sim
