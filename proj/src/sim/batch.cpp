#include "snoopdns/sim/batch.hpp"

#include <cmath>

#include <fmt/format.h>

#include "snoopdns/error.hpp"
#include "snoopdns/sim/endpoint.hpp"
#include "snoopdns/sim/sim.hpp"
#include "snoopdns/snoop/timing.hpp"

namespace snoopdns::sim {

BatchResult run_batch(const SimConfig& config, const BatchConfig& batch, const snoop::ScanSink& sink) {
  VirtualClock clock;
  Sim sim(config);
  snoop::RateLimiter limiter(batch.rate);
  const std::string server = "simnet";
  auto transports = [&] { return std::make_unique<SimTransport>(sim, clock); };

  BatchResult result;
  for (const auto& z : config.zones) {
    if (z.name.labels().empty() || z.name.labels().front() == "*") continue;
    BatchRow row;
    row.domain = z.name;
    row.true_lambda = sim.true_rate(z.name);
    row.max_ttl = *sim.max_ttl_for(z.name);
    result.rows.push_back(std::move(row));
  }

  snoop::DiscoveryConfig discovery;
  discovery.required_confirmations = batch.confirmations;
  if (batch.discover) {
    std::vector<dns::DomainName> names;
    for (const auto& row : result.rows) names.push_back(row.domain);
    const auto found = snoop::discover_many(clock, server, transports, limiter, names, discovery, names.size(), {},
                                            config.seed);
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (found[i].estimate) {
        result.rows[i].max_ttl = found[i].estimate->max_ttl;
      } else {
        result.rows[i].failure = found[i].error;
      }
    }
  }

  std::optional<snoop::TimingCalibration> calibration;
  if (batch.method == snoop::Method::timing) {
    if (result.rows.empty()) throw Error(ErrorCode::PreconditionViolation, "timing batch needs at least one zone");
    auto link = transports();
    snoop::Resolver r(server, *link, clock, &limiter, {}, config.seed);
    snoop::TimingConfig tc;
    tc.seed = config.seed;
    calibration = snoop::calibrate_timing(r, result.rows.front().domain, batch.calibration_samples, tc);
  }

  std::vector<snoop::ScanTarget> targets;
  for (const auto& row : result.rows) {
    if (row.failure) continue;
    snoop::ScanTarget t{row.domain, {}};
    t.plan.method = batch.method;
    t.plan.max_ttl = row.max_ttl;
    t.plan.window_fraction = batch.window_fraction;
    t.plan.discovery = discovery;
    t.plan.calibration = calibration;
    t.plan.budget.duration = batch.duration;
    targets.push_back(std::move(t));
  }

  snoop::ScanSink collect = [&](const snoop::ScanEvent& ev) {
    if (const auto* obs = std::get_if<snoop::RefreshObservation>(&ev)) {
      result.observations.push_back(*obs);
    } else {
      result.faults.push_back(std::get<snoop::ProbeFault>(ev));
    }
    if (sink) sink(ev);
  };
  result.totals = snoop::run_scan(clock, server, transports, limiter, targets, collect, {}, config.seed);

  const stats::Aggregate agg = stats::aggregate(result.observations);
  std::vector<double> truth;
  std::vector<double> estimated;
  std::size_t covered = 0;
  for (auto& row : result.rows) {
    auto it = agg.domains.find(row.domain);
    if (it == agg.domains.end() || !(it->second.o > 0)) {
      if (!row.failure) row.failure = ErrorCode::NoObservation;
      continue;
    }
    row.estimate = stats::estimate(it->second, batch.confidence);
    row.covered = std::abs(row.estimate->lambda_hat - row.true_lambda) <= row.estimate->ci_half_width;
    covered += row.covered;
    truth.push_back(row.true_lambda);
    estimated.push_back(row.estimate->lambda_hat);
  }
  if (!truth.empty()) result.coverage = static_cast<double>(covered) / static_cast<double>(truth.size());
  if (truth.size() >= 2) result.spearman = stats::spearman(truth, estimated);
  return result;
}

std::string format_batch(const BatchResult& result) {
  std::size_t width = 6;
  for (const auto& row : result.rows) width = std::max(width, row.domain.str().size());
  std::string out = fmt::format("{:<{}}  {:>7}  {:>12}  {:>12}  {:>12}  {:>7}  {}\n", "domain", width, "max_ttl",
                                "true_lambda", "lambda_hat", "ci_half", "events", "covered");
  for (const auto& row : result.rows) {
    if (row.estimate) {
      out += fmt::format("{:<{}}  {:>7}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {:>7}  {}\n", row.domain.str(), width,
                         row.max_ttl, row.true_lambda, row.estimate->lambda_hat, row.estimate->ci_half_width,
                         row.estimate->events, row.covered ? "yes" : "no");
    } else {
      out += fmt::format("{:<{}}  {:>7}  {:>12.4e}  {:>12}  {:>12}  {:>7}  {}\n", row.domain.str(), width,
                         row.max_ttl, row.true_lambda, "-", "-", "-",
                         row.failure ? to_string(*row.failure) : std::string_view("-"));
    }
  }
  out += fmt::format("coverage {:.1f}%", 100 * result.coverage);
  if (result.spearman) out += fmt::format("  spearman {:.4f}", *result.spearman);
  out += fmt::format("  queries {}  cycles {}  events {}  censored {}  faults {}\n", result.totals.queries_sent,
                     result.totals.summary.cycles, result.totals.summary.events, result.totals.summary.censored,
                     result.totals.summary.faults);
  return out;
}

}  // namespace snoopdns::sim
