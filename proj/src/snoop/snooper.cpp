#include "snoopdns/snoop/snooper.hpp"

#include <algorithm>
#include <memory>
#include <mutex>

#include <fmt/format.h>

#include "snoopdns/error.hpp"
#include "snoopdns/snoop/probes.hpp"

namespace snoopdns::snoop {

SnoopSummary& SnoopSummary::operator+=(const SnoopSummary& o) {
  cycles += o.cycles;
  events += o.events;
  censored += o.censored;
  faults += o.faults;
  return *this;
}

namespace {

bool ends_domain(ErrorCode code) {
  switch (code) {
    case ErrorCode::ServerPrefetches:
    case ErrorCode::NonMonotonicTtl:
    case ErrorCode::ResolveFailed:
    case ErrorCode::RdNotHonored:
    case ErrorCode::Unconfirmed:
    case ErrorCode::PreconditionViolation:
      return true;
    default:
      return false;
  }
}

/// Bookkeeping shared by the three method loops.
class DomainRun {
 public:
  DomainRun(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan, const ScanSink& sink)
      : resolver_(resolver), domain_(domain), plan_(plan), sink_(sink), start_(resolver.clock().now()) {}

  Clock& clock() { return resolver_.clock(); }

  bool may_continue() const {
    if (plan_.stop && plan_.stop->load()) return false;
    return !plan_.budget.max_cycles || summary_.cycles < *plan_.budget.max_cycles;
  }
  bool within_budget(Seconds t) const { return !plan_.budget.duration || t <= start_ + *plan_.budget.duration; }

  void emit(const RefreshObservation& obs) {
    consecutive_timeouts_ = 0;
    ++summary_.cycles;
    if (obs.event) {
      ++summary_.events;
    } else {
      ++summary_.censored;
    }
    sink_(obs);
  }

  void fault(const Error& e) {
    ++summary_.faults;
    sink_(ProbeFault{resolver_.server(), domain_, plan_.method, clock().now(), e.code(), e.what()});
  }

  /// Reports `e` and decides whether the loop may go on.
  bool handle(const Error& e) {
    fault(e);
    if (e.code() == ErrorCode::Timeout) {
      if (++consecutive_timeouts_ >= plan_.max_consecutive_timeouts) {
        throw Error(ErrorCode::ResolverUnreachable,
                    fmt::format("{}: {} consecutive cycles lost for {}", resolver_.server(),
                                consecutive_timeouts_, domain_.str()));
      }
      return true;
    }
    if (ends_domain(e.code())) {
      summary_.aborted = true;
      summary_.abort_reason = e.code();
      return false;
    }
    return true;
  }

  SnoopSummary& summary() { return summary_; }

 private:
  Resolver& resolver_;
  const dns::DomainName& domain_;
  const SnoopPlan& plan_;
  const ScanSink& sink_;
  Seconds start_;
  SnoopSummary summary_;
  int consecutive_timeouts_ = 0;
};

void snoop_ttl_recursive(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan, DomainRun& run) {
  std::uint32_t max_ttl = plan.max_ttl;
  auto make_runner = [&](std::uint32_t m) {
    return std::make_unique<TtlCycleRunner>(resolver, domain, m, Seconds(plan.window_fraction * m), plan.grace);
  };
  auto runner = make_runner(max_ttl);
  bool watched = !plan.watch_first_expiry;
  int late_watches = 0;
  int rediscoveries = 0;

  while (run.may_continue()) {
    try {
      if (!runner->primed() || !watched) {
        if (!run.within_budget(run.clock().now())) break;
        const TtlReading r = runner->prime();
        if (!watched) {
          // Give up on the watch if contention keeps pushing polls past expiry.
          watched = watch_countdown(resolver, domain, r, plan.discovery) || ++late_watches >= 3;
          if (!watched) continue;
        }
      }
      if (!run.within_budget(runner->next_probe_at())) break;
      run.emit(runner->run_cycle());
    } catch (const Error& e) {
      if (!run.handle(e)) return;
      if (e.code() != ErrorCode::TtlExceedsMax) continue;
      if (++rediscoveries > plan.max_rediscoveries) {
        run.handle(Error(ErrorCode::Unconfirmed,
                         fmt::format("{}: maximum TTL keeps changing; dropped after {} rediscoveries", domain.str(),
                                     plan.max_rediscoveries)));
        return;
      }
      try {
        max_ttl = discover_max_ttl(resolver, domain, plan.discovery).max_ttl;
        runner = make_runner(max_ttl);
      } catch (const Error& inner) {
        if (!run.handle(inner)) return;
      }
    }
  }
}

void snoop_rd0(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan, DomainRun& run) {
  const Seconds interval = plan.rd0_interval.value_or(plan.window() / 2);
  if (!(interval.count() > 0) || interval.count() >= plan.max_ttl) {
    throw Error(ErrorCode::PreconditionViolation,
                fmt::format("RD=0 probe interval {:.1f}s must lie in (0, {})", interval.count(), plan.max_ttl));
  }
  Rd0Prober prober(resolver, domain, plan.max_ttl);
  Seconds next = run.clock().now();
  while (run.may_continue() && run.within_budget(next)) {
    run.clock().sleep_until(next);
    try {
      if (auto obs = prober.probe()) run.emit(*obs);
    } catch (const Error& e) {
      if (!run.handle(e)) return;
    }
    next = std::max(next + interval, run.clock().now());
  }
}

void snoop_timing(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan, DomainRun& run) {
  if (!plan.calibration) throw Error(ErrorCode::PreconditionViolation, "timing method needs a calibration");
  const TimingCalibration& cal = *plan.calibration;
  const Seconds max_ttl(plan.max_ttl);
  const Seconds window = plan.window();
  // Expiry is only known after one of our own probes missed the cache and
  // refreshed the record.
  bool synced = false;
  Seconds expiry{0};
  Seconds resync_at = run.clock().now();

  while (run.may_continue()) {
    try {
      if (!synced) {
        if (!run.within_budget(resync_at)) break;
        run.clock().sleep_until(resync_at);
        const QueryOutcome q = resolver.query(domain, true);
        if (classify_timing(q.rtt_ms, cal) == TimingVerdict::miss) {
          expiry = q.sent_at + max_ttl;
          synced = true;
        } else {
          resync_at = q.sent_at + max_ttl + Seconds{1.0};
        }
        continue;
      }
      const Seconds probe_at = expiry + window;
      if (!run.within_budget(probe_at)) break;
      run.clock().sleep_until(probe_at);
      synced = false;
      const QueryOutcome q = resolver.query(domain, true);
      const TimingVerdict verdict = classify_timing(q.rtt_ms, cal);
      RefreshObservation obs;
      obs.server = resolver.server();
      obs.domain = domain;
      obs.method = Method::timing;
      obs.window_start = expiry;
      obs.window_length = q.sent_at - expiry;
      obs.probe_rtt_ms = q.rtt_ms;
      if (verdict == TimingVerdict::miss) {
        obs.censored = true;
        expiry = q.sent_at + max_ttl;
        synced = true;
        run.emit(obs);
        continue;
      }
      resync_at = q.sent_at + max_ttl + Seconds{1.0};
      if (verdict == TimingVerdict::cached) {
        // Timing only brackets the refresh inside the window; impute the midpoint.
        const Seconds delay = obs.window_length / 2;
        obs.event = RefreshEvent{delay, expiry + delay};
        run.emit(obs);
      }
    } catch (const Error& e) {
      synced = false;
      resync_at = run.clock().now();
      if (!run.handle(e)) return;
    }
  }
}

}  // namespace

SnoopSummary snoop_domain(Resolver& resolver, const dns::DomainName& domain, const SnoopPlan& plan,
                          const ScanSink& sink) {
  if (plan.max_ttl == 0) throw Error(ErrorCode::PreconditionViolation, "snoop_domain needs a confirmed max TTL");
  if (!(plan.window_fraction > 0) || plan.window_fraction > 1) {
    throw Error(ErrorCode::PreconditionViolation, "window_fraction must lie in (0, 1]");
  }
  DomainRun run(resolver, domain, plan, sink);
  if (!run.may_continue() || (plan.budget.duration && plan.budget.duration->count() <= 0)) return run.summary();
  switch (plan.method) {
    case Method::ttl_recursive: snoop_ttl_recursive(resolver, domain, plan, run); break;
    case Method::rd0: snoop_rd0(resolver, domain, plan, run); break;
    case Method::timing: snoop_timing(resolver, domain, plan, run); break;
  }
  return run.summary();
}

ScanTotals run_scan(Clock& clock, const std::string& server_label, const TransportFactory& transports,
                    RateLimiter& limiter, std::span<const ScanTarget> targets, const ScanSink& sink,
                    QueryPolicy policy, std::uint64_t seed) {
  std::mutex sink_mu;
  ScanSink locked = [&](const ScanEvent& ev) {
    std::lock_guard lk(sink_mu);
    sink(ev);
  };
  std::atomic<bool> stop{false};
  std::vector<std::unique_ptr<Transport>> links;
  std::vector<std::unique_ptr<Resolver>> resolvers;
  std::vector<SnoopSummary> summaries(targets.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    links.push_back(transports());
    resolvers.push_back(std::make_unique<Resolver>(server_label, *links.back(), clock, &limiter, policy,
                                                   seed * 1000003u + i));
    tasks.emplace_back([&, i] {
      SnoopPlan plan = targets[i].plan;
      plan.stop = &stop;
      try {
        summaries[i] = snoop_domain(*resolvers[i], targets[i].domain, plan, locked);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ResolverUnreachable) stop = true;
        throw;
      }
    });
  }
  clock.run_tasks(std::move(tasks));

  ScanTotals totals;
  for (const auto& s : summaries) totals.summary += s;
  for (const auto& r : resolvers) totals.queries_sent += r->queries_sent();
  return totals;
}

std::vector<DiscoveryOutcome> discover_many(Clock& clock, const std::string& server_label,
                                            const TransportFactory& transports, RateLimiter& limiter,
                                            std::span<const dns::DomainName> domains, const DiscoveryConfig& config,
                                            std::size_t workers, QueryPolicy policy, std::uint64_t seed) {
  std::vector<DiscoveryOutcome> out(domains.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(domains.size(), 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::unique_ptr<Transport>> links;
  std::vector<std::unique_ptr<Resolver>> resolvers;
  std::vector<std::function<void()>> tasks;
  for (std::size_t w = 0; w < workers && w < domains.size(); ++w) {
    links.push_back(transports());
    resolvers.push_back(
        std::make_unique<Resolver>(server_label, *links.back(), clock, &limiter, policy, seed * 7919u + w));
    tasks.emplace_back([&, w] {
      for (std::size_t i = next++; i < domains.size(); i = next++) {
        out[i].domain = domains[i];
        try {
          out[i].estimate = discover_max_ttl(*resolvers[w], domains[i], config);
        } catch (const Error& e) {
          out[i].error = e.code();
          out[i].detail = e.what();
        }
      }
    });
  }
  clock.run_tasks(std::move(tasks));
  return out;
}

}  // namespace snoopdns::snoop
