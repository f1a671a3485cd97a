#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "snoopdns/corpus/liveness.hpp"
#include "snoopdns/corpus/observation_log.hpp"
#include "snoopdns/corpus/ttl_cache.hpp"
#include "snoopdns/error.hpp"
#include "snoopdns/sim/batch.hpp"
#include "snoopdns/sim/endpoint.hpp"
#include "snoopdns/sim/sim.hpp"
#include "snoopdns/snoop/probes.hpp"
#include "snoopdns/snoop/snooper.hpp"
#include "snoopdns/stats/report.hpp"

namespace snoopdns::cli {

namespace {

/// Where queries go: a live server over UDP or an in-process simulator.
struct Backend {
  std::unique_ptr<Clock> clock;
  std::unique_ptr<sim::Sim> sim;
  std::string label;
  snoop::TransportFactory transports;
};

Backend connect(const ScanConfig& config) {
  Backend b;
  if (config.scenario) {
    sim::Scenario sc = sim::load_scenario(*config.scenario);
    if (config.seed) sc.sim.seed = *config.seed;
    if (sc.sim.clock_mode == sim::ClockMode::realtime) {
      b.clock = std::make_unique<SteadyClock>();
    } else {
      b.clock = std::make_unique<VirtualClock>();
    }
    b.sim = std::make_unique<sim::Sim>(sc.sim);
    b.label = "simnet";
    b.transports = [s = b.sim.get(), c = b.clock.get()] { return std::make_unique<sim::SimTransport>(*s, *c); };
    return b;
  }
  const snoop::Endpoint server = snoop::Endpoint::parse(config.server);
  if (!server.is_loopback() && !config.authorized) {
    throw UsageError(fmt::format(
        "refusing to probe {}: scanning a resolver you do not operate needs --authorized, given only with the "
        "operator's permission",
        server.str()));
  }
  b.clock = std::make_unique<SteadyClock>();
  b.label = server.str();
  b.transports = [server] { return std::make_unique<snoop::UdpTransport>(server); };
  return b;
}

std::uint64_t seed_of(const ScanConfig& config) { return config.seed.value_or(1); }

corpus::DomainList load_list(const ScanConfig& config, const std::filesystem::path& path, std::ostream& err) {
  corpus::DomainList list = corpus::load_domain_list(path, config.list_format());
  if (list.invalid > 0) {
    fmt::print(err, "warning: skipped {} unusable names in {}", list.invalid, path.string());
    if (!list.invalid_samples.empty()) fmt::print(err, " (e.g. {})", list.invalid_samples.front());
    fmt::print(err, "\n");
  }
  return list;
}

std::vector<dns::DomainName> names_of(const corpus::DomainList& list) {
  std::vector<dns::DomainName> out;
  out.reserve(list.size());
  for (const auto& e : list.entries) out.push_back(e.domain);
  return out;
}

/// Drops dead domains and, given a reserve list, refills from it up to the
/// original size.
corpus::DomainList filter_live(const ScanConfig& config, Backend& backend, snoop::RateLimiter& limiter,
                               const corpus::DomainList& list, std::ostream& err) {
  auto link = backend.transports();
  snoop::Resolver resolver(backend.label, *link, *backend.clock, &limiter, {}, seed_of(config));
  corpus::LivenessResult split = corpus::liveness_filter(list, resolver);
  fmt::print(err, "liveness: {} live, {} dead\n", split.live.size(), split.dead.size());
  if (!config.reserve || split.dead.size() == 0) return split.live;

  const corpus::DomainList reserve = load_list(config, *config.reserve, err);
  std::size_t next = 0;
  std::size_t added = 0;
  while (split.live.size() < list.size() && next < reserve.size()) {
    corpus::DomainList batch;
    while (batch.size() < list.size() - split.live.size() && next < reserve.size()) {
      const auto& candidate = reserve.entries[next++];
      bool known = std::any_of(list.entries.begin(), list.entries.end(),
                               [&](const auto& e) { return e.domain == candidate.domain; });
      if (!known) batch.add(candidate);
    }
    if (batch.size() == 0) break;
    for (auto& e : corpus::liveness_filter(batch, resolver).live.entries) added += split.live.add(std::move(e));
  }
  fmt::print(err, "liveness: topped up {} domains from {}\n", added, config.reserve->string());
  return split.live;
}

snoop::DiscoveryConfig discovery_config(const ScanConfig& config) {
  snoop::DiscoveryConfig d;
  d.required_confirmations = config.confirmations;
  return d;
}

std::vector<snoop::DiscoveryOutcome> discover(const ScanConfig& config, Backend& backend, snoop::RateLimiter& limiter,
                                              std::span<const dns::DomainName> names) {
  return snoop::discover_many(*backend.clock, backend.label, backend.transports, limiter, names,
                              discovery_config(config), pool_size(config.rate, names.size()), {}, seed_of(config));
}

void merge_ttl_cache(const std::filesystem::path& path, const corpus::TtlCache& previous,
                     std::span<const snoop::DiscoveryOutcome> found) {
  corpus::TtlCache merged = previous;
  for (const auto& f : found) {
    if (f.estimate) merged[f.domain] = *f.estimate;
  }
  std::vector<snoop::MaxTtlEstimate> all;
  for (const auto& [_, e] : merged) all.push_back(e);
  corpus::save_ttl_cache(path, all);
}

std::string discovery_table(std::span<const snoop::DiscoveryOutcome> rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.domain.str().size());
  std::string out = fmt::format("{:<{}}  {:>7}  {:>13}  {:>7}  {}\n", "domain", width, "max_ttl", "confirmations",
                                "snapped", "status");
  for (const auto& r : rows) {
    if (r.estimate) {
      out += fmt::format("{:<{}}  {:>7}  {:>13}  {:>7}  ok\n", r.domain.str(), width, r.estimate->max_ttl,
                         r.estimate->confirmations, r.estimate->snapped_to_grid ? "yes" : "no");
    } else {
      out += fmt::format("{:<{}}  {:>7}  {:>13}  {:>7}  {}\n", r.domain.str(), width, "-", "-", "-", r.detail);
    }
  }
  return out;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

}  // namespace

int cmd_discover_ttl(const ScanConfig& config, std::ostream& out, std::ostream& err) {
  Backend backend = connect(config);
  snoop::RateLimiter limiter(config.rate);
  corpus::DomainList list = load_list(config, config.domains, err);
  if (config.liveness && list.size() > 0) list = filter_live(config, backend, limiter, list, err);

  const std::vector<dns::DomainName> names = names_of(list);
  const auto found = discover(config, backend, limiter, names);
  fmt::print(out, "{}", discovery_table(found));

  const auto ok = static_cast<std::size_t>(
      std::count_if(found.begin(), found.end(), [](const auto& f) { return f.estimate.has_value(); }));
  if (config.out) {
    const auto path = corpus::ttl_cache_path(*config.out);
    merge_ttl_cache(path, corpus::load_ttl_cache(path), found);
    fmt::print(err, "saved {} max TTLs to {}\n", ok, path.string());
  }
  if (!found.empty() && ok == 0) {
    fmt::print(err, "error: max TTL discovery failed for every domain\n");
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_snoop(const ScanConfig& config, std::ostream& out, std::ostream& err) {
  if (!config.out) throw UsageError("snoop needs --out for the observation log");
  if (!config.duration && !config.cycles) throw UsageError("snoop needs --duration or --cycles");
  if (config.method == snoop::Method::rd0 && !config.canary_zone) {
    throw UsageError("--method rd0 needs --canary-zone to confirm the server honors RD=0");
  }

  Backend backend = connect(config);
  snoop::RateLimiter limiter(config.rate);
  const corpus::DomainList list = load_list(config, config.domains, err);
  const std::vector<dns::DomainName> names = names_of(list);

  // Max TTLs come from an earlier discover-ttl run when available.
  const auto cache_path = corpus::ttl_cache_path(*config.out);
  corpus::TtlCache cache = corpus::load_ttl_cache(cache_path);
  std::vector<dns::DomainName> missing;
  for (const auto& n : names) {
    if (!cache.count(n)) missing.push_back(n);
  }
  if (!missing.empty()) {
    fmt::print(err, "discovering max TTL for {} domains\n", missing.size());
    const auto found = discover(config, backend, limiter, missing);
    for (const auto& f : found) {
      if (f.estimate) {
        cache[f.domain] = *f.estimate;
      } else {
        fmt::print(err, "skipping {}: {}\n", f.domain.str(), f.detail);
      }
    }
    merge_ttl_cache(cache_path, cache, {});
  }

  std::vector<snoop::ScanTarget> targets;
  for (const auto& n : names) {
    auto it = cache.find(n);
    if (it == cache.end()) continue;
    snoop::ScanTarget t{n, {}};
    t.plan.method = config.method;
    t.plan.max_ttl = it->second.max_ttl;
    t.plan.window_fraction = config.window_fraction;
    t.plan.discovery = discovery_config(config);
    t.plan.budget.duration = config.duration;
    t.plan.budget.max_cycles = config.cycles;
    targets.push_back(std::move(t));
  }
  if (targets.empty() && !names.empty()) {
    fmt::print(err, "error: no domain has a known max TTL\n");
    return kExitRuntime;
  }

  if (!targets.empty() && config.method != snoop::Method::ttl_recursive) {
    auto link = backend.transports();
    snoop::Resolver resolver(backend.label, *link, *backend.clock, &limiter, {}, seed_of(config));
    std::optional<dns::DomainName> canary_zone;
    if (config.canary_zone) canary_zone = dns::DomainName::parse(*config.canary_zone);
    if (config.method == snoop::Method::rd0) {
      const auto canaries = snoop::make_canaries(*canary_zone, 5, seed_of(config));
      const snoop::RdBehavior rd = snoop::check_rd_behavior(resolver, canaries);
      if (!rd.honors_rd0) {
        throw Error(ErrorCode::RdNotHonored, fmt::format("{} answers RD=0 canaries from recursion", backend.label));
      }
    } else {
      snoop::TimingConfig tc;
      tc.miss_zone = canary_zone;
      tc.seed = seed_of(config);
      const auto cal = snoop::calibrate_timing(resolver, targets.front().domain, config.calibration_samples, tc);
      fmt::print(err, "timing calibration: cached {:.2f} ms, miss {:.2f} ms, threshold {:.2f} ms, separation {:.1f}%\n",
                 cal.cached_median_ms, cal.miss_median_ms, cal.threshold_ms, 100 * cal.separation_quality);
      for (auto& t : targets) t.plan.calibration = cal;
    }
  }

  if (config.duration && !targets.empty()) {
    const auto shortest = std::min_element(targets.begin(), targets.end(), [](const auto& a, const auto& b) {
      return a.plan.max_ttl + a.plan.window().count() < b.plan.max_ttl + b.plan.window().count();
    });
    const double cycle = shortest->plan.max_ttl + shortest->plan.window().count();
    if (config.duration->count() < cycle) {
      fmt::print(err, "warning: duration {:.0f}s is shorter than one probe cycle ({:.0f}s); no cycle will complete\n",
                 config.duration->count(), cycle);
    }
  }

  corpus::ObservationLog log(*config.out, config.scan_id);
  std::map<ErrorCode, std::uint64_t> fault_codes;
  snoop::ScanSink sink = [&](const snoop::ScanEvent& ev) {
    if (const auto* f = std::get_if<snoop::ProbeFault>(&ev)) ++fault_codes[f->code];
    log.append(ev);
  };

  int status = kExitOk;
  snoop::ScanTotals totals;
  try {
    totals = snoop::run_scan(*backend.clock, backend.label, backend.transports, limiter, targets, sink, {},
                             seed_of(config));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ResolverUnreachable) throw;
    fmt::print(err, "error: scan aborted: {}\n", e.what());
    status = kExitRuntime;
  }

  fmt::print(out, "scan {}: {} domains, method {}\n", config.scan_id, targets.size(), to_string(config.method));
  fmt::print(out, "queries sent     {}\n", totals.queries_sent);
  fmt::print(out, "cycles           {}\n", totals.summary.cycles);
  fmt::print(out, "events           {}\n", totals.summary.events);
  fmt::print(out, "censored cycles  {}\n", totals.summary.censored);
  fmt::print(out, "errors           {}", totals.summary.faults);
  std::string sep = " (";
  for (const auto& [code, n] : fault_codes) {
    fmt::print(out, "{}{} {}", sep, to_string(code), n);
    sep = ", ";
  }
  fmt::print(out, "{}\n", fault_codes.empty() ? "" : ")");
  fmt::print(out, "log              {} ({} records)\n", config.out->string(), log.written());
  return status;
}

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  const corpus::LogContents contents = corpus::read_observation_log(options.log);
  if (contents.corrupt > 0) fmt::print(err, "warning: ignored {} unreadable log lines\n", contents.corrupt);
  const auto observations = contents.observations();
  const stats::Report report = stats::build_report(observations, options.top, options.confidence);
  if (report.skipped_records > 0) {
    fmt::print(err, "warning: skipped {} records that break the cycle invariants\n", report.skipped_records);
  }
  if (options.csv) {
    std::ofstream file(*options.csv, std::ios::binary | std::ios::trunc);
    file << stats::to_csv(report.rows);
    if (!file) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", options.csv->string()));
  }
  out << (options.emit_csv ? stats::to_csv(report.rows) : stats::to_table(report.rows));
  return kExitOk;
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  sim::Scenario sc = sim::load_scenario(options.scenario);
  if (options.seed) sc.sim.seed = *options.seed;

  if (sc.sim.clock_mode == sim::ClockMode::realtime) {
    sim::Sim simulator(sc.sim);
    auto endpoint = sim::serve_udp(simulator, snoop::Endpoint::parse(options.bind.value_or(sc.bind)));
    fmt::print(out, "simnet listening on {}\n", endpoint->local().str());
    out.flush();
    g_interrupted = false;
    auto prev_int = std::signal(SIGINT, on_signal);
    auto prev_term = std::signal(SIGTERM, on_signal);
    SteadyClock clock;
    const Seconds until = options.serve_for ? *options.serve_for : Seconds{1e18};
    while (!g_interrupted && clock.now() < until) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    endpoint->stop();
    fmt::print(out, "answered {} queries\n", endpoint->answered());
    return kExitOk;
  }

  std::unique_ptr<corpus::ObservationLog> log;
  if (options.out) log = std::make_unique<corpus::ObservationLog>(*options.out, fmt::format("sim-{}", sc.sim.seed));
  snoop::ScanSink sink;
  if (log) sink = [&](const snoop::ScanEvent& ev) { log->append(ev); };
  const sim::BatchResult result = sim::run_batch(sc.sim, sc.batch, sink);
  out << sim::format_batch(result);
  if (log) fmt::print(err, "wrote {} records to {}\n", log->written(), options.out->string());
  return kExitOk;
}

}  // namespace snoopdns::cli
