#include <gtest/gtest.h>

#include <algorithm>

#include "snoopdns/error.hpp"
#include "snoopdns/snoop/probes.hpp"
#include "snoopdns/snoop/snooper.hpp"
#include "snoopdns/snoop/timing.hpp"
#include "support.hpp"

using namespace snoopdns;
using namespace snoopdns::snoop;
using snoopdns::testing::name;
using snoopdns::testing::Rig;
namespace tst = snoopdns::testing;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

sim::SimConfig with_canaries(sim::SimConfig c) {
  c.zones.push_back(sim::Zone{name("*.canary.example"), 0xc0000263, 60});
  return c;
}

std::vector<Seconds> probe_times(const sim::Sim& s) {
  std::vector<Seconds> out;
  for (const auto& e : s.log()) {
    if (e.kind == sim::EventKind::probe_query) out.push_back(e.at);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t max_per_second(const std::vector<Seconds>& sorted) {
  std::size_t worst = 0;
  for (std::size_t i = 0, j = 0; i < sorted.size(); ++i) {
    while (j < sorted.size() && sorted[j] < sorted[i] + Seconds{1.0}) ++j;
    worst = std::max(worst, j - i);
  }
  return worst;
}

}  // namespace

TEST(Endpoint, ParsesAddresses) {
  auto a = Endpoint::parse("192.0.2.1");
  EXPECT_EQ(a.host, "192.0.2.1");
  EXPECT_EQ(a.port, 53);
  EXPECT_FALSE(a.is_loopback());
  auto b = Endpoint::parse("[::1]:5353");
  EXPECT_EQ(b.host, "::1");
  EXPECT_EQ(b.port, 5353);
  EXPECT_TRUE(b.is_loopback());
  EXPECT_TRUE(Endpoint::parse("127.0.0.2:53").is_loopback());
  EXPECT_THROW(Endpoint::parse("resolver.example"), Error);
}

TEST(RateLimiterTest, CapsEverySlidingSecond) {
  RateLimiter limiter(10);
  std::vector<Seconds> grants;
  for (int i = 0; i < 25; ++i) grants.push_back(limiter.reserve(Seconds{0}));
  EXPECT_EQ(grants[9], Seconds{0});
  EXPECT_EQ(grants[10], Seconds{1});
  EXPECT_EQ(grants[24], Seconds{2});
  EXPECT_TRUE(std::is_sorted(grants.begin(), grants.end()));
  EXPECT_LE(max_per_second(grants), 10u);
}

TEST(TtlCycle, EvaluatesExamples) {
  const auto d = name("example.com");
  const Seconds grace = default_grace(300);
  EXPECT_EQ(grace, Seconds{3});
  const auto ev = evaluate_ttl_cycle("s", d, 300, Seconds{1000}, Seconds{1300}, 120, grace);
  ASSERT_TRUE(ev.event);
  EXPECT_DOUBLE_EQ(ev.event->delay_after_expiry.count(), 120);
  EXPECT_DOUBLE_EQ(ev.event->inferred_refresh_time.count(), 1120);
  EXPECT_DOUBLE_EQ(ev.window_length.count(), 300);
  EXPECT_TRUE(ev.satisfies_invariants());

  const auto cen = evaluate_ttl_cycle("s", d, 300, Seconds{1000}, Seconds{1300}, 300, grace);
  EXPECT_TRUE(cen.censored);
  EXPECT_FALSE(cen.event);
  EXPECT_DOUBLE_EQ(cen.window_length.count(), 300);

  EXPECT_EQ(code_of([&] { evaluate_ttl_cycle("s", d, 300, Seconds{1000}, Seconds{1300}, 320, grace); }),
            ErrorCode::TtlExceedsMax);
  EXPECT_EQ(default_grace(3600), Seconds{36});
}

TEST(TtlCycle, DelayStaysInsideWindow) {
  const auto d = name("example.com");
  for (std::uint32_t reading = 0; reading < 147; reading += 7) {
    EXPECT_EQ(code_of([&] { evaluate_ttl_cycle("s", d, 300, Seconds{0}, Seconds{150}, reading, Seconds{3}); }),
              ErrorCode::NonMonotonicTtl);
  }
  for (std::uint32_t reading = 147; reading <= 296; reading += 7) {
    const auto obs = evaluate_ttl_cycle("s", d, 300, Seconds{0}, Seconds{150}, reading, Seconds{3});
    EXPECT_TRUE(obs.satisfies_invariants());
    if (obs.event) {
      EXPECT_GE(obs.event->inferred_refresh_time, obs.window_start);
      EXPECT_LE(obs.event->inferred_refresh_time, obs.window_start + obs.window_length);
    }
  }
}

TEST(Discovery, SnapsOffByOneReading) {
  DiscoveryConfig cfg;
  cfg.grid = {60};
  MaxTtlTally tally(cfg);
  bool done = false;
  for (std::uint32_t r : {299u, 300u, 300u, 300u, 300u, 300u}) done = tally.add(r);
  ASSERT_TRUE(done);
  MaxTtlEstimate e;
  tally.fill(e);
  EXPECT_EQ(e.max_ttl, 300u);
  EXPECT_TRUE(e.snapped_to_grid);
  EXPECT_EQ(e.candidates_seen.at(299), 1);
  EXPECT_EQ(snap_to_grid(299, std::vector<std::uint32_t>{60}, 2).value, 300u);
  EXPECT_FALSE(snap_to_grid(250, std::vector<std::uint32_t>{60}, 2).snapped);
}

TEST(Discovery, RecoversConfiguredTtls) {
  for (std::uint32_t ttl : {20u, 60u, 300u}) {
    Rig rig(tst::one_zone("example.com", ttl));
    const auto e = discover_max_ttl(rig.resolver, name("example.com"));
    EXPECT_EQ(e.max_ttl, ttl);
    EXPECT_EQ(e.confirmations, 5);
    EXPECT_TRUE(e.confirmed);
  }
}

TEST(Discovery, SeesResolverOverride) {
  auto c = tst::one_zone("example.com", 300);
  c.ttl_policy.override_max = 600;
  Rig rig(c);
  EXPECT_EQ(discover_max_ttl(rig.resolver, name("example.com")).max_ttl, 600u);
}

TEST(Discovery, FlagsPrefetchingServer) {
  auto c = tst::one_zone("example.com", 300);
  c.anomaly = sim::PreRefresh{};
  Rig rig(c);
  EXPECT_EQ(code_of([&] { discover_max_ttl(rig.resolver, name("example.com")); }), ErrorCode::ServerPrefetches);
}

TEST(Rd0, DatesRefreshFromRemainingTtl) {
  auto c = tst::one_zone("example.com", 300);
  c.clients.push_back(tst::periodic("example.com", 1e7, 10));
  Rig rig(c);
  Rd0Prober prober(rig.resolver, name("example.com"), 300);
  rig.clock.sleep_until(Seconds{5});
  EXPECT_FALSE(prober.probe());
  rig.clock.sleep_until(Seconds{60});
  const auto obs = prober.probe();
  ASSERT_TRUE(obs && obs->event);
  EXPECT_DOUBLE_EQ(obs->event->inferred_refresh_time.count(), 10);
  EXPECT_DOUBLE_EQ((*prober.last_probe() - obs->event->inferred_refresh_time).count(), 50);
  // A second probe dating the same refresh adds nothing.
  rig.clock.sleep_until(Seconds{70});
  EXPECT_FALSE(prober.probe());
}

TEST(Rd0, EmptyAnswerIsCensoredAndLeavesCacheAlone) {
  Rig rig(tst::one_zone("example.com", 300));
  Rd0Prober prober(rig.resolver, name("example.com"), 300);
  EXPECT_FALSE(prober.probe());
  rig.clock.sleep_until(Seconds{100});
  const auto obs = prober.probe();
  ASSERT_TRUE(obs);
  EXPECT_TRUE(obs->censored);
  EXPECT_DOUBLE_EQ(obs->window_length.count(), 100);
  for (const auto& e : rig.sim.log()) EXPECT_NE(e.kind, sim::EventKind::cache_refresh);
}

TEST(RdBehaviorTest, ClassifiesPolicies) {
  const auto canaries = make_canaries(name("canary.example"), 5, 3);
  EXPECT_EQ(canaries.size(), 5u);
  {
    Rig rig(with_canaries(tst::one_zone("example.com", 300)));
    EXPECT_TRUE(check_rd_behavior(rig.resolver, canaries).honors_rd0);
  }
  {
    auto c = with_canaries(tst::one_zone("example.com", 300));
    c.rd_policy = sim::RdPolicy::ignore;
    Rig rig(c);
    EXPECT_FALSE(check_rd_behavior(rig.resolver, canaries).honors_rd0);
  }
  {
    Rig rig(with_canaries(tst::one_zone("example.com", 300)));
    rig.transport.set_offline(true);
    EXPECT_EQ(code_of([&] { check_rd_behavior(rig.resolver, canaries); }), ErrorCode::Timeout);
  }
}

TEST(Timing, CalibratesOnSeparatedRtts) {
  Rig rig(with_canaries(tst::one_zone("example.com", 300)));
  TimingConfig tc;
  tc.miss_zone = name("canary.example");
  const auto cal = calibrate_timing(rig.resolver, name("example.com"), 50, tc);
  EXPECT_NEAR(cal.threshold_ms, 30, 3);
  EXPECT_DOUBLE_EQ(cal.separation_quality, 1.0);
  EXPECT_EQ(cal.cached_rtt_samples.size(), 50u);
}

TEST(Timing, JitterDefeatsCalibration) {
  auto c = with_canaries(tst::one_zone("example.com", 300));
  c.rtt_model.cached_jitter = 40;
  c.rtt_model.recursion_jitter = 40;
  Rig rig(c);
  EXPECT_EQ(code_of([&] { calibrate_timing(rig.resolver, name("example.com"), 50); }),
            ErrorCode::InsufficientSeparation);
}

TEST(Timing, RejectsTooFewSamples) {
  Rig rig(tst::one_zone("example.com", 300));
  EXPECT_EQ(code_of([&] { calibrate_timing(rig.resolver, name("example.com"), 0); }),
            ErrorCode::PreconditionViolation);
}

TEST(Timing, ClassifiesAroundThreshold) {
  TimingCalibration cal;
  cal.threshold_ms = 30;
  cal.guard_ms = 6.25;
  EXPECT_EQ(classify_timing(5, cal), TimingVerdict::cached);
  EXPECT_EQ(classify_timing(55, cal), TimingVerdict::miss);
  EXPECT_EQ(classify_timing(30, cal), TimingVerdict::abstain);
}

TEST(Snooper, ZeroCycleBudgetEmitsNothing) {
  Rig rig(tst::one_zone("example.com", 300));
  SnoopPlan plan;
  plan.max_ttl = 300;
  plan.budget.max_cycles = 0;
  int calls = 0;
  const auto s = snoop_domain(rig.resolver, name("example.com"), plan, [&](const ScanEvent&) { ++calls; });
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(s.cycles, 0u);
  EXPECT_EQ(rig.resolver.queries_sent(), 0u);
}

TEST(Snooper, PrefetchingServerEndsDomain) {
  auto c = tst::one_zone("example.com", 300);
  c.anomaly = sim::PreRefresh{};
  c.clients.push_back(tst::poisson("example.com", 0.01));
  Rig rig(c);
  SnoopPlan plan;
  plan.max_ttl = 300;
  plan.budget.duration = Seconds{6 * 3600.0};
  std::vector<ProbeFault> faults;
  const auto s = snoop_domain(rig.resolver, name("example.com"), plan, [&](const ScanEvent& ev) {
    if (auto* f = std::get_if<ProbeFault>(&ev)) faults.push_back(*f);
  });
  EXPECT_TRUE(s.aborted);
  EXPECT_EQ(s.abort_reason, ErrorCode::ServerPrefetches);
  EXPECT_LE(s.cycles, 3u);
  ASSERT_FALSE(faults.empty());
  EXPECT_EQ(faults.back().code, ErrorCode::ServerPrefetches);
}

TEST(Snooper, EventsMatchClientRefreshes) {
  auto c = tst::one_zone("example.com", 300, 11);
  c.clients.push_back(tst::poisson("example.com", 0.01));
  Rig rig(c);
  SnoopPlan plan;
  plan.max_ttl = 300;
  plan.budget.duration = Seconds{24 * 3600.0};
  std::vector<RefreshObservation> obs;
  snoop_domain(rig.resolver, name("example.com"), plan, [&](const ScanEvent& ev) {
    if (auto* o = std::get_if<RefreshObservation>(&ev)) obs.push_back(*o);
  });
  std::vector<sim::SimEvent> refreshes;
  for (const auto& e : rig.sim.log()) {
    if (e.kind == sim::EventKind::cache_refresh) refreshes.push_back(e);
  }
  std::size_t events = 0;
  for (const auto& o : obs) {
    ASSERT_TRUE(o.satisfies_invariants());
    if (!o.event) continue;
    ++events;
    const Seconds t = o.event->inferred_refresh_time;
    EXPECT_GE(t, o.window_start);
    EXPECT_LE(t, o.window_start + o.window_length);
    const auto match = std::find_if(refreshes.begin(), refreshes.end(), [&](const sim::SimEvent& r) {
      return std::abs((r.at - t).count()) <= 2.0;
    });
    ASSERT_NE(match, refreshes.end()) << "no refresh near " << t.count();
    EXPECT_EQ(match->cause, sim::RefreshCause::client);
  }
  EXPECT_GT(events, 50u);
}

TEST(Snooper, NoTrafficNoEvents) {
  Rig rig(tst::one_zone("quiet.example", 60));
  SnoopPlan plan;
  plan.max_ttl = 60;
  plan.budget.max_cycles = 100;
  const auto s = snoop_domain(rig.resolver, name("quiet.example"), plan, [](const ScanEvent&) {});
  EXPECT_EQ(s.cycles, 100u);
  EXPECT_EQ(s.events, 0u);
  EXPECT_EQ(s.censored, 100u);
}

TEST(Snooper, RateCapHoldsForEveryMethod) {
  for (Method m : {Method::ttl_recursive, Method::rd0, Method::timing}) {
    sim::SimConfig c = with_canaries(sim::SimConfig{});
    std::vector<ScanTarget> targets;
    for (int i = 0; i < 30; ++i) {
      const auto d = name(("r" + std::to_string(i) + ".example").c_str());
      c.zones.push_back(sim::Zone{d, 0xc0000201, 20});
      auto p = tst::poisson("r0.example", 0.05);
      p.domain = d;
      c.clients.push_back(p);
      ScanTarget t{d, {}};
      t.plan.method = m;
      t.plan.max_ttl = 20;
      t.plan.rd0_interval = Seconds{1.0};
      t.plan.budget.duration = Seconds{600.0};
      targets.push_back(t);
    }
    VirtualClock clock;
    sim::Sim s(c);
    RateLimiter limiter(10);
    auto transports = [&] { return std::make_unique<sim::SimTransport>(s, clock); };
    if (m == Method::timing) {
      auto link = transports();
      Resolver r("simnet", *link, clock, &limiter);
      TimingConfig tc;
      tc.miss_zone = name("canary.example");
      const auto cal = calibrate_timing(r, targets.front().domain, 30, tc);
      for (auto& t : targets) t.plan.calibration = cal;
    }
    std::vector<ErrorCode> codes;
    const auto totals = run_scan(clock, "simnet", transports, limiter, targets, [&](const ScanEvent& ev) {
      if (auto* f = std::get_if<ProbeFault>(&ev)) codes.push_back(f->code);
    });
    EXPECT_GT(totals.summary.cycles, 0u) << to_string(m);
    // Contention may delay a W = M probe past the record's next expiry; that
    // cycle is dropped, nothing else may go wrong.
    for (ErrorCode c : codes) EXPECT_EQ(c, ErrorCode::LateProbe) << to_string(m);
    const auto times = probe_times(s);
    EXPECT_GT(times.size(), 500u) << to_string(m);
    EXPECT_LE(max_per_second(times), 10u) << to_string(m);
  }
}

TEST(Snooper, UnreachableServerStopsScan) {
  Rig rig(tst::one_zone("example.com", 60));
  rig.transport.set_offline(true);
  SnoopPlan plan;
  plan.max_ttl = 60;
  plan.budget.max_cycles = 10;
  EXPECT_EQ(code_of([&] { snoop_domain(rig.resolver, name("example.com"), plan, [](const ScanEvent&) {}); }),
            ErrorCode::ResolverUnreachable);
}

TEST(Snooper, RejectsMissingMaxTtl) {
  Rig rig(tst::one_zone("example.com", 60));
  SnoopPlan plan;
  EXPECT_EQ(code_of([&] { snoop_domain(rig.resolver, name("example.com"), plan, [](const ScanEvent&) {}); }),
            ErrorCode::PreconditionViolation);
}
