#include <gtest/gtest.h>

#include <sstream>

#include "snoopdns/error.hpp"
#include "snoopdns/sim/batch.hpp"
#include "snoopdns/sim/endpoint.hpp"
#include "snoopdns/snoop/snooper.hpp"
#include "support.hpp"

using namespace snoopdns;
using namespace snoopdns::sim;
using snoopdns::testing::name;
namespace tst = snoopdns::testing;

namespace {

dns::DnsQuery query(const char* n, bool rd = true) {
  dns::DnsQuery q;
  q.id = 9;
  q.qname = name(n);
  q.recursion_desired = rd;
  return q;
}

std::size_t count(const std::vector<SimEvent>& log, EventKind kind) {
  return static_cast<std::size_t>(
      std::count_if(log.begin(), log.end(), [&](const SimEvent& e) { return e.kind == kind; }));
}

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

}  // namespace

TEST(SimTest, SameSeedSameLog) {
  auto c = tst::ladder_scenario(17);
  Sim a(c);
  Sim b(c);
  a.advance(Seconds{1e4});
  b.advance(Seconds{1e4});
  EXPECT_EQ(a.log(), b.log());
  std::ostringstream ja, jb;
  a.write_log_jsonl(ja);
  b.write_log_jsonl(jb);
  EXPECT_EQ(ja.str(), jb.str());
  EXPECT_FALSE(ja.str().empty());

  c.seed = 18;
  Sim other(c);
  other.advance(Seconds{1e4});
  EXPECT_NE(other.log(), a.log());
}

TEST(SimTest, NoClientsOnlyProbeEntries) {
  Sim s(tst::one_zone("example.com", 60));
  for (int i = 0; i < 20; ++i) s.handle_query(query("example.com"), Seconds{i * 17.0});
  for (const auto& e : s.log()) {
    EXPECT_NE(e.kind, EventKind::client_query);
    if (e.kind == EventKind::cache_refresh) {
      EXPECT_EQ(e.cause, RefreshCause::probe);
    }
  }
}

TEST(SimTest, TtlOverride) {
  auto c = tst::one_zone("example.com", 300);
  c.ttl_policy.override_max = 600;
  Sim s(c);
  EXPECT_EQ(s.max_ttl_for(name("example.com")), 600u);
  const auto a = s.handle_query(query("example.com"), Seconds{0});
  EXPECT_EQ(a.response.answers.at(0).ttl, 600u);
  EXPECT_EQ(s.max_ttl_for(name("unknown.example")), std::nullopt);
}

TEST(SimTest, CountsDownFromClientRefresh) {
  auto c = tst::one_zone("example.com", 300);
  c.clients.push_back(tst::periodic("example.com", 1e7, 0));
  Sim s(c);
  const auto a = s.handle_query(query("example.com"), Seconds{50});
  EXPECT_EQ(a.response.answers.at(0).ttl, 250u);
  EXPECT_LT(a.rtt_ms, 20);
  const auto log = s.log();
  ASSERT_EQ(count(log, EventKind::cache_refresh), 1u);
  const auto refresh = std::find_if(log.begin(), log.end(),
                                    [](const SimEvent& e) { return e.kind == EventKind::cache_refresh; });
  EXPECT_EQ(refresh->at, Seconds{0});
  EXPECT_EQ(refresh->cause, RefreshCause::client);
}

TEST(SimTest, TtlStrictlyDecreasesBetweenRefreshes) {
  auto c = tst::one_zone("example.com", 60);
  c.clients.push_back(tst::periodic("example.com", 150, 0.3));
  Sim s(c);
  std::optional<std::uint32_t> prev;
  std::size_t refreshes = 0;
  for (int i = 1; i < 1000; ++i) {
    const auto a = s.handle_query(query("example.com", false), Seconds{i * 1.0});
    const std::size_t now_refreshes = count(s.log(), EventKind::cache_refresh);
    if (a.response.answers.empty()) {
      prev.reset();
    } else {
      const std::uint32_t ttl = a.response.answers[0].ttl;
      if (prev && now_refreshes == refreshes) {
        EXPECT_LT(ttl, *prev) << "at " << i;
      }
      prev = ttl;
    }
    refreshes = now_refreshes;
  }
  EXPECT_GT(refreshes, 5u);
}

TEST(SimTest, Rd0HonoredLeavesCacheEmpty) {
  Sim s(tst::one_zone("example.com", 300));
  const auto a = s.handle_query(query("example.com", false), Seconds{1});
  EXPECT_TRUE(a.response.answers.empty());
  EXPECT_EQ(a.response.rcode, dns::Rcode::NoError);
  EXPECT_EQ(count(s.log(), EventKind::cache_refresh), 0u);
}

TEST(SimTest, Rd0IgnoredRecurses) {
  auto c = tst::one_zone("example.com", 300);
  c.rd_policy = RdPolicy::ignore;
  Sim s(c);
  const auto a = s.handle_query(query("example.com", false), Seconds{1});
  EXPECT_EQ(a.response.answers.size(), 1u);
  EXPECT_EQ(count(s.log(), EventKind::cache_refresh), 1u);
}

TEST(SimTest, PreRefreshNearExpiry) {
  auto c = tst::one_zone("example.com", 300);
  c.anomaly = PreRefresh{3, 5};
  c.clients.push_back(tst::periodic("example.com", 1e7, 0));
  Sim s(c);
  const auto a = s.handle_query(query("example.com"), Seconds{296});
  EXPECT_EQ(a.response.answers.at(0).ttl, 300u);
  const auto log = s.log();
  ASSERT_EQ(count(log, EventKind::cache_refresh), 2u);
  const auto last = std::find_if(log.rbegin(), log.rend(),
                                 [](const SimEvent& e) { return e.kind == EventKind::cache_refresh; });
  EXPECT_EQ(last->cause, RefreshCause::anomaly);
  // Outside the band the countdown is untouched.
  const auto b = s.handle_query(query("example.com"), Seconds{400});
  EXPECT_EQ(b.response.answers.at(0).ttl, 196u);
}

TEST(SimTest, AdvanceArrivals) {
  auto c = tst::one_zone("example.com", 300, 42);
  c.clients.push_back(tst::poisson("example.com", 0.01));
  Sim s(c);
  EXPECT_TRUE(s.advance(Seconds{0}).empty());
  const auto slice = s.advance(Seconds{10000});
  const std::size_t n = count(slice, EventKind::client_query);
  EXPECT_GE(n, 70u);
  EXPECT_LE(n, 130u);
  EXPECT_EQ(s.now(), Seconds{10000});

  auto p = tst::one_zone("example.com", 30);
  p.clients.push_back(tst::periodic("example.com", 60));
  Sim periodic(p);
  EXPECT_EQ(count(periodic.advance(Seconds{600}), EventKind::client_query), 10u);
  EXPECT_DOUBLE_EQ(periodic.true_rate(name("example.com")), 1.0 / 60);
}

TEST(SimTest, UnknownNameIsNxdomain) {
  Sim s(tst::one_zone("example.com", 300));
  const auto a = s.handle_query(query("nowhere.test"), Seconds{0});
  EXPECT_EQ(a.response.rcode, dns::Rcode::NxDomain);
  EXPECT_GT(a.rtt_ms, 20);
}

TEST(SimTest, WildcardZone) {
  auto c = tst::one_zone("*.canary.example", 60);
  Sim s(c);
  const auto a = s.handle_query(query("x7.canary.example"), Seconds{0});
  ASSERT_EQ(a.response.answers.size(), 1u);
  EXPECT_EQ(a.response.answers[0].name, name("x7.canary.example"));
}

TEST(SimTest, RejectsTimeTravel) {
  Sim s(tst::one_zone("example.com", 300));
  s.advance(Seconds{100});
  EXPECT_EQ(code_of([&] { s.handle_query(query("example.com"), Seconds{50}); }), ErrorCode::PreconditionViolation);
  EXPECT_FALSE(s.handle_packet(std::vector<std::uint8_t>{1, 2, 3}, Seconds{200}));
}

TEST(SimTest, ConcurrentSnoopersStayIsolated) {
  auto c = tst::one_zone("left.example", 60, 4);
  c.zones.push_back(Zone{name("right.example"), 0xc0000202, 60});
  c.clients.push_back(tst::poisson("left.example", 0.02));
  c.clients.push_back(tst::poisson("right.example", 0.005));
  VirtualClock clock;
  Sim s(c);
  snoop::RateLimiter limiter(10);
  auto transports = [&] { return std::make_unique<SimTransport>(s, clock); };
  std::vector<snoop::ScanTarget> targets;
  for (const char* d : {"left.example", "right.example"}) {
    snoop::ScanTarget t{name(d), {}};
    t.plan.max_ttl = 60;
    t.plan.budget.duration = Seconds{6 * 3600.0};
    targets.push_back(t);
  }
  std::vector<snoop::RefreshObservation> obs;
  snoop::run_scan(clock, "simnet", transports, limiter, targets, [&](const snoop::ScanEvent& ev) {
    if (auto* o = std::get_if<snoop::RefreshObservation>(&ev)) obs.push_back(*o);
  });
  const auto log = s.log();
  std::size_t events = 0;
  for (const auto& o : obs) {
    if (!o.event) continue;
    ++events;
    const auto match = std::find_if(log.begin(), log.end(), [&](const SimEvent& e) {
      return e.kind == EventKind::cache_refresh && e.domain == o.domain &&
             std::abs((e.at - o.event->inferred_refresh_time).count()) <= 2.0;
    });
    ASSERT_NE(match, log.end());
    EXPECT_EQ(match->cause, RefreshCause::client);
  }
  EXPECT_GT(events, 100u);
}

TEST(Scenario, ParsesAndReportsPosition) {
  const auto sc = parse_scenario(R"({"seed": 3, "clock_mode": "realtime",
    "ttl_policy": {"override": 120}, "anomaly": {"pre_refresh": [2, 4]},
    "zones": [{"name": "a.example", "address": "192.0.2.7", "ttl": 30}],
    "clients": [{"domain": "a.example", "process": "periodic", "interval": 20}],
    "batch": {"method": "rd0", "duration": 600}, "bind": "127.0.0.1:0"})");
  EXPECT_EQ(sc.sim.seed, 3u);
  EXPECT_EQ(sc.sim.clock_mode, ClockMode::realtime);
  EXPECT_EQ(sc.sim.ttl_policy.override_max, 120u);
  ASSERT_TRUE(sc.sim.anomaly);
  EXPECT_EQ(sc.sim.anomaly->remaining_high, 4);
  EXPECT_EQ(sc.sim.zones.at(0).ipv4, parse_ipv4("192.0.2.7"));
  EXPECT_EQ(format_ipv4(sc.sim.zones.at(0).ipv4), "192.0.2.7");
  EXPECT_EQ(sc.batch.method, snoop::Method::rd0);
  EXPECT_EQ(sc.batch.duration, Seconds{600});
  try {
    parse_scenario(R"({"seed": })");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_scenario(R"({"zones": [{"name": "a..b"}]})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_scenario(R"({"clients": [{"domain": "x.example", "process": "poisson",
    "lambda": 0.1}]})"); }), ErrorCode::ConfigError);
}

TEST(Batch, SmallScanIsReproducible) {
  auto c = tst::ladder_scenario(7, 60);
  c.zones.resize(4);
  c.clients.resize(4);
  BatchConfig b;
  b.duration = Seconds{6 * 3600.0};
  const BatchResult one = run_batch(c, b);
  const BatchResult two = run_batch(c, b);
  EXPECT_EQ(format_batch(one), format_batch(two));
  EXPECT_EQ(one.observations, two.observations);
  ASSERT_EQ(one.rows.size(), 4u);
  for (const auto& row : one.rows) EXPECT_EQ(row.max_ttl, 60u);
}

TEST(Udp, ServesOverLoopback) {
  auto c = tst::one_zone("example.com", 10);
  c.clock_mode = ClockMode::realtime;
  Sim s(c);
  auto endpoint = serve_udp(s, snoop::Endpoint::parse("127.0.0.1:0"));
  ASSERT_NE(endpoint->local().port, 0);
  snoop::UdpTransport link(endpoint->local());
  SteadyClock clock;
  snoop::Resolver r("loopback", link, clock, nullptr);
  const auto known = r.query(name("example.com"), true);
  ASSERT_EQ(known.response.answers.size(), 1u);
  EXPECT_EQ(known.response.answers[0].ttl, 10u);
  EXPECT_GT(known.rtt_ms, 20);
  const auto unknown = r.query(name("missing.test"), true);
  EXPECT_EQ(unknown.response.rcode, dns::Rcode::NxDomain);
  endpoint->stop();
  EXPECT_GE(endpoint->answered(), 2u);
}

TEST(Udp, RefusesVirtualScenarioAndBadAddress) {
  Sim virt(tst::one_zone("example.com", 10));
  EXPECT_EQ(code_of([&] { serve_udp(virt, snoop::Endpoint::parse("127.0.0.1:0")); }), ErrorCode::ConfigError);
  auto c = tst::one_zone("example.com", 10);
  c.clock_mode = ClockMode::realtime;
  Sim rt(c);
  EXPECT_EQ(code_of([&] { UdpEndpoint e(rt, snoop::Endpoint::parse("192.0.2.1:53")); }), ErrorCode::BindError);
}
