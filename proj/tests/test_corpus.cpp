#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "snoopdns/corpus/domain_list.hpp"
#include "snoopdns/corpus/liveness.hpp"
#include "snoopdns/corpus/observation_log.hpp"
#include "snoopdns/corpus/ttl_cache.hpp"
#include "snoopdns/error.hpp"
#include "support.hpp"

using namespace snoopdns;
using namespace snoopdns::corpus;
using snoopdns::testing::name;
namespace fs = std::filesystem;

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

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("snoopdns-test-" + std::to_string(::getpid()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

snoop::RefreshObservation observation(int i) {
  snoop::RefreshObservation o;
  o.server = "192.0.2.53:53";
  o.domain = name(("d" + std::to_string(i % 7) + ".example").c_str());
  o.window_start = Seconds{1000.25 * i};
  o.window_length = Seconds{300};
  if (i % 3) {
    o.event = snoop::RefreshEvent{Seconds{12.5}, o.window_start + Seconds{12.5}};
  } else {
    o.censored = true;
  }
  o.probe_rtt_ms = 4.75;
  return o;
}

}  // namespace

TEST(DomainListTest, LoadsRankedCsv) {
  std::string csv = "GlobalRank,TldRank,Domain,TLD\n";
  for (int i = 1; i <= 1000; ++i) csv += std::to_string(i) + "," + std::to_string(i) + ",site" + std::to_string(i) + ".com,com\n";
  const DomainList list = parse_domain_list(csv, ListFormat::csv);
  ASSERT_EQ(list.size(), 1000u);
  EXPECT_EQ(list.entries[0].domain, name("site1.com"));
  EXPECT_EQ(list.entries[999].source_rank, 1000u);
}

TEST(DomainListTest, DedupsAndSkipsInvalid) {
  const DomainList plain = parse_domain_list("a.com\nA.com.\n# comment\n\nbad..name\nlocalhost\n", ListFormat::plain);
  ASSERT_EQ(plain.size(), 1u);
  EXPECT_EQ(plain.invalid, 2u);
  EXPECT_EQ(plain.invalid_samples.front(), "bad..name");

  const DomainList csv = parse_domain_list("Domain,tags\nbad..name,x\nok.org,news;ru\n", ListFormat::csv);
  ASSERT_EQ(csv.size(), 1u);
  EXPECT_EQ(csv.invalid, 1u);
  EXPECT_EQ(csv.entries[0].tags, (std::set<std::string>{"news", "ru"}));
}

TEST(DomainListTest, StructuralErrorsCarryLineNumbers) {
  try {
    parse_domain_list("rank,Domain\n1,a.com\nx,b.com\n", ListFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { parse_domain_list("name\nexample.com\n", ListFormat::csv); }), ErrorCode::ParseError);
  EXPECT_EQ(parse_domain_list("", ListFormat::csv).size(), 0u);
  EXPECT_EQ(code_of([] { parse_list_format("xml"); }), ErrorCode::ConfigError);
}

TEST(DomainListTest, SaveLoadIdentity) {
  TempDir dir;
  DomainList list;
  list.source = (dir / "list.csv").string();
  list.add(DomainEntry{name("a.example"), 3, {"news", "fa"}});
  list.add(DomainEntry{name("b.example"), std::nullopt, {}});
  list.add(DomainEntry{name("c.example"), 1, {"vpn"}});
  save_domain_list(list, dir / "list.csv");
  const DomainList once = load_domain_list(dir / "list.csv", ListFormat::csv);
  EXPECT_EQ(once, list);
  save_domain_list(once, dir / "list.csv");
  EXPECT_EQ(load_domain_list(dir / "list.csv", ListFormat::csv), once);
  EXPECT_EQ(code_of([&] { load_domain_list(dir / "missing.csv", ListFormat::csv); }), ErrorCode::IoError);
}

TEST(Liveness, SplitsLiveAndDead) {
  sim::SimConfig c;
  DomainList list;
  for (int i = 0; i < 1000; ++i) {
    const auto d = name(("site" + std::to_string(i) + ".example").c_str());
    list.add(DomainEntry{d, static_cast<std::uint64_t>(i + 1), {}});
    if (i % 91 != 7) c.zones.push_back(sim::Zone{d, 0xc0000201, 300});
  }
  ASSERT_EQ(c.zones.size(), 989u);
  snoopdns::testing::Rig rig(c);
  const LivenessResult r = liveness_filter(list, rig.resolver);
  EXPECT_EQ(r.live.size(), 989u);
  EXPECT_EQ(r.dead.size(), 11u);
  EXPECT_EQ(r.dead.entries[0].domain, name("site7.example"));
  EXPECT_EQ(r.dead.entries[0].source_rank, 8u);
  // Three rounds, at least a minute apart.
  EXPECT_GE(rig.clock.now(), Seconds{120});
}

TEST(Liveness, AllResolvable) {
  DomainList list;
  list.add(DomainEntry{name("example.com"), std::nullopt, {}});
  snoopdns::testing::Rig rig(snoopdns::testing::one_zone("example.com", 300));
  const LivenessResult r = liveness_filter(list, rig.resolver);
  EXPECT_EQ(r.live.size(), 1u);
  EXPECT_EQ(r.dead.size(), 0u);
}

TEST(Liveness, ResolverDown) {
  DomainList list;
  list.add(DomainEntry{name("example.com"), std::nullopt, {}});
  snoopdns::testing::Rig rig(snoopdns::testing::one_zone("example.com", 300));
  rig.transport.set_offline(true);
  EXPECT_EQ(code_of([&] { liveness_filter(list, rig.resolver); }), ErrorCode::ResolverUnreachable);
}

TEST(ObservationLogTest, RoundTrip) {
  TempDir dir;
  std::vector<ObservationRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back({kSchemaVersion, "scan-a", observation(i)});
  records[2].event = snoop::ProbeFault{"192.0.2.53:53", name("x.example"), snoop::Method::rd0, Seconds{12.5},
                                       ErrorCode::Timeout, "no reply"};
  EXPECT_EQ(append_observations(dir / "log.jsonl", records), 3u);
  const LogContents back = read_observation_log(dir / "log.jsonl");
  EXPECT_EQ(back.records, records);
  EXPECT_EQ(back.corrupt, 0u);
  EXPECT_EQ(back.observations().size(), 2u);
  EXPECT_EQ(back.faults().size(), 1u);
  EXPECT_EQ(code_of([&] { read_observation_log(dir / "absent.jsonl"); }), ErrorCode::IoError);
}

TEST(ObservationLogTest, ConcurrentWritersNeverInterleave) {
  TempDir dir;
  const fs::path path = dir / "log.jsonl";
  constexpr int kWriters = 8;
  constexpr int kEach = 400;
  std::vector<std::thread> threads;
  for (int w = 0; w < kWriters; ++w) {
    threads.emplace_back([&, w] {
      ObservationLog log(path, "writer-" + std::to_string(w));
      for (int i = 0; i < kEach; ++i) log.append(snoop::ScanEvent{observation(w * kEach + i)});
    });
  }
  for (auto& t : threads) t.join();
  const LogContents back = read_observation_log(path);
  EXPECT_EQ(back.corrupt, 0u);
  ASSERT_EQ(back.records.size(), static_cast<std::size_t>(kWriters * kEach));
  std::map<std::string, int> per_writer;
  for (const auto& r : back.records) ++per_writer[r.scan_id];
  for (const auto& [_, n] : per_writer) EXPECT_EQ(n, kEach);
}

TEST(ObservationLogTest, SkipsCorruptLines) {
  const std::string good = to_json_line({kSchemaVersion, "s", observation(1)});
  const std::string text = good + "\n{\"schema_version\": 1, \"kind\": \"observation\"\n" + good + "\nnot json\n";
  const LogContents c = parse_observation_log(text);
  EXPECT_EQ(c.records.size(), 2u);
  EXPECT_EQ(c.corrupt, 2u);
  EXPECT_EQ(code_of([] { from_json_line(R"({"schema_version": 99, "kind": "observation"})"); }),
            ErrorCode::ParseError);
}

TEST(ObservationLogTest, AnyPrefixParsesToPrefix) {
  std::string text;
  std::vector<ObservationRecord> records;
  for (int i = 0; i < 6; ++i) {
    records.push_back({kSchemaVersion, "s", observation(i)});
    text += to_json_line(records.back()) + "\n";
  }
  for (std::size_t cut = 0; cut <= text.size(); ++cut) {
    const LogContents c = parse_observation_log(std::string_view(text).substr(0, cut));
    ASSERT_LE(c.records.size(), records.size());
    for (std::size_t i = 0; i < c.records.size(); ++i) ASSERT_EQ(c.records[i], records[i]) << "cut " << cut;
    ASSERT_LE(c.corrupt, 1u);
  }
}

TEST(TtlCacheTest, RoundTrip) {
  TempDir dir;
  snoop::MaxTtlEstimate e;
  e.server = "simnet";
  e.domain = name("a.example");
  e.max_ttl = 300;
  e.confirmations = 5;
  e.confirmed = true;
  e.snapped_to_grid = true;
  e.candidates_seen = {{299, 1}, {300, 4}};
  const fs::path path = ttl_cache_path(dir / "scan.jsonl");
  EXPECT_EQ(path.filename(), "scan.jsonl.ttl.json");
  EXPECT_TRUE(load_ttl_cache(path).empty());
  save_ttl_cache(path, std::vector<snoop::MaxTtlEstimate>{e});
  const TtlCache back = load_ttl_cache(path);
  ASSERT_EQ(back.size(), 1u);
  const auto& got = back.at(e.domain);
  EXPECT_EQ(got.max_ttl, 300u);
  EXPECT_TRUE(got.snapped_to_grid);
  EXPECT_EQ(got.candidates_seen, e.candidates_seen);
  std::ofstream(path) << "{broken";
  EXPECT_EQ(code_of([&] { load_ttl_cache(path); }), ErrorCode::ParseError);
}

TEST(ObservationLogTest, FileHoldsOneRecordPerLine) {
  TempDir dir;
  {
    ObservationLog log(dir / "x.jsonl", "s");
    log.append(snoop::ScanEvent{observation(1)});
    log.append(snoop::ScanEvent{observation(2)});
    EXPECT_EQ(log.written(), 2u);
  }
  const std::string text = slurp(dir / "x.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.back(), '\n');
}
