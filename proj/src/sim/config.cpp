#include "snoopdns/sim/config.hpp"

#include <algorithm>

#include <arpa/inet.h>

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "snoopdns/error.hpp"

namespace snoopdns::sim {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

dns::DomainName name_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) bad(fmt::format("{}: missing string field '{}'", where, key));
  try {
    return dns::DomainName::parse(j[key].get<std::string>());
  } catch (const Error& e) {
    bad(fmt::format("{}: {}", where, e.what()));
  }
}

template <typename T>
T number(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) bad(fmt::format("{}: '{}' must be a number", where, key));
  return j[key].get<T>();
}

Zone parse_zone(const json& j, std::size_t i) {
  const std::string where = fmt::format("zones[{}]", i);
  if (!j.is_object()) bad(where + ": expected an object");
  Zone z;
  z.name = name_field(j, "name", where);
  if (j.contains("address")) {
    if (!j["address"].is_string()) bad(where + ": 'address' must be a string");
    z.ipv4 = parse_ipv4(j["address"].get<std::string>());
  }
  const auto ttl = number<std::int64_t>(j, "ttl", 300, where);
  if (ttl <= 0 || ttl > 0x7fffffff) bad(fmt::format("{}: ttl {} must be positive", where, ttl));
  z.authoritative_ttl = static_cast<std::uint32_t>(ttl);
  return z;
}

ClientPopulation parse_client(const json& j, std::size_t i) {
  const std::string where = fmt::format("clients[{}]", i);
  if (!j.is_object()) bad(where + ": expected an object");
  ClientPopulation c;
  c.domain = name_field(j, "domain", where);
  const std::string process = j.value("process", "none");
  if (process == "poisson") {
    c.process = ProcessKind::poisson;
    c.lambda = number<double>(j, "lambda", 0, where);
  } else if (process == "periodic") {
    c.process = ProcessKind::periodic;
    c.interval = number<double>(j, "interval", 0, where);
    c.phase = number<double>(j, "phase", 0, where);
  } else if (process != "none") {
    bad(fmt::format("{}: unknown process '{}'", where, process));
  }
  c.label = j.value("label", "");
  return c;
}

BatchConfig parse_batch(const json& j) {
  BatchConfig b;
  if (!j.is_object()) bad("batch: expected an object");
  if (j.contains("method")) b.method = snoop::parse_method(j["method"].get<std::string>());
  b.window_fraction = number<double>(j, "window_fraction", b.window_fraction, "batch");
  b.duration = Seconds(number<double>(j, "duration", b.duration.count(), "batch"));
  b.rate = number<double>(j, "rate", b.rate, "batch");
  b.confidence = number<double>(j, "confidence", b.confidence, "batch");
  b.confirmations = number<int>(j, "confirmations", b.confirmations, "batch");
  b.calibration_samples = number<int>(j, "calibration_samples", b.calibration_samples, "batch");
  if (j.contains("discover")) {
    if (!j["discover"].is_boolean()) bad("batch: 'discover' must be true or false");
    b.discover = j["discover"].get<bool>();
  }
  if (!(b.window_fraction > 0 && b.window_fraction <= 1)) bad("batch: window_fraction must lie in (0, 1]");
  if (!(b.duration.count() > 0)) bad("batch: duration must be positive");
  if (!(b.rate > 0)) bad("batch: rate must be positive");
  if (b.confirmations < 1) bad("batch: confirmations must be at least 1");
  return b;
}

}  // namespace

double ClientPopulation::true_rate() const {
  switch (process) {
    case ProcessKind::poisson: return lambda;
    case ProcessKind::periodic: return interval > 0 ? 1.0 / interval : 0.0;
    case ProcessKind::none: return 0.0;
  }
  return 0.0;
}

void SimConfig::validate() const {
  for (const auto& z : zones) {
    if (z.authoritative_ttl == 0) bad(fmt::format("zone {}: authoritative TTL must be positive", z.name.str()));
  }
  if (ttl_policy.override_max && *ttl_policy.override_max == 0) bad("ttl_policy: override must be positive");
  if (anomaly) {
    if (!(anomaly->remaining_low >= 0) || !(anomaly->remaining_low <= anomaly->remaining_high)) {
      bad("anomaly: need 0 <= remaining_low <= remaining_high");
    }
  }
  const auto& r = rtt_model;
  if (!(r.cached_jitter >= 0 && r.recursion_jitter >= 0)) bad("rtt_model: jitter must be non-negative");
  if (!(r.cached_mean >= 0 && r.recursion_extra_mean >= 0)) bad("rtt_model: means must be non-negative");
  auto served = [&](const dns::DomainName& n) {
    return std::any_of(zones.begin(), zones.end(), [&](const Zone& z) {
      if (z.name == n) return true;
      return !z.name.labels().empty() && z.name.labels().front() == "*" && n.is_subdomain_of(z.name.parent()) &&
             n != z.name.parent();
    });
  };
  for (const auto& c : clients) {
    if (!served(c.domain)) bad(fmt::format("client {}: no zone serves this name", c.domain.str()));
    if (c.process == ProcessKind::poisson && !(c.lambda >= 0)) {
      bad(fmt::format("client {}: lambda must be non-negative", c.domain.str()));
    }
    if (c.process == ProcessKind::periodic && !(c.interval > 0)) {
      bad(fmt::format("client {}: interval must be positive", c.domain.str()));
    }
    if (c.process == ProcessKind::periodic && !(c.phase >= 0)) {
      bad(fmt::format("client {}: phase must be non-negative", c.domain.str()));
    }
  }
}

Scenario parse_scenario(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(fmt::format("scenario is not valid JSON at byte {}: {}", e.byte, e.what()));
  }
  if (!j.is_object()) bad("scenario: top level must be an object");

  Scenario s;
  SimConfig& c = s.sim;
  try {
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) bad("seed must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    const std::string mode = j.value("clock_mode", "virtual");
    if (mode == "virtual") {
      c.clock_mode = ClockMode::virtual_time;
    } else if (mode == "realtime") {
      c.clock_mode = ClockMode::realtime;
    } else {
      bad(fmt::format("unknown clock_mode '{}'", mode));
    }
    const std::string rd = j.value("rd_policy", "honor");
    if (rd == "honor") {
      c.rd_policy = RdPolicy::honor;
    } else if (rd == "ignore") {
      c.rd_policy = RdPolicy::ignore;
    } else {
      bad(fmt::format("unknown rd_policy '{}'", rd));
    }
    if (j.contains("ttl_policy")) {
      const json& t = j["ttl_policy"];
      if (t.is_string() && t.get<std::string>() == "respect_authoritative") {
        // default
      } else if (t.is_object() && t.contains("override")) {
        const auto v = number<std::int64_t>(t, "override", 0, "ttl_policy");
        if (v <= 0 || v > 0x7fffffff) bad("ttl_policy: override must be positive");
        c.ttl_policy.override_max = static_cast<std::uint32_t>(v);
      } else {
        bad("ttl_policy must be \"respect_authoritative\" or {\"override\": seconds}");
      }
    }
    if (j.contains("anomaly")) {
      const json& a = j["anomaly"];
      if (a.is_string() && a.get<std::string>() == "none") {
        // default
      } else if (a.is_object() && a.contains("pre_refresh") && a["pre_refresh"].is_array() &&
                 a["pre_refresh"].size() == 2 && a["pre_refresh"][0].is_number() && a["pre_refresh"][1].is_number()) {
        c.anomaly = PreRefresh{a["pre_refresh"][0].get<double>(), a["pre_refresh"][1].get<double>()};
      } else {
        bad("anomaly must be \"none\" or {\"pre_refresh\": [low, high]}");
      }
    }
    if (j.contains("rtt_model")) {
      const json& r = j["rtt_model"];
      if (!r.is_object()) bad("rtt_model: expected an object");
      c.rtt_model.cached_mean = number<double>(r, "cached_mean_ms", c.rtt_model.cached_mean, "rtt_model");
      c.rtt_model.cached_jitter = number<double>(r, "cached_jitter_ms", c.rtt_model.cached_jitter, "rtt_model");
      c.rtt_model.recursion_extra_mean =
          number<double>(r, "recursion_extra_mean_ms", c.rtt_model.recursion_extra_mean, "rtt_model");
      c.rtt_model.recursion_jitter =
          number<double>(r, "recursion_jitter_ms", c.rtt_model.recursion_jitter, "rtt_model");
    }
    if (j.contains("zones")) {
      if (!j["zones"].is_array()) bad("zones: expected an array");
      for (std::size_t i = 0; i < j["zones"].size(); ++i) c.zones.push_back(parse_zone(j["zones"][i], i));
    }
    if (j.contains("clients")) {
      if (!j["clients"].is_array()) bad("clients: expected an array");
      for (std::size_t i = 0; i < j["clients"].size(); ++i) c.clients.push_back(parse_client(j["clients"][i], i));
    }
    if (j.contains("batch")) s.batch = parse_batch(j["batch"]);
    if (j.contains("bind")) {
      if (!j["bind"].is_string()) bad("bind must be a string");
      s.bind = j["bind"].get<std::string>();
    }
  } catch (const json::exception& e) {
    bad(fmt::format("scenario: {}", e.what()));
  }
  c.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad(fmt::format("cannot read scenario {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::uint32_t parse_ipv4(std::string_view text) {
  in_addr a{};
  const std::string s(text);
  if (inet_pton(AF_INET, s.c_str(), &a) != 1) bad(fmt::format("'{}' is not an IPv4 address", s));
  return ntohl(a.s_addr);
}

std::string format_ipv4(std::uint32_t addr) {
  return fmt::format("{}.{}.{}.{}", addr >> 24, (addr >> 16) & 0xff, (addr >> 8) & 0xff, addr & 0xff);
}

}  // namespace snoopdns::sim
