#include "snoopdns/corpus/ttl_cache.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "snoopdns/error.hpp"

namespace snoopdns::corpus {

using nlohmann::ordered_json;

std::filesystem::path ttl_cache_path(const std::filesystem::path& log) {
  std::filesystem::path p = log;
  p += ".ttl.json";
  return p;
}

void save_ttl_cache(const std::filesystem::path& path, std::span<const snoop::MaxTtlEstimate> estimates) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : estimates) {
    ordered_json seen = ordered_json::object();
    for (const auto& [ttl, n] : e.candidates_seen) seen[std::to_string(ttl)] = n;
    arr.push_back({{"server", e.server},
                   {"domain", e.domain.str()},
                   {"max_ttl", e.max_ttl},
                   {"confirmations", e.confirmations},
                   {"confirmed", e.confirmed},
                   {"snapped_to_grid", e.snapped_to_grid},
                   {"candidates_seen", seen}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out << ordered_json{{"schema_version", 1}, {"estimates", arr}}.dump(2) << '\n';
  if (!out.flush()) throw Error(ErrorCode::IoError, fmt::format("write to {} failed", path.string()));
}

TtlCache load_ttl_cache(const std::filesystem::path& path) {
  TtlCache cache;
  std::ifstream in(path, std::ios::binary);
  if (!in) return cache;
  try {
    const ordered_json j = ordered_json::parse(in);
    for (const auto& e : j.at("estimates")) {
      snoop::MaxTtlEstimate est;
      est.server = e.at("server").get<std::string>();
      est.domain = dns::DomainName::parse(e.at("domain").get<std::string>());
      est.max_ttl = e.at("max_ttl").get<std::uint32_t>();
      est.confirmations = e.at("confirmations").get<int>();
      est.confirmed = e.at("confirmed").get<bool>();
      est.snapped_to_grid = e.value("snapped_to_grid", false);
      if (e.contains("candidates_seen")) {
        for (const auto& [k, v] : e["candidates_seen"].items()) {
          est.candidates_seen[static_cast<std::uint32_t>(std::stoul(k))] = v.get<int>();
        }
      }
      cache[est.domain] = std::move(est);
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path.string(), e.what()));
  }
  return cache;
}

}  // namespace snoopdns::corpus
