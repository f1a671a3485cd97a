#pragma once

#include <filesystem>
#include <map>
#include <span>

#include "snoopdns/snoop/discovery.hpp"

namespace snoopdns::corpus {

/// Discovered max TTLs keyed by domain, as saved next to a scan log.
using TtlCache = std::map<dns::DomainName, snoop::MaxTtlEstimate>;

/// Conventional location: "<log>.ttl.json".
std::filesystem::path ttl_cache_path(const std::filesystem::path& log);

void save_ttl_cache(const std::filesystem::path& path, std::span<const snoop::MaxTtlEstimate> estimates);
/// Returns an empty cache when the file does not exist; Error{ParseError}
/// when it exists but is unreadable.
TtlCache load_ttl_cache(const std::filesystem::path& path);

}  // namespace snoopdns::corpus
