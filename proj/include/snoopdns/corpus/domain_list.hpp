#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "snoopdns/dns/name.hpp"

namespace snoopdns::corpus {

struct DomainEntry {
  dns::DomainName domain;
  std::optional<std::uint64_t> source_rank;
  std::set<std::string> tags;

  friend bool operator==(const DomainEntry&, const DomainEntry&) = default;
};

struct DomainList {
  std::vector<DomainEntry> entries;
  std::string source;
  /// Rows skipped because the name was not a usable hostname.
  std::size_t invalid = 0;
  std::vector<std::string> invalid_samples;

  std::size_t size() const { return entries.size(); }
  /// Appends unless the domain is already present; returns whether it was added.
  bool add(DomainEntry entry);

  friend bool operator==(const DomainList& a, const DomainList& b) {
    return a.entries == b.entries && a.source == b.source;
  }

 private:
  std::unordered_set<dns::DomainName> index_;
};

/// csv: header row with a Domain column, optional GlobalRank/rank and tags
/// (';'-separated) columns. plain: one name per line, '#' starts a comment.
enum class ListFormat { csv, plain };

/// "csv" or "plain"; Error{ConfigError} otherwise.
ListFormat parse_list_format(std::string_view s);

/// Throws Error{ParseError} with the offending line number for structural
/// problems. Unusable names are skipped and counted.
DomainList parse_domain_list(std::string_view text, ListFormat format, std::string source = {});
DomainList load_domain_list(const std::filesystem::path& path, ListFormat format);

/// Writes the csv form, which load_domain_list reads back identically.
std::string format_domain_list(const DomainList& list);
void save_domain_list(const DomainList& list, const std::filesystem::path& path);

/// Letters, digits, '-' and '_' only, at least two labels.
bool is_hostname(const dns::DomainName& name);

}  // namespace snoopdns::corpus
