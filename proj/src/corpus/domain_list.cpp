#include "snoopdns/corpus/domain_list.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::corpus {

namespace {

constexpr std::size_t kMaxInvalidSamples = 10;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

/// RFC 4180 fields; quotes may not span lines.
std::vector<std::string> split_csv(std::string_view line, std::size_t lineno) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, fmt::format("line {}: unterminated quote", lineno));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void note_invalid(DomainList& list, std::string_view raw) {
  ++list.invalid;
  if (list.invalid_samples.size() < kMaxInvalidSamples) list.invalid_samples.emplace_back(raw);
}

std::optional<dns::DomainName> normalize(std::string_view raw) {
  try {
    auto name = dns::DomainName::parse(trim(raw));
    if (is_hostname(name)) return name;
  } catch (const Error&) {
  }
  return std::nullopt;
}

void parse_plain(DomainList& list, std::string_view text) {
  for (std::string_view line : split_lines(text)) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (auto name = normalize(line)) {
      list.add(DomainEntry{*name, std::nullopt, {}});
    } else {
      note_invalid(list, line);
    }
  }
}

void parse_csv(DomainList& list, std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t lineno = 0;
  std::optional<std::size_t> domain_col;
  std::optional<std::size_t> rank_col;
  std::optional<std::size_t> tags_col;
  for (std::string_view line : lines) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line, lineno);
    if (!domain_col) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string h = dns::to_lower_ascii(trim(fields[i]));
        if (h == "domain") domain_col = i;
        if (h == "globalrank" || h == "rank") rank_col = rank_col.value_or(i);
        if (h == "tags") tags_col = i;
      }
      if (!domain_col) throw Error(ErrorCode::ParseError, fmt::format("line {}: header has no Domain column", lineno));
      continue;
    }
    if (fields.size() <= *domain_col) {
      throw Error(ErrorCode::ParseError,
                  fmt::format("line {}: {} fields, Domain is column {}", lineno, fields.size(), *domain_col + 1));
    }
    DomainEntry e;
    if (rank_col && *rank_col < fields.size() && !trim(fields[*rank_col]).empty()) {
      const std::string_view r = trim(fields[*rank_col]);
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), v);
      if (ec != std::errc{} || ptr != r.data() + r.size() || v == 0) {
        throw Error(ErrorCode::ParseError, fmt::format("line {}: rank '{}' is not a positive integer", lineno, r));
      }
      e.source_rank = v;
    }
    if (tags_col && *tags_col < fields.size()) {
      std::string_view rest = fields[*tags_col];
      while (!rest.empty()) {
        const auto semi = rest.find(';');
        const std::string_view tag = trim(rest.substr(0, semi));
        if (!tag.empty()) e.tags.emplace(tag);
        if (semi == std::string_view::npos) break;
        rest.remove_prefix(semi + 1);
      }
    }
    auto name = normalize(fields[*domain_col]);
    if (!name) {
      note_invalid(list, fields[*domain_col]);
      continue;
    }
    e.domain = std::move(*name);
    list.add(std::move(e));
  }
}

}  // namespace

bool DomainList::add(DomainEntry entry) {
  if (index_.size() != entries.size()) {
    index_.clear();
    for (const auto& e : entries) index_.insert(e.domain);
  }
  if (!index_.insert(entry.domain).second) return false;
  entries.push_back(std::move(entry));
  return true;
}

bool is_hostname(const dns::DomainName& name) {
  if (name.labels().size() < 2) return false;
  for (const auto& label : name.labels()) {
    for (unsigned char c : label) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
      if (!ok) return false;
    }
  }
  return true;
}

ListFormat parse_list_format(std::string_view s) {
  if (s == "csv") return ListFormat::csv;
  if (s == "plain") return ListFormat::plain;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown list format '{}' (csv or plain)", s));
}

DomainList parse_domain_list(std::string_view text, ListFormat format, std::string source) {
  DomainList list;
  list.source = std::move(source);
  if (format == ListFormat::csv) {
    parse_csv(list, text);
  } else {
    parse_plain(list, text);
  }
  return list;
}

DomainList load_domain_list(const std::filesystem::path& path, ListFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot read {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_domain_list(buf.str(), format, path.string());
}

std::string format_domain_list(const DomainList& list) {
  std::string out = "rank,domain,tags\n";
  for (const auto& e : list.entries) {
    std::string tags;
    for (const auto& t : e.tags) {
      if (!tags.empty()) tags += ';';
      tags += t;
    }
    out += fmt::format("{},{},{}\n", e.source_rank ? fmt::format("{}", *e.source_rank) : std::string{},
                       csv_field(e.domain.str()), csv_field(tags));
  }
  return out;
}

void save_domain_list(const DomainList& list, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out << format_domain_list(list);
  if (!out.flush()) throw Error(ErrorCode::IoError, fmt::format("write to {} failed", path.string()));
}

}  // namespace snoopdns::corpus
