#include "snoopdns/stats/report.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::stats {

namespace {

constexpr std::array<const char*, 8> kColumns = {"rank",          "domain", "lambda_per_s",    "ci_half_width",
                                                 "mean_refresh_period_s", "events", "observed_seconds", "cycles"};

std::array<std::string, 8> cells(const ArrivalEstimate& e) {
  return {fmt::format("{}", e.rank),
          e.domain.str(),
          fmt::format("{:.6e}", e.lambda_hat),
          fmt::format("{:.6e}", e.ci_half_width),
          e.mean_refresh_period ? fmt::format("{:.3f}", *e.mean_refresh_period) : std::string{},
          fmt::format("{}", e.events),
          fmt::format("{:.3f}", e.observed_seconds),
          fmt::format("{}", e.cycles)};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Report build_report(std::span<const snoop::RefreshObservation> observations, std::optional<std::size_t> top_n,
                    double confidence) {
  Aggregate agg = aggregate(observations);
  if (agg.domains.empty()) {
    throw Error(ErrorCode::EmptyLog, fmt::format("no usable observations ({} skipped)", agg.skipped));
  }
  std::vector<ArrivalEstimate> estimates;
  estimates.reserve(agg.domains.size());
  for (const auto& [name, s] : agg.domains) estimates.push_back(estimate(s, confidence));
  Report r;
  r.domains = agg.domains.size();
  r.skipped_records = agg.skipped;
  r.rows = rank_domains(std::move(estimates), top_n);
  return r;
}

std::string to_csv(std::span<const ArrivalEstimate> rows) {
  std::string out;
  for (std::size_t i = 0; i < kColumns.size(); ++i) {
    out += (i ? "," : "");
    out += kColumns[i];
  }
  out += '\n';
  for (const auto& e : rows) {
    const auto c = cells(e);
    for (std::size_t i = 0; i < c.size(); ++i) {
      out += (i ? "," : "");
      out += csv_field(c[i]);
    }
    out += '\n';
  }
  return out;
}

std::string to_table(std::span<const ArrivalEstimate> rows) {
  std::vector<std::array<std::string, 8>> grid;
  std::array<std::string, 8> header;
  for (std::size_t i = 0; i < kColumns.size(); ++i) header[i] = kColumns[i];
  grid.push_back(header);
  for (const auto& e : rows) grid.push_back(cells(e));

  std::array<std::size_t, 8> width{};
  for (const auto& row : grid) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      // Domain names read best left-aligned, numbers right-aligned.
      line += i == 1 ? fmt::format("{:<{}}", row[i], width[i]) : fmt::format("{:>{}}", row[i], width[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

}  // namespace snoopdns::stats
