#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "snoopdns/cli/cli.hpp"

namespace snoopdns::cli {

/// Bad invocation; maps to exit status 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ReportOptions {
  std::filesystem::path log;
  std::optional<std::size_t> top;
  double confidence = 0.95;
  std::optional<std::filesystem::path> csv;
  bool emit_csv = false;
};

struct SimulateOptions {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> bind;
  std::optional<Seconds> serve_for;
  std::optional<std::filesystem::path> out;
};

int cmd_discover_ttl(const ScanConfig& config, std::ostream& out, std::ostream& err);
int cmd_snoop(const ScanConfig& config, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

}  // namespace snoopdns::cli
