#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snoopdns/clock.hpp"
#include "snoopdns/corpus/domain_list.hpp"
#include "snoopdns/snoop/observation.hpp"

namespace snoopdns::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Returns the value of an environment variable, if set.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// "90", "90s", "15m", "2h", "1.5d". Throws Error{ConfigError}.
Seconds parse_duration(std::string_view text);

/// SNOOPDNS_ plus the option name upper-cased, '-' replaced by '_'.
std::string env_name(std::string_view option);

/// Concurrent discovery tasks for a list of `domains` under `rate` qps.
std::size_t pool_size(double rate, std::size_t domains);

struct ScanConfig {
  /// Live resolver address; mutually exclusive with `scenario`.
  std::string server;
  /// Probe an in-process simulated resolver instead of a live one.
  std::optional<std::filesystem::path> scenario;
  std::filesystem::path domains;
  /// Defaults to csv for *.csv files, plain otherwise.
  std::optional<corpus::ListFormat> format;
  snoop::Method method = snoop::Method::ttl_recursive;
  double window_fraction = 1.0;
  double rate = 10;
  std::optional<Seconds> duration;
  std::optional<std::uint64_t> cycles;
  std::optional<std::filesystem::path> out;
  int confirmations = 5;
  std::optional<std::uint64_t> seed;
  bool authorized = false;
  /// Wildcard zone whose fresh subdomains serve as never-cached names.
  std::optional<std::string> canary_zone;
  int calibration_samples = 50;
  bool liveness = false;
  std::optional<std::filesystem::path> reserve;
  std::string scan_id;

  /// Throws Error{ConfigError} naming the offending field.
  void validate() const;
  corpus::ListFormat list_format() const;
};

/// Entry point behind the snoopdns binary. `args` excludes the program name.
/// Precedence is flags, then SNOOPDNS_* variables, then the --config file.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env());

}  // namespace snoopdns::cli
