#include "snoopdns/cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "commands.hpp"
#include "snoopdns/error.hpp"

namespace snoopdns::cli {

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

Seconds parse_duration(std::string_view text) {
  double value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  double unit = 1;
  if (ec == std::errc() && ptr + 1 == last) {
    switch (*ptr) {
      case 's': unit = 1; break;
      case 'm': unit = 60; break;
      case 'h': unit = 3600; break;
      case 'd': unit = 86400; break;
      default: ec = std::errc::invalid_argument;
    }
  } else if (ptr != last) {
    ec = std::errc::invalid_argument;
  }
  if (ec != std::errc() || !std::isfinite(value) || value < 0) {
    throw Error(ErrorCode::ConfigError, fmt::format("bad duration '{}' (expected e.g. 90, 90s, 15m, 2h, 1d)", text));
  }
  return Seconds(value * unit);
}

std::string env_name(std::string_view option) {
  std::string out = "SNOOPDNS_";
  for (char c : option) {
    out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::size_t pool_size(double rate, std::size_t domains) {
  // Discovery workers spend most of their time waiting for records to
  // expire, so several share each query per second.
  const auto by_rate = static_cast<std::size_t>(std::max(1.0, std::ceil(4 * rate)));
  return std::min(domains, by_rate);
}

void ScanConfig::validate() const {
  if (scenario && !server.empty()) throw Error(ErrorCode::ConfigError, "--server and --scenario are exclusive");
  if (!scenario && server.empty()) throw Error(ErrorCode::ConfigError, "one of --server or --scenario is required");
  if (!(rate > 0)) throw Error(ErrorCode::ConfigError, fmt::format("--rate must be > 0, got {}", rate));
  if (!(window_fraction > 0) || window_fraction > 1) {
    throw Error(ErrorCode::ConfigError, fmt::format("--window-fraction must lie in (0, 1], got {}", window_fraction));
  }
  if (duration && !(duration->count() > 0)) {
    throw Error(ErrorCode::ConfigError, fmt::format("--duration must be > 0, got {}s", duration->count()));
  }
  if (cycles && *cycles == 0) throw Error(ErrorCode::ConfigError, "--cycles must be > 0");
  if (confirmations < 1) throw Error(ErrorCode::ConfigError, "--confirmations must be >= 1");
}

corpus::ListFormat ScanConfig::list_format() const {
  if (format) return *format;
  return domains.extension() == ".csv" ? corpus::ListFormat::csv : corpus::ListFormat::plain;
}

namespace {

struct ScanFlags {
  std::string format;
  std::string method = "ttl_recursive";
  std::string duration;
  std::string scenario;
  std::string out;
  std::string canary_zone;
  std::string reserve;
  std::uint64_t cycles = 0;
  std::uint64_t seed = 0;
};

void add_target_options(CLI::App* cmd, ScanConfig& c, ScanFlags& f) {
  cmd->add_option("--server", c.server, "Resolver address, e.g. 192.0.2.1 or [2001:db8::1]:53");
  cmd->add_option("--scenario", f.scenario, "Probe a simulated resolver described by this scenario file");
  cmd->add_option("--domains", c.domains, "Domain list")->required();
  cmd->add_option("--format", f.format, "Domain list format")->check(CLI::IsMember({"csv", "plain"}));
  cmd->add_option("--rate", c.rate, "Query rate cap toward the server, per second")->capture_default_str();
  cmd->add_option("--confirmations", c.confirmations, "Sightings needed to confirm a max TTL")
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for query ids, canaries and simulated runs");
  cmd->add_flag("--authorized", c.authorized,
                "Acknowledge you have permission to probe a non-loopback server")
      ->configurable(false);
}

ScanConfig finish(ScanConfig c, const ScanFlags& f, const CLI::App* cmd) {
  if (!f.scenario.empty()) c.scenario = f.scenario;
  if (!f.format.empty()) c.format = corpus::parse_list_format(f.format);
  c.method = snoop::parse_method(f.method);
  if (!f.duration.empty()) c.duration = parse_duration(f.duration);
  if (const auto* opt = cmd->get_option_no_throw("--cycles"); opt && opt->count()) c.cycles = f.cycles;
  if (!f.out.empty()) c.out = f.out;
  if (!f.canary_zone.empty()) c.canary_zone = f.canary_zone;
  if (!f.reserve.empty()) c.reserve = f.reserve;
  if (cmd->count("--seed")) c.seed = f.seed;
  if (c.scan_id.empty()) {
    c.scan_id = c.scenario ? fmt::format("sim-{}", c.scenario->stem().string())
                           : fmt::format("scan-{:%Y%m%dT%H%M%SZ}", fmt::gmtime(std::time(nullptr)));
  }
  c.validate();
  return c;
}

bool on_command_line(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || (a.size() > flag.size() && a.compare(0, flag.size() + 1, flag + "=") == 0);
  });
}

/// CLI11 lets a config file override environment variables, so environment
/// values are turned into flags for options the command line left unset.
std::vector<std::string> with_env(const CLI::App& app, std::vector<std::string> args, const EnvLookup& env) {
  const CLI::App* sub = nullptr;
  for (const auto& a : args) {
    for (const CLI::App* s : app.get_subcommands({})) {
      if (s->get_name() == a) sub = s;
    }
    if (sub) break;
  }
  auto collect = [&](const CLI::App& scope) {
    std::vector<std::string> injected;
    for (const CLI::Option* opt : scope.get_options()) {
      const bool config_file = opt == app.get_config_ptr();
      if (opt->get_lnames().empty() || (!opt->get_configurable() && !config_file)) continue;
      const std::string& name = opt->get_lnames().front();
      if (on_command_line(args, name)) continue;
      if (auto v = env(env_name(name))) injected.push_back(fmt::format("--{}={}", name, *v));
    }
    return injected;
  };
  auto front = collect(app);
  args.insert(args.begin(), front.begin(), front.end());
  if (sub) {
    auto back = collect(*sub);
    args.insert(args.end(), back.begin(), back.end());
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"DNS cache snooping toolkit: infer how often a resolver's users look up each domain.", "snoopdns"};
  app.require_subcommand(1);
  // Main-app options such as --config may follow the subcommand too.
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file with one [section] per subcommand");
  app.set_version_flag("--version", SNOOPDNS_VERSION);

  ScanConfig discover_cfg;
  ScanFlags discover_flags;
  CLI::App* discover = app.add_subcommand("discover-ttl", "Find the maximum TTL the server assigns to each domain");
  add_target_options(discover, discover_cfg, discover_flags);
  discover->add_option("--out", discover_flags.out, "Scan log path; max TTLs are saved to <out>.ttl.json");
  discover->add_flag("--liveness", discover_cfg.liveness, "Drop domains that never resolve");
  discover->add_option("--reserve", discover_flags.reserve, "List used to replace dead domains");

  ScanConfig snoop_cfg;
  ScanFlags snoop_flags;
  CLI::App* snoop_cmd = app.add_subcommand("snoop", "Probe the server and log cache refresh observations");
  add_target_options(snoop_cmd, snoop_cfg, snoop_flags);
  snoop_cmd->add_option("--method", snoop_flags.method, "Probe method")
      ->check(CLI::IsMember({"ttl_recursive", "rd0", "timing"}))
      ->capture_default_str();
  snoop_cmd->add_option("--window-fraction", snoop_cfg.window_fraction, "Observation window as a fraction of max TTL")
      ->capture_default_str();
  snoop_cmd->add_option("--duration", snoop_flags.duration, "Scan length, e.g. 3600, 90m, 48h");
  snoop_cmd->add_option("--cycles", snoop_flags.cycles, "Probe cycles per domain");
  snoop_cmd->add_option("--out", snoop_flags.out, "Observation log (JSONL, appended)")->required();
  snoop_cmd->add_option("--canary-zone", snoop_flags.canary_zone,
                        "Wildcard zone for never-cached names (RD=0 check, timing calibration)");
  snoop_cmd->add_option("--calibration-samples", snoop_cfg.calibration_samples, "Samples per class for timing")
      ->capture_default_str();
  snoop_cmd->add_option("--scan-id", snoop_cfg.scan_id, "Identifier stored with every record");

  ReportOptions report_opts;
  std::string emit = "table";
  std::string csv_path;
  CLI::App* report = app.add_subcommand("report", "Rank domains by estimated lookup rate");
  report->add_option("log", report_opts.log, "Observation log")->required();
  report->add_option("--top", report_opts.top, "Only the N highest-ranked domains");
  report->add_option("--confidence", report_opts.confidence, "Confidence level of the interval")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  report->add_option("--csv", csv_path, "Also write the CSV to this file");
  report->add_option("--emit", emit, "Format printed to stdout")->check(CLI::IsMember({"table", "csv"}));

  SimulateOptions sim_opts;
  std::string serve_for;
  std::string sim_out;
  std::uint64_t sim_seed = 0;
  std::string bind;
  CLI::App* simulate = app.add_subcommand("simulate", "Serve a simulated resolver or run a virtual batch scan");
  simulate->add_option("scenario", sim_opts.scenario, "Scenario file (JSON)")->required();
  simulate->add_option("--seed", sim_seed, "Override the scenario seed");
  simulate->add_option("--bind", bind, "Listen address for realtime scenarios");
  simulate->add_option("--serve-for", serve_for, "Stop serving after this long (default: until interrupted)");
  simulate->add_option("--out", sim_out, "Write batch observations to this log");

  std::vector<std::string> argv = with_env(app, args, env);
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(std::move(argv));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  std::optional<ScanConfig> scan;
  try {
    if (discover->parsed()) scan = finish(discover_cfg, discover_flags, discover);
    if (snoop_cmd->parsed()) scan = finish(snoop_cfg, snoop_flags, snoop_cmd);
    if (report->parsed()) {
      if (report->count("--confidence") && !(report_opts.confidence > 0 && report_opts.confidence < 1)) {
        throw Error(ErrorCode::ConfigError, "--confidence must lie strictly between 0 and 1");
      }
      if (!csv_path.empty()) report_opts.csv = csv_path;
      report_opts.emit_csv = emit == "csv";
    }
    if (simulate->parsed()) {
      if (simulate->count("--seed")) sim_opts.seed = sim_seed;
      if (!bind.empty()) sim_opts.bind = bind;
      if (!serve_for.empty()) sim_opts.serve_for = parse_duration(serve_for);
      if (!sim_out.empty()) sim_opts.out = sim_out;
    }
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  }

  try {
    if (discover->parsed()) return cmd_discover_ttl(*scan, out, err);
    if (snoop_cmd->parsed()) return cmd_snoop(*scan, out, err);
    if (report->parsed()) return cmd_report(report_opts, out, err);
    return cmd_simulate(sim_opts, out, err);
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace snoopdns::cli
