#include "snoopdns/corpus/observation_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "snoopdns/error.hpp"

namespace snoopdns::corpus {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

const ordered_json& need(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) bad(fmt::format("record lacks '{}'", key));
  return *it;
}

double need_number(const ordered_json& j, const char* key) {
  const auto& v = need(j, key);
  if (!v.is_number()) bad(fmt::format("'{}' is not a number", key));
  return v.get<double>();
}

std::string need_string(const ordered_json& j, const char* key) {
  const auto& v = need(j, key);
  if (!v.is_string()) bad(fmt::format("'{}' is not a string", key));
  return v.get<std::string>();
}

dns::DomainName need_domain(const ordered_json& j) {
  try {
    return dns::DomainName::parse(need_string(j, "domain"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    bad(e.what());
  }
}

snoop::Method need_method(const ordered_json& j) {
  try {
    return snoop::parse_method(need_string(j, "method"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    bad(e.what());
  }
}

}  // namespace

std::string to_json_line(const ObservationRecord& record) {
  ordered_json j;
  j["schema_version"] = record.schema_version;
  j["scan_id"] = record.scan_id;
  if (const auto* obs = std::get_if<snoop::RefreshObservation>(&record.event)) {
    j["kind"] = "observation";
    j["server"] = obs->server;
    j["domain"] = obs->domain.str();
    j["method"] = snoop::to_string(obs->method);
    j["window_start"] = obs->window_start.count();
    j["window_length"] = obs->window_length.count();
    j["censored"] = obs->censored;
    if (obs->event) {
      j["event"] = {{"delay_after_expiry", obs->event->delay_after_expiry.count()},
                    {"inferred_refresh_time", obs->event->inferred_refresh_time.count()}};
    } else {
      j["event"] = nullptr;
    }
    j["probe_rtt_ms"] = obs->probe_rtt_ms;
  } else {
    const auto& f = std::get<snoop::ProbeFault>(record.event);
    j["kind"] = "fault";
    j["server"] = f.server;
    j["domain"] = f.domain.str();
    j["method"] = snoop::to_string(f.method);
    j["at"] = f.at.count();
    j["code"] = to_string(f.code);
    j["detail"] = f.detail;
  }
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

ObservationRecord from_json_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    bad(fmt::format("not JSON at byte {}", e.byte));
  }
  if (!j.is_object()) bad("record is not an object");
  ObservationRecord r;
  const auto& version = need(j, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    bad(fmt::format("unsupported schema_version {}", version.dump()));
  }
  r.schema_version = kSchemaVersion;
  r.scan_id = need_string(j, "scan_id");
  const std::string kind = need_string(j, "kind");
  if (kind == "observation") {
    snoop::RefreshObservation obs;
    obs.server = need_string(j, "server");
    obs.domain = need_domain(j);
    obs.method = need_method(j);
    obs.window_start = Seconds(need_number(j, "window_start"));
    obs.window_length = Seconds(need_number(j, "window_length"));
    const auto& censored = need(j, "censored");
    if (!censored.is_boolean()) bad("'censored' is not a boolean");
    obs.censored = censored.get<bool>();
    const auto& ev = need(j, "event");
    if (ev.is_object()) {
      obs.event = snoop::RefreshEvent{Seconds(need_number(ev, "delay_after_expiry")),
                                      Seconds(need_number(ev, "inferred_refresh_time"))};
    } else if (!ev.is_null()) {
      bad("'event' must be an object or null");
    }
    obs.probe_rtt_ms = need_number(j, "probe_rtt_ms");
    r.event = std::move(obs);
  } else if (kind == "fault") {
    snoop::ProbeFault f;
    f.server = need_string(j, "server");
    f.domain = need_domain(j);
    f.method = need_method(j);
    f.at = Seconds(need_number(j, "at"));
    const auto code = parse_error_code(need_string(j, "code"));
    if (!code) bad("unknown fault code");
    f.code = *code;
    f.detail = need_string(j, "detail");
    r.event = std::move(f);
  } else {
    bad(fmt::format("unknown record kind '{}'", kind));
  }
  return r;
}

ObservationLog::ObservationLog(const std::filesystem::path& path, std::string scan_id)
    : path_(path), scan_id_(std::move(scan_id)) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, fmt::format("open {}: {}", path.string(), std::strerror(errno)));
}

ObservationLog::~ObservationLog() {
  if (fd_ >= 0) ::close(fd_);
}

void ObservationLog::write_line(const std::string& line) {
  std::lock_guard lk(mu_);
  const ssize_t n = ::write(fd_, line.data(), line.size());
  if (n != static_cast<ssize_t>(line.size())) {
    throw Error(ErrorCode::IoError, fmt::format("append to {}: {}", path_.string(),
                                                n < 0 ? std::strerror(errno) : "short write"));
  }
  ++written_;
}

void ObservationLog::append(const snoop::ScanEvent& event) {
  append(ObservationRecord{kSchemaVersion, scan_id_, event});
}

void ObservationLog::append(const ObservationRecord& record) { write_line(to_json_line(record) + '\n'); }

std::uint64_t ObservationLog::written() const {
  std::lock_guard lk(mu_);
  return written_;
}

std::size_t append_observations(const std::filesystem::path& path, std::span<const ObservationRecord> records) {
  ObservationLog log(path, {});
  for (const auto& r : records) log.append(r);
  return records.size();
}

std::vector<snoop::RefreshObservation> LogContents::observations() const {
  std::vector<snoop::RefreshObservation> out;
  for (const auto& r : records) {
    if (const auto* obs = std::get_if<snoop::RefreshObservation>(&r.event)) out.push_back(*obs);
  }
  return out;
}

std::vector<snoop::ProbeFault> LogContents::faults() const {
  std::vector<snoop::ProbeFault> out;
  for (const auto& r : records) {
    if (const auto* f = std::get_if<snoop::ProbeFault>(&r.event)) out.push_back(*f);
  }
  return out;
}

LogContents parse_observation_log(std::string_view text) {
  LogContents out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      out.records.push_back(from_json_line(line));
    } catch (const Error&) {
      ++out.corrupt;
    }
  }
  return out;
}

LogContents read_observation_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot read {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_observation_log(buf.str());
}

}  // namespace snoopdns::corpus
