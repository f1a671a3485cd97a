#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snoopdns/snoop/observation.hpp"

namespace snoopdns::corpus {

inline constexpr int kSchemaVersion = 1;

struct ObservationRecord {
  int schema_version = kSchemaVersion;
  std::string scan_id;
  snoop::ScanEvent event;

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

/// One JSON object, no trailing newline.
std::string to_json_line(const ObservationRecord& record);
/// Throws Error{ParseError} for anything that is not a complete record of a
/// supported schema version.
ObservationRecord from_json_line(std::string_view line);

/// Append-only JSONL writer. Each record goes out as a single write() on an
/// O_APPEND descriptor, so concurrent writers (threads or processes) never
/// interleave within a line and a crash loses at most the record in flight.
class ObservationLog {
 public:
  /// Creates the file if needed. Throws Error{IoError}.
  ObservationLog(const std::filesystem::path& path, std::string scan_id);
  ~ObservationLog();
  ObservationLog(const ObservationLog&) = delete;
  ObservationLog& operator=(const ObservationLog&) = delete;

  void append(const snoop::ScanEvent& event);
  void append(const ObservationRecord& record);
  std::uint64_t written() const;
  const std::string& scan_id() const { return scan_id_; }

 private:
  void write_line(const std::string& line);

  mutable std::mutex mu_;
  std::filesystem::path path_;
  std::string scan_id_;
  int fd_ = -1;
  std::uint64_t written_ = 0;
};

/// Appends `records` to `path`; returns how many were written.
std::size_t append_observations(const std::filesystem::path& path, std::span<const ObservationRecord> records);

struct LogContents {
  std::vector<ObservationRecord> records;
  /// Lines that failed to parse, including a torn final line.
  std::size_t corrupt = 0;

  std::vector<snoop::RefreshObservation> observations() const;
  std::vector<snoop::ProbeFault> faults() const;
};

/// Throws Error{IoError} when the file cannot be opened.
LogContents read_observation_log(const std::filesystem::path& path);
LogContents parse_observation_log(std::string_view text);

}  // namespace snoopdns::corpus
