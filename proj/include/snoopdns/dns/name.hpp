#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace snoopdns::dns {

inline constexpr std::size_t kMaxLabelLength = 63;
inline constexpr std::size_t kMaxNameWireLength = 255;

/// A domain name held as lower-cased labels. Two names that differ only in
/// ASCII case are the same value. The empty label list is the root.
class DomainName {
 public:
  DomainName() = default;

  /// Parses presentation form ("www.Example.com" or "www.example.com.").
  /// Throws Error{InvalidName} on empty/oversized labels or names.
  static DomainName parse(std::string_view text);
  static DomainName from_labels(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  bool is_root() const { return labels_.empty(); }

  /// Presentation form without the trailing dot; "." for the root. Bytes that
  /// are not printable, and literal dots inside labels, are written as \DDD.
  std::string str() const;

  /// Encoded size including length octets and the terminating zero.
  std::size_t wire_length() const;

  bool is_subdomain_of(const DomainName& parent) const;
  DomainName prepend(std::string_view label) const;
  DomainName parent() const;

  friend auto operator<=>(const DomainName&, const DomainName&) = default;
  friend bool operator==(const DomainName&, const DomainName&) = default;

 private:
  explicit DomainName(std::vector<std::string> labels) : labels_(std::move(labels)) {}

  std::vector<std::string> labels_;
};

std::string to_lower_ascii(std::string_view s);

}  // namespace snoopdns::dns

template <>
struct std::hash<snoopdns::dns::DomainName> {
  std::size_t operator()(const snoopdns::dns::DomainName& n) const noexcept {
    return std::hash<std::string>{}(n.str());
  }
};
