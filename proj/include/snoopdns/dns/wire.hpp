#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "snoopdns/dns/name.hpp"

namespace snoopdns::dns {

using Bytes = std::vector<std::uint8_t>;

/// Record type codes. Values outside the named set are carried through
/// unchanged (static_cast from the wire value).
enum class RecordType : std::uint16_t {
  A = 1,
  NS = 2,
  CNAME = 5,
  SOA = 6,
  AAAA = 28,
};

enum class RecordClass : std::uint16_t {
  IN = 1,
};

enum class Rcode : std::uint8_t {
  NoError = 0,
  FormErr = 1,
  ServFail = 2,
  NxDomain = 3,
  NotImp = 4,
  Refused = 5,
};

inline constexpr std::uint16_t kFlagQr = 0x8000;
inline constexpr std::uint16_t kFlagAa = 0x0400;
inline constexpr std::uint16_t kFlagTc = 0x0200;
inline constexpr std::uint16_t kFlagRd = 0x0100;
inline constexpr std::uint16_t kFlagRa = 0x0080;
inline constexpr std::size_t kHeaderSize = 12;
inline constexpr std::uint32_t kMaxTtl = 0x7fffffff;

struct DnsQuery {
  std::uint16_t id = 0;
  DomainName qname;
  RecordType qtype = RecordType::A;
  RecordClass qclass = RecordClass::IN;
  bool recursion_desired = true;

  friend bool operator==(const DnsQuery&, const DnsQuery&) = default;
};

struct Question {
  DomainName name;
  RecordType type = RecordType::A;
  RecordClass klass = RecordClass::IN;

  friend bool operator==(const Question&, const Question&) = default;
};

struct ResourceRecord {
  DomainName name;
  RecordType rtype = RecordType::A;
  RecordClass rclass = RecordClass::IN;
  std::uint32_t ttl = 0;
  /// Payload exactly as it appeared on the wire.
  Bytes rdata;
  /// Decoded target for CNAME records; rdata may hold compression pointers
  /// that are only meaningful inside the original packet.
  std::optional<DomainName> cname_target;

  friend bool operator==(const ResourceRecord&, const ResourceRecord&) = default;
};

struct DnsResponse {
  std::uint16_t id = 0;
  Rcode rcode = Rcode::NoError;
  bool is_response = true;
  bool authoritative = false;
  bool truncated = false;
  bool recursion_desired = false;
  bool recursion_available = false;
  std::vector<Question> questions;
  std::vector<ResourceRecord> answers;
  std::vector<ResourceRecord> authority;
  std::vector<ResourceRecord> additional;
};

/// Builds a query with exactly one question. Throws Error{InvalidName}.
Bytes encode_query(const DnsQuery& query);

/// Parses any DNS message. Never reads outside `packet`; every structural
/// problem is reported as Error{Malformed}.
DnsResponse decode_response(std::span<const std::uint8_t> packet);

/// Server-side parse of a single-question query. Throws Error{Malformed}.
DnsQuery decode_query(std::span<const std::uint8_t> packet);

/// Serializes a response, compressing repeated name suffixes.
Bytes encode_response(const DnsResponse& response);

/// Minimum TTL along the answer chain for `qname`, following CNAMEs present in
/// the same response. Empty when nothing in the answer section applies.
std::optional<std::uint32_t> min_answer_ttl(const DnsResponse& response, const DomainName& qname);

ResourceRecord make_a_record(const DomainName& name, std::uint32_t ttl, std::uint32_t ipv4);
ResourceRecord make_cname_record(const DomainName& name, std::uint32_t ttl, const DomainName& target);

}  // namespace snoopdns::dns
