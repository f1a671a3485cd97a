#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "snoopdns/clock.hpp"
#include "snoopdns/dns/wire.hpp"

namespace snoopdns::snoop {

/// Numeric resolver address: "192.0.2.1", "192.0.2.1:5353", "::1" or "[::1]:5353".
struct Endpoint {
  std::string host;
  std::uint16_t port = 53;

  static Endpoint parse(std::string_view text);
  std::string str() const;
  bool is_loopback() const;
};

struct Reply {
  dns::Bytes packet;
  double rtt_ms = 0;
};

/// One request/response exchange. Implementations return nullopt when no
/// matching reply arrives within the timeout.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::optional<Reply> exchange(std::span<const std::uint8_t> query, Seconds timeout) = 0;
};

/// Connected UDP socket toward one server. Replies whose transaction id does
/// not match the outstanding query are discarded.
class UdpTransport final : public Transport {
 public:
  explicit UdpTransport(const Endpoint& server);
  ~UdpTransport() override;
  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  std::optional<Reply> exchange(std::span<const std::uint8_t> query, Seconds timeout) override;

 private:
  int fd_ = -1;
};

/// Caps sends toward one server at `per_second`. Grants are FIFO: each
/// reservation is no earlier than the previous one and keeps at most
/// floor(per_second) sends inside any half-open one-second window.
/// Safe for concurrent use.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second);

  /// Reserves the earliest permitted send time at or after `now`.
  Seconds reserve(Seconds now);
  double rate() const { return rate_; }

 private:
  std::mutex mu_;
  double rate_;
  std::size_t cap_;
  Seconds window_;
  std::deque<Seconds> recent_;
};

struct QueryPolicy {
  Seconds timeout{2.0};
  int attempts = 3;
};

struct QueryOutcome {
  dns::DnsResponse response;
  Seconds sent_at{0};
  double rtt_ms = 0;
};

/// Issues snooping queries toward a single server: rate limiting, fresh
/// transaction ids per attempt, reply validation and retries.
class Resolver {
 public:
  Resolver(std::string server_label, Transport& transport, Clock& clock, RateLimiter* limiter,
           QueryPolicy policy = {}, std::uint64_t seed = 1);

  /// Throws Error{Timeout} when every attempt is lost.
  QueryOutcome query(const dns::DomainName& name, bool recursion_desired) {
    return query(name, recursion_desired, qtype_);
  }
  QueryOutcome query(const dns::DomainName& name, bool recursion_desired, dns::RecordType qtype);

  const std::string& server() const { return server_; }
  Clock& clock() { return clock_; }
  std::uint64_t queries_sent() const { return sent_; }
  dns::RecordType default_qtype() const { return qtype_; }
  void set_default_qtype(dns::RecordType t) { qtype_ = t; }

 private:
  std::string server_;
  Transport& transport_;
  Clock& clock_;
  RateLimiter* limiter_;
  QueryPolicy policy_;
  std::mt19937_64 ids_;
  std::uint64_t sent_ = 0;
  dns::RecordType qtype_ = dns::RecordType::A;
};

}  // namespace snoopdns::snoop
