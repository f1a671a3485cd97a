#include "snoopdns/snoop/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::snoop {

namespace {

struct SockAddr {
  sockaddr_storage storage{};
  socklen_t len = 0;
};

SockAddr to_sockaddr(const Endpoint& ep) {
  SockAddr out;
  auto* v4 = reinterpret_cast<sockaddr_in*>(&out.storage);
  auto* v6 = reinterpret_cast<sockaddr_in6*>(&out.storage);
  if (inet_pton(AF_INET, ep.host.c_str(), &v4->sin_addr) == 1) {
    v4->sin_family = AF_INET;
    v4->sin_port = htons(ep.port);
    out.len = sizeof(sockaddr_in);
  } else if (inet_pton(AF_INET6, ep.host.c_str(), &v6->sin6_addr) == 1) {
    v6->sin6_family = AF_INET6;
    v6->sin6_port = htons(ep.port);
    out.len = sizeof(sockaddr_in6);
  } else {
    throw Error(ErrorCode::ConfigError, fmt::format("'{}' is not a numeric IPv4/IPv6 address", ep.host));
  }
  return out;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  std::string_view port;
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string_view::npos) throw Error(ErrorCode::ConfigError, fmt::format("bad address '{}'", text));
    ep.host = std::string(text.substr(1, close - 1));
    auto rest = text.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') throw Error(ErrorCode::ConfigError, fmt::format("bad address '{}'", text));
      port = rest.substr(1);
    }
  } else if (std::count(text.begin(), text.end(), ':') == 1) {
    const auto colon = text.find(':');
    ep.host = std::string(text.substr(0, colon));
    port = text.substr(colon + 1);
  } else {
    ep.host = std::string(text);
  }
  if (!port.empty()) {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
      throw Error(ErrorCode::ConfigError, fmt::format("bad port in '{}'", text));
    }
    ep.port = static_cast<std::uint16_t>(value);
  }
  to_sockaddr(ep);
  return ep;
}

std::string Endpoint::str() const {
  if (host.find(':') != std::string::npos) return fmt::format("[{}]:{}", host, port);
  return fmt::format("{}:{}", host, port);
}

bool Endpoint::is_loopback() const {
  in_addr v4{};
  if (inet_pton(AF_INET, host.c_str(), &v4) == 1) return (ntohl(v4.s_addr) >> 24) == 127;
  return host == "::1";
}

UdpTransport::UdpTransport(const Endpoint& server) {
  const SockAddr addr = to_sockaddr(server);
  fd_ = ::socket(addr.storage.ss_family, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error(ErrorCode::IoError, fmt::format("socket: {}", std::strerror(errno)));
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr.storage), addr.len) != 0) {
    const int err = errno;
    ::close(fd_);
    throw Error(ErrorCode::IoError, fmt::format("connect {}: {}", server.str(), std::strerror(err)));
  }
}

UdpTransport::~UdpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<Reply> UdpTransport::exchange(std::span<const std::uint8_t> query, Seconds timeout) {
  using steady = std::chrono::steady_clock;
  if (query.size() < 2) return std::nullopt;
  const auto start = steady::now();
  const auto deadline = start + std::chrono::duration_cast<steady::duration>(timeout);
  if (::send(fd_, query.data(), query.size(), 0) < 0) return std::nullopt;

  std::uint8_t buf[65535];
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - steady::now()).count();
    if (left <= 0) return std::nullopt;
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) return std::nullopt;
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0) {
      // ECONNREFUSED from an ICMP port-unreachable: keep waiting out the timeout.
      if (errno == EINTR || errno == ECONNREFUSED) continue;
      return std::nullopt;
    }
    if (n < 2 || buf[0] != query[0] || buf[1] != query[1]) continue;
    Reply r;
    r.packet.assign(buf, buf + n);
    r.rtt_ms = std::chrono::duration<double, std::milli>(steady::now() - start).count();
    return r;
  }
}

RateLimiter::RateLimiter(double per_second) : rate_(per_second) {
  if (!(per_second > 0)) throw Error(ErrorCode::ConfigError, "rate cap must be positive");
  cap_ = static_cast<std::size_t>(std::max(1.0, std::floor(per_second)));
  window_ = Seconds(static_cast<double>(cap_) / per_second);
}

Seconds RateLimiter::reserve(Seconds now) {
  std::lock_guard lk(mu_);
  Seconds at = now;
  if (!recent_.empty()) at = std::max(at, recent_.back());
  if (recent_.size() >= cap_) at = std::max(at, recent_[recent_.size() - cap_] + window_);
  recent_.push_back(at);
  while (recent_.size() > cap_) recent_.pop_front();
  return at;
}

Resolver::Resolver(std::string server_label, Transport& transport, Clock& clock, RateLimiter* limiter,
                   QueryPolicy policy, std::uint64_t seed)
    : server_(std::move(server_label)),
      transport_(transport),
      clock_(clock),
      limiter_(limiter),
      policy_(policy),
      ids_(seed) {}

QueryOutcome Resolver::query(const dns::DomainName& name, bool recursion_desired, dns::RecordType qtype) {
  for (int attempt = 0; attempt < policy_.attempts; ++attempt) {
    dns::DnsQuery q;
    q.id = static_cast<std::uint16_t>(ids_());
    q.qname = name;
    q.qtype = qtype;
    q.recursion_desired = recursion_desired;
    const dns::Bytes packet = dns::encode_query(q);

    if (limiter_) clock_.sleep_until(limiter_->reserve(clock_.now()));
    const Seconds sent_at = clock_.now();
    ++sent_;
    auto reply = transport_.exchange(packet, policy_.timeout);
    if (!reply) continue;
    try {
      QueryOutcome out{dns::decode_response(reply->packet), sent_at, reply->rtt_ms};
      if (out.response.id != q.id || !out.response.is_response) continue;
      if (out.response.questions.size() != 1 || out.response.questions[0].name != name) continue;
      return out;
    } catch (const Error&) {
      continue;
    }
  }
  throw Error(ErrorCode::Timeout, fmt::format("{} via {}: no reply after {} attempts", name.str(), server_,
                                              policy_.attempts));
}

}  // namespace snoopdns::snoop
