#include "snoopdns/sim/endpoint.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::sim {

std::optional<snoop::Reply> SimTransport::exchange(std::span<const std::uint8_t> query, Seconds timeout) {
  if (offline_) {
    clock_.sleep_for(timeout);
    return std::nullopt;
  }
  auto answer = sim_.handle_packet(query, clock_.now());
  const double timeout_ms = timeout.count() * 1000;
  if (!answer || answer->second > timeout_ms) {
    clock_.sleep_for(timeout);
    return std::nullopt;
  }
  clock_.sleep_for(Seconds(answer->second / 1000));
  return snoop::Reply{std::move(answer->first), answer->second};
}

struct UdpEndpoint::Pending {
  Seconds due{0};
  sockaddr_storage peer{};
  socklen_t peer_len = 0;
  dns::Bytes packet;
};

namespace {

socklen_t fill_addr(const snoop::Endpoint& ep, sockaddr_storage& ss) {
  std::memset(&ss, 0, sizeof ss);
  auto* v4 = reinterpret_cast<sockaddr_in*>(&ss);
  if (inet_pton(AF_INET, ep.host.c_str(), &v4->sin_addr) == 1) {
    v4->sin_family = AF_INET;
    v4->sin_port = htons(ep.port);
    return sizeof(sockaddr_in);
  }
  auto* v6 = reinterpret_cast<sockaddr_in6*>(&ss);
  if (inet_pton(AF_INET6, ep.host.c_str(), &v6->sin6_addr) == 1) {
    v6->sin6_family = AF_INET6;
    v6->sin6_port = htons(ep.port);
    return sizeof(sockaddr_in6);
  }
  throw Error(ErrorCode::BindError, fmt::format("cannot bind to '{}'", ep.host));
}

}  // namespace

UdpEndpoint::UdpEndpoint(Sim& sim, const snoop::Endpoint& bind) : sim_(sim), local_(bind) {
  sockaddr_storage ss{};
  const socklen_t len = fill_addr(bind, ss);
  fd_ = ::socket(ss.ss_family, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error(ErrorCode::BindError, fmt::format("socket: {}", std::strerror(errno)));
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&ss), len) != 0) {
    const int err = errno;
    ::close(fd_);
    throw Error(ErrorCode::BindError, fmt::format("bind {}: {}", bind.str(), std::strerror(err)));
  }
  sockaddr_storage got{};
  socklen_t got_len = sizeof got;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&got), &got_len);
  local_.port = ntohs(got.ss_family == AF_INET ? reinterpret_cast<sockaddr_in*>(&got)->sin_port
                                               : reinterpret_cast<sockaddr_in6*>(&got)->sin6_port);
  receiver_ = std::thread([this] { receive_loop(); });
  sender_ = std::thread([this] { send_loop(); });
}

UdpEndpoint::~UdpEndpoint() { stop(); }

void UdpEndpoint::stop() {
  if (stopping_.exchange(true)) return;
  cv_.notify_all();
  if (receiver_.joinable()) receiver_.join();
  if (sender_.joinable()) sender_.join();
  ::close(fd_);
}

void UdpEndpoint::receive_loop() {
  std::vector<std::uint8_t> buf(65535);
  while (!stopping_) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    auto pending = std::make_shared<Pending>();
    pending->peer_len = sizeof pending->peer;
    const ssize_t n =
        ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&pending->peer), &pending->peer_len);
    if (n <= 0) continue;
    const Seconds now = clock_.now();
    auto answer = sim_.handle_packet(std::span(buf.data(), static_cast<std::size_t>(n)), now);
    if (!answer) continue;
    pending->due = now + Seconds(answer->second / 1000);
    pending->packet = std::move(answer->first);
    {
      std::lock_guard lk(mu_);
      queue_.push_back(std::move(pending));
    }
    cv_.notify_all();
  }
}

void UdpEndpoint::send_loop() {
  std::unique_lock lk(mu_);
  while (!stopping_) {
    if (queue_.empty()) {
      cv_.wait(lk);
      continue;
    }
    auto next = std::min_element(queue_.begin(), queue_.end(),
                                 [](const auto& a, const auto& b) { return a->due < b->due; });
    const Seconds wait = (*next)->due - clock_.now();
    if (wait.count() > 0) {
      cv_.wait_for(lk, wait);
      continue;
    }
    std::shared_ptr<Pending> p = *next;
    queue_.erase(next);
    lk.unlock();
    ::sendto(fd_, p->packet.data(), p->packet.size(), 0, reinterpret_cast<sockaddr*>(&p->peer), p->peer_len);
    ++answered_;
    lk.lock();
  }
}

std::unique_ptr<UdpEndpoint> serve_udp(Sim& sim, const snoop::Endpoint& bind) {
  if (sim.config().clock_mode != ClockMode::realtime) {
    throw Error(ErrorCode::ConfigError, "serving over UDP needs a realtime scenario");
  }
  return std::make_unique<UdpEndpoint>(sim, bind);
}

}  // namespace snoopdns::sim
