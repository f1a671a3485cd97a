#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "snoopdns/sim/sim.hpp"
#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::sim {

/// In-process transport: the simulator answers at clock.now() and the caller
/// then sleeps for the simulated RTT.
class SimTransport final : public snoop::Transport {
 public:
  SimTransport(Sim& sim, Clock& clock) : sim_(sim), clock_(clock) {}

  std::optional<snoop::Reply> exchange(std::span<const std::uint8_t> query, Seconds timeout) override;

  /// Drop every query, as an unreachable server would.
  void set_offline(bool offline) { offline_ = offline; }

 private:
  Sim& sim_;
  Clock& clock_;
  std::atomic<bool> offline_{false};
};

/// Serves a simulator over UDP, delaying each response by its simulated RTT.
class UdpEndpoint {
 public:
  /// Binds immediately; port 0 picks a free port. Throws Error{BindError}.
  UdpEndpoint(Sim& sim, const snoop::Endpoint& bind);
  ~UdpEndpoint();
  UdpEndpoint(const UdpEndpoint&) = delete;
  UdpEndpoint& operator=(const UdpEndpoint&) = delete;

  /// Actual bound address.
  snoop::Endpoint local() const { return local_; }
  void stop();
  std::uint64_t answered() const { return answered_; }

 private:
  struct Pending;

  void receive_loop();
  void send_loop();

  Sim& sim_;
  SteadyClock clock_;
  snoop::Endpoint local_;
  int fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> answered_{0};
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::shared_ptr<Pending>> queue_;
  std::thread receiver_;
  std::thread sender_;
};

/// Starts an endpoint; realtime scenarios only (Error{ConfigError} otherwise).
std::unique_ptr<UdpEndpoint> serve_udp(Sim& sim, const snoop::Endpoint& bind);

}  // namespace snoopdns::sim
