#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "snoopdns/clock.hpp"
#include "snoopdns/sim/config.hpp"
#include "snoopdns/sim/endpoint.hpp"
#include "snoopdns/sim/sim.hpp"
#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::testing {

inline dns::DomainName name(const char* s) { return dns::DomainName::parse(s); }

inline sim::SimConfig one_zone(const char* domain, std::uint32_t ttl, std::uint64_t seed = 1) {
  sim::SimConfig c;
  c.zones.push_back(sim::Zone{name(domain), 0xc0000201, ttl});
  c.seed = seed;
  return c;
}

inline sim::ClientPopulation poisson(const char* domain, double lambda) {
  sim::ClientPopulation p;
  p.domain = name(domain);
  p.process = sim::ProcessKind::poisson;
  p.lambda = lambda;
  return p;
}

inline sim::ClientPopulation periodic(const char* domain, double interval, double phase = 0) {
  sim::ClientPopulation p;
  p.domain = name(domain);
  p.process = sim::ProcessKind::periodic;
  p.interval = interval;
  p.phase = phase;
  return p;
}

/// Sim + virtual clock + resolver wired together.
struct Rig {
  explicit Rig(sim::SimConfig config, double rate = 0, std::uint64_t seed = 1)
      : sim(std::move(config)),
        transport(sim, clock),
        limiter(rate > 0 ? std::make_unique<snoop::RateLimiter>(rate) : nullptr),
        resolver("simnet", transport, clock, limiter.get(), {}, seed) {}

  VirtualClock clock;
  sim::Sim sim;
  sim::SimTransport transport;
  std::unique_ptr<snoop::RateLimiter> limiter;
  snoop::Resolver resolver;
};

/// 20 domains with rates log-spaced over [1e-4, 10^-1.5] per second.
inline sim::SimConfig ladder_scenario(std::uint64_t seed, std::uint32_t ttl = 300) {
  sim::SimConfig c;
  c.seed = seed;
  for (int i = 0; i < 20; ++i) {
    const std::string d = "d" + std::to_string(100 + i) + ".example";
    c.zones.push_back(sim::Zone{dns::DomainName::parse(d), 0xc0000201, ttl});
    sim::ClientPopulation p;
    p.domain = dns::DomainName::parse(d);
    p.process = sim::ProcessKind::poisson;
    p.lambda = std::pow(10.0, -4.0 + 2.5 * i / 19.0);
    c.clients.push_back(p);
  }
  return c;
}

}  // namespace snoopdns::testing
