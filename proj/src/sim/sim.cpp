#include "snoopdns/sim/sim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "snoopdns/error.hpp"

namespace snoopdns::sim {

namespace {

constexpr double kRttFloorMs = 0.1;

dns::DnsResponse reply_shell(const dns::DnsQuery& q) {
  dns::DnsResponse r;
  r.id = q.id;
  r.is_response = true;
  r.recursion_desired = q.recursion_desired;
  r.recursion_available = true;
  r.questions.push_back(dns::Question{q.qname, q.qtype, q.qclass});
  return r;
}

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::client_query: return "client_query";
    case EventKind::cache_refresh: return "cache_refresh";
    case EventKind::probe_query: return "probe_query";
    case EventKind::expiry: return "expiry";
  }
  return "client_query";
}

std::string_view to_string(RefreshCause c) {
  switch (c) {
    case RefreshCause::client: return "client";
    case RefreshCause::probe: return "probe";
    case RefreshCause::anomaly: return "anomaly";
  }
  return "client";
}

Sim::Sim(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& z : config_.zones) zones_[z.name] = z;
  std::seed_seq rtt_seed{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                         0xffffffffu};
  rtt_rng_.seed(rtt_seed);
  for (std::size_t i = 0; i < config_.clients.size(); ++i) {
    std::seed_seq s{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(i)};
    Population p{config_.clients[i], std::mt19937_64(s), std::nullopt};
    if (p.client.process == ProcessKind::periodic) {
      p.next = Seconds(p.client.phase);
    } else {
      schedule_next(p);
    }
    populations_.push_back(std::move(p));
  }
}

Seconds Sim::now() const {
  std::lock_guard lk(mu_);
  return now_;
}

const Zone* Sim::find_zone(const dns::DomainName& name) const {
  if (auto it = zones_.find(name); it != zones_.end()) return &it->second;
  for (dns::DomainName up = name; !up.is_root();) {
    up = up.parent();
    if (auto it = zones_.find(up.prepend("*")); it != zones_.end()) return &it->second;
  }
  return nullptr;
}

std::uint32_t Sim::cache_ttl(const Zone& zone) const {
  return config_.ttl_policy.override_max.value_or(zone.authoritative_ttl);
}

std::optional<std::uint32_t> Sim::max_ttl_for(const dns::DomainName& name) const {
  std::lock_guard lk(mu_);
  const Zone* z = find_zone(name);
  if (!z) return std::nullopt;
  return cache_ttl(*z);
}

double Sim::true_rate(const dns::DomainName& name) const {
  double rate = 0;
  for (const auto& c : config_.clients) {
    if (c.domain == name) rate += c.true_rate();
  }
  return rate;
}

void Sim::schedule_next(Population& p) {
  switch (p.client.process) {
    case ProcessKind::none:
      p.next.reset();
      break;
    case ProcessKind::periodic:
      p.next = *p.next + Seconds(p.client.interval);
      break;
    case ProcessKind::poisson: {
      if (!(p.client.lambda > 0)) {
        p.next.reset();
        break;
      }
      std::exponential_distribution<double> gap(p.client.lambda);
      p.next = p.next.value_or(Seconds{0}) + Seconds(gap(p.rng));
      break;
    }
  }
}

bool Sim::in_prefetch_band(const Entry& e, Seconds at) const {
  if (!config_.anomaly) return false;
  const double remaining = (e.expires - at).count();
  return remaining >= config_.anomaly->remaining_low && remaining <= config_.anomaly->remaining_high;
}

void Sim::refresh(const dns::DomainName& name, const Zone& zone, Seconds at, RefreshCause cause) {
  cache_[name] = Entry{at, at + Seconds(cache_ttl(zone))};
  log_.push_back(SimEvent{at, EventKind::cache_refresh, name, cause, std::nullopt});
}

void Sim::client_arrival(Population& p) {
  const Seconds at = *p.next;
  const dns::DomainName& name = p.client.domain;
  log_.push_back(SimEvent{at, EventKind::client_query, name, std::nullopt, std::nullopt});
  if (const Zone* z = find_zone(name)) {
    auto it = cache_.find(name);
    if (it == cache_.end()) {
      refresh(name, *z, at, RefreshCause::client);
    } else if (in_prefetch_band(it->second, at)) {
      refresh(name, *z, at, RefreshCause::anomaly);
    }
  }
  schedule_next(p);
}

// Applies expiries at or before `t` and client arrivals strictly before it,
// in time order; an expiry wins a tie with an arrival.
void Sim::run_until(Seconds t) {
  for (;;) {
    auto exp = cache_.end();
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->second.expires <= t && (exp == cache_.end() || it->second.expires < exp->second.expires)) exp = it;
    }
    Population* arrival = nullptr;
    for (auto& p : populations_) {
      if (p.next && *p.next < t && (!arrival || *p.next < *arrival->next)) arrival = &p;
    }
    if (exp == cache_.end() && !arrival) break;
    if (exp != cache_.end() && (!arrival || exp->second.expires <= *arrival->next)) {
      log_.push_back(SimEvent{exp->second.expires, EventKind::expiry, exp->first, std::nullopt, std::nullopt});
      cache_.erase(exp);
    } else {
      client_arrival(*arrival);
    }
  }
  now_ = std::max(now_, t);
}

double Sim::draw_cached() {
  const auto& m = config_.rtt_model;
  return std::max(kRttFloorMs, m.cached_mean + m.cached_jitter * unit_(rtt_rng_));
}

double Sim::draw_recursion() {
  const auto& m = config_.rtt_model;
  return std::max(kRttFloorMs, draw_cached() + m.recursion_extra_mean + m.recursion_jitter * unit_(rtt_rng_));
}

SimAnswer Sim::handle_query(const dns::DnsQuery& q, Seconds at) {
  std::lock_guard lk(mu_);
  if (at < now_) {
    // Realtime callers read the clock before taking the lock; tolerate that.
    if ((now_ - at).count() > 1e-3) {
      throw Error(ErrorCode::PreconditionViolation,
                  fmt::format("query at {:.3f}s is before simulator time {:.3f}s", at.count(), now_.count()));
    }
    at = now_;
  }
  run_until(at);
  log_.push_back(SimEvent{at, EventKind::probe_query, q.qname, std::nullopt, q.recursion_desired});

  SimAnswer out;
  out.response = reply_shell(q);
  const bool honor_rd0 = !q.recursion_desired && config_.rd_policy == RdPolicy::honor;
  const Zone* zone = find_zone(q.qname);
  if (!zone) {
    if (honor_rd0) {
      out.rtt_ms = draw_cached();
    } else {
      out.response.rcode = dns::Rcode::NxDomain;
      out.rtt_ms = draw_recursion();
    }
    return out;
  }
  if (q.qtype != dns::RecordType::A || q.qclass != dns::RecordClass::IN) {
    out.rtt_ms = draw_cached();
    return out;
  }

  auto it = cache_.find(q.qname);
  if (it != cache_.end() && in_prefetch_band(it->second, at)) {
    refresh(q.qname, *zone, at, RefreshCause::anomaly);
    out.response.answers.push_back(dns::make_a_record(q.qname, cache_ttl(*zone), zone->ipv4));
    out.rtt_ms = draw_recursion();
  } else if (it != cache_.end()) {
    const auto remaining = static_cast<std::uint32_t>(std::floor((it->second.expires - at).count()));
    out.response.answers.push_back(dns::make_a_record(q.qname, remaining, zone->ipv4));
    out.rtt_ms = draw_cached();
  } else if (honor_rd0) {
    out.rtt_ms = draw_cached();
  } else {
    refresh(q.qname, *zone, at, RefreshCause::probe);
    out.response.answers.push_back(dns::make_a_record(q.qname, cache_ttl(*zone), zone->ipv4));
    out.rtt_ms = draw_recursion();
  }
  return out;
}

std::optional<std::pair<dns::Bytes, double>> Sim::handle_packet(std::span<const std::uint8_t> packet, Seconds at) {
  dns::DnsQuery q;
  try {
    q = dns::decode_query(packet);
  } catch (const Error&) {
    return std::nullopt;
  }
  SimAnswer a = handle_query(q, at);
  return std::make_pair(dns::encode_response(a.response), a.rtt_ms);
}

std::vector<SimEvent> Sim::advance(Seconds duration) {
  std::lock_guard lk(mu_);
  const std::size_t before = log_.size();
  if (duration.count() > 0) run_until(now_ + duration);
  return {log_.begin() + static_cast<std::ptrdiff_t>(before), log_.end()};
}

std::vector<SimEvent> Sim::log() const {
  std::lock_guard lk(mu_);
  return log_;
}

void write_event_jsonl(std::ostream& out, const SimEvent& e) {
  nlohmann::ordered_json j;
  j["at"] = e.at.count();
  j["kind"] = to_string(e.kind);
  j["domain"] = e.domain.str();
  if (e.cause) j["cause"] = to_string(*e.cause);
  if (e.recursion_desired) j["rd"] = *e.recursion_desired;
  out << j.dump() << '\n';
}

void Sim::write_log_jsonl(std::ostream& out) const {
  std::lock_guard lk(mu_);
  for (const auto& e : log_) write_event_jsonl(out, e);
}

}  // namespace snoopdns::sim
