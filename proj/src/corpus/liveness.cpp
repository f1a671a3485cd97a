#include "snoopdns/corpus/liveness.hpp"

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::corpus {

namespace {

bool has_address(const dns::DnsResponse& r, const dns::DomainName& name) {
  if (r.rcode != dns::Rcode::NoError) return false;
  // Follow the CNAME chain the same way TTL reads do.
  if (!dns::min_answer_ttl(r, name)) return false;
  for (const auto& rr : r.answers) {
    if (rr.rtype == dns::RecordType::A && rr.rdata.size() == 4) return true;
  }
  return false;
}

}  // namespace

LivenessResult liveness_filter(const DomainList& list, snoop::Resolver& resolver, const LivenessConfig& config) {
  if (config.attempts < 1) throw Error(ErrorCode::PreconditionViolation, "liveness needs at least one attempt");
  std::vector<bool> alive(list.entries.size(), false);
  Clock& clock = resolver.clock();
  for (int attempt = 0; attempt < config.attempts; ++attempt) {
    const Seconds round_start = clock.now();
    bool pending = false;
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
      if (alive[i]) continue;
      const auto& name = list.entries[i].domain;
      try {
        alive[i] = has_address(resolver.query(name, true).response, name);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Timeout) {
          throw Error(ErrorCode::ResolverUnreachable,
                      fmt::format("{}: no reply while checking {}", resolver.server(), name.str()));
        }
        if (e.code() != ErrorCode::Malformed) throw;
      }
      pending = pending || !alive[i];
    }
    if (!pending) break;
    if (attempt + 1 < config.attempts) clock.sleep_until(round_start + config.spacing);
  }

  LivenessResult out;
  out.live.source = list.source;
  out.dead.source = list.source;
  for (std::size_t i = 0; i < list.entries.size(); ++i) (alive[i] ? out.live : out.dead).add(list.entries[i]);
  return out;
}

}  // namespace snoopdns::corpus
