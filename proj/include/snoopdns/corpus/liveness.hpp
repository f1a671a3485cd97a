#pragma once

#include "snoopdns/corpus/domain_list.hpp"
#include "snoopdns/snoop/transport.hpp"

namespace snoopdns::corpus {

struct LivenessConfig {
  int attempts = 3;
  /// Minimum gap between the starts of consecutive attempt rounds.
  Seconds spacing{60.0};
};

struct LivenessResult {
  DomainList live;
  DomainList dead;
};

/// A domain is dead when every attempt fails to produce an A record. Order
/// and tags are preserved in both halves. Any query that goes unanswered
/// after the resolver's retries raises Error{ResolverUnreachable}.
LivenessResult liveness_filter(const DomainList& list, snoop::Resolver& resolver, const LivenessConfig& config = {});

}  // namespace snoopdns::corpus
