#include "snoopdns/stats/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::stats {

void DomainStats::add(const snoop::RefreshObservation& obs) {
  if (cycles == 0) domain = obs.domain;
  ++cycles;
  if (obs.event) ++t;
  o += obs.observed_time().count();
  const Seconds begin = obs.window_start;
  const Seconds end = obs.window_start + obs.window_length;
  first_seen = first_seen ? std::min(*first_seen, begin) : begin;
  last_seen = last_seen ? std::max(*last_seen, end) : end;
}

DomainStats& DomainStats::merge(const DomainStats& other) {
  if (other.cycles == 0) return *this;
  if (cycles == 0) {
    domain = other.domain;
  } else if (!(domain == other.domain)) {
    throw Error(ErrorCode::PreconditionViolation,
                fmt::format("cannot merge stats for {} into {}", other.domain.str(), domain.str()));
  }
  t += other.t;
  o += other.o;
  cycles += other.cycles;
  if (other.first_seen) first_seen = first_seen ? std::min(*first_seen, *other.first_seen) : *other.first_seen;
  if (other.last_seen) last_seen = last_seen ? std::max(*last_seen, *other.last_seen) : *other.last_seen;
  return *this;
}

Aggregate aggregate(std::span<const snoop::RefreshObservation> observations) {
  Aggregate out;
  for (const auto& obs : observations) {
    if (!obs.satisfies_invariants()) {
      ++out.skipped;
      continue;
    }
    out.domains[obs.domain].add(obs);
  }
  return out;
}

void merge_into(StatsMap& into, const StatsMap& shard) {
  for (const auto& [name, s] : shard) into[name].merge(s);
}

double z_for_confidence(double confidence) {
  if (!(confidence > 0 && confidence < 1)) {
    throw Error(ErrorCode::DomainError, fmt::format("confidence {} outside (0, 1)", confidence));
  }
  if (std::abs(confidence - 0.95) < 1e-12) return 1.96;
  const boost::math::normal_distribution<double> n;
  return boost::math::quantile(n, 1 - (1 - confidence) / 2);
}

ArrivalEstimate estimate(const DomainStats& stats, double confidence) {
  if (!(stats.o > 0)) {
    throw Error(ErrorCode::NoObservation, fmt::format("{}: no observed time", stats.domain.str()));
  }
  const double z = z_for_confidence(confidence);
  ArrivalEstimate e;
  e.domain = stats.domain;
  e.lambda_hat = static_cast<double>(stats.t) / stats.o;
  e.ci_half_width = z * std::sqrt(e.lambda_hat / stats.o);
  if (stats.t > 0) e.mean_refresh_period = stats.o / static_cast<double>(stats.t);
  e.events = stats.t;
  e.observed_seconds = stats.o;
  e.cycles = stats.cycles;
  return e;
}

double poisson_pmf(double lambda, std::int64_t x) {
  if (!(lambda >= 0) || !std::isfinite(lambda) || x < 0) {
    throw Error(ErrorCode::DomainError, fmt::format("poisson_pmf({}, {}) outside the domain", lambda, x));
  }
  if (lambda == 0) return x == 0 ? 1.0 : 0.0;
  const double k = static_cast<double>(x);
  return std::exp(-lambda + k * std::log(lambda) - std::lgamma(k + 1));
}

std::vector<ArrivalEstimate> rank_domains(std::vector<ArrivalEstimate> estimates, std::optional<std::size_t> top_n) {
  std::stable_sort(estimates.begin(), estimates.end(), [](const ArrivalEstimate& a, const ArrivalEstimate& b) {
    if (a.lambda_hat != b.lambda_hat) return a.lambda_hat > b.lambda_hat;
    if (a.observed_seconds != b.observed_seconds) return a.observed_seconds > b.observed_seconds;
    return a.domain < b.domain;
  });
  for (std::size_t i = 0; i < estimates.size(); ++i) estimates[i].rank = i + 1;
  if (top_n && *top_n < estimates.size()) estimates.resize(*top_n);
  return estimates;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i + j) / 2) + 1;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorCode::DomainError, "spearman needs two equal-length series of at least 2 values");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace snoopdns::stats
