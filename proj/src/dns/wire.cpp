#include "snoopdns/dns/wire.hpp"

#include <map>
#include <set>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::dns {

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::Malformed, why); }

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v & 0xffff));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  void name(const DomainName& n, bool compress) {
    const auto& labels = n.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::vector<std::string> suffix(labels.begin() + static_cast<std::ptrdiff_t>(i), labels.end());
      if (compress) {
        if (auto it = offsets_.find(suffix); it != offsets_.end()) {
          u16(static_cast<std::uint16_t>(0xc000 | it->second));
          return;
        }
        if (out_.size() < 0x4000) offsets_.emplace(std::move(suffix), out_.size());
      }
      u8(static_cast<std::uint8_t>(labels[i].size()));
      for (char c : labels[i]) u8(static_cast<std::uint8_t>(c));
    }
    u8(0);
  }

  void patch_u16(std::size_t at, std::uint16_t v) {
    out_[at] = static_cast<std::uint8_t>(v >> 8);
    out_[at + 1] = static_cast<std::uint8_t>(v & 0xff);
  }

  std::size_t size() const { return out_.size(); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
  std::map<std::vector<std::string>, std::size_t> offsets_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> p) : p_(p) {}

  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((p_[pos_] << 8) | p_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  Bytes bytes(std::size_t n) {
    need(n);
    Bytes b(p_.begin() + static_cast<std::ptrdiff_t>(pos_), p_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
  }

  DomainName name() {
    std::vector<std::string> labels;
    std::size_t cursor = pos_;
    std::size_t resume = 0;
    bool jumped = false;
    std::size_t wire = 1;
    while (true) {
      if (cursor >= p_.size()) malformed("name runs past end of packet");
      const std::uint8_t len = p_[cursor];
      if ((len & 0xc0) == 0xc0) {
        if (cursor + 1 >= p_.size()) malformed("truncated compression pointer");
        const std::size_t target = static_cast<std::size_t>(((len & 0x3f) << 8) | p_[cursor + 1]);
        // Strictly backwards pointers cannot loop.
        if (target >= cursor) malformed(fmt::format("compression pointer at {} points forward to {}", cursor, target));
        if (!jumped) resume = cursor + 2;
        jumped = true;
        cursor = target;
        continue;
      }
      if ((len & 0xc0) != 0) malformed(fmt::format("unsupported label type 0x{:02x}", len));
      if (len == 0) {
        ++cursor;
        break;
      }
      if (cursor + 1 + len > p_.size()) malformed("label runs past end of packet");
      wire += len + 1u;
      if (wire > kMaxNameWireLength) malformed("name exceeds 255 bytes");
      labels.emplace_back(reinterpret_cast<const char*>(p_.data() + cursor + 1), len);
      cursor += 1 + len;
    }
    pos_ = jumped ? resume : cursor;
    return DomainName::from_labels(std::move(labels));
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return p_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > p_.size()) malformed(fmt::format("need {} bytes at offset {}, packet has {}", n, pos_, p_.size()));
  }

  std::span<const std::uint8_t> p_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const ResourceRecord& rr) {
  w.name(rr.name, true);
  w.u16(static_cast<std::uint16_t>(rr.rtype));
  w.u16(static_cast<std::uint16_t>(rr.rclass));
  w.u32(rr.ttl);
  const std::size_t len_at = w.size();
  w.u16(0);
  const std::size_t start = w.size();
  if (rr.rtype == RecordType::CNAME && rr.cname_target) {
    w.name(*rr.cname_target, false);
  } else {
    w.bytes(rr.rdata);
  }
  w.patch_u16(len_at, static_cast<std::uint16_t>(w.size() - start));
}

}  // namespace

Bytes encode_query(const DnsQuery& query) {
  Writer w;
  w.u16(query.id);
  w.u16(query.recursion_desired ? kFlagRd : 0);
  w.u16(1);
  w.u16(0);
  w.u16(0);
  w.u16(0);
  w.name(query.qname, false);
  w.u16(static_cast<std::uint16_t>(query.qtype));
  w.u16(static_cast<std::uint16_t>(query.qclass));
  return w.take();
}

DnsResponse decode_response(std::span<const std::uint8_t> packet) {
  if (packet.size() < kHeaderSize) malformed(fmt::format("{} bytes is shorter than a DNS header", packet.size()));
  Reader r(packet);
  DnsResponse resp;
  resp.id = r.u16();
  const std::uint16_t flags = r.u16();
  resp.is_response = flags & kFlagQr;
  resp.authoritative = flags & kFlagAa;
  resp.truncated = flags & kFlagTc;
  resp.recursion_desired = flags & kFlagRd;
  resp.recursion_available = flags & kFlagRa;
  resp.rcode = static_cast<Rcode>(flags & 0x0f);
  const std::uint16_t qd = r.u16();
  const std::uint16_t an = r.u16();
  const std::uint16_t ns = r.u16();
  const std::uint16_t ar = r.u16();
  // Each question needs at least 5 bytes and each record at least 11.
  if (qd * 5u + (an + ns + ar) * 11u > r.remaining()) malformed("section counts exceed packet contents");

  for (std::uint16_t i = 0; i < qd; ++i) {
    Question q;
    q.name = r.name();
    q.type = static_cast<RecordType>(r.u16());
    q.klass = static_cast<RecordClass>(r.u16());
    resp.questions.push_back(std::move(q));
  }
  auto section = [&](std::uint16_t count, std::vector<ResourceRecord>& into) {
    for (std::uint16_t i = 0; i < count; ++i) {
      ResourceRecord rr;
      rr.name = r.name();
      rr.rtype = static_cast<RecordType>(r.u16());
      rr.rclass = static_cast<RecordClass>(r.u16());
      rr.ttl = r.u32();
      if (rr.ttl > kMaxTtl) malformed(fmt::format("ttl {} above 2^31-1", rr.ttl));
      const std::uint16_t rdlength = r.u16();
      if (rdlength > r.remaining()) malformed("rdata runs past end of packet");
      if (rr.rtype == RecordType::CNAME) {
        Reader target = r;
        rr.cname_target = target.name();
        if (target.pos() - r.pos() > rdlength) malformed("CNAME target overruns rdlength");
      }
      rr.rdata = r.bytes(rdlength);
      into.push_back(std::move(rr));
    }
  };
  section(an, resp.answers);
  section(ns, resp.authority);
  section(ar, resp.additional);
  return resp;
}

DnsQuery decode_query(std::span<const std::uint8_t> packet) {
  DnsResponse msg = decode_response(packet);
  if (msg.is_response) malformed("message is a response");
  if (msg.questions.size() != 1) malformed(fmt::format("query carries {} questions", msg.questions.size()));
  DnsQuery q;
  q.id = msg.id;
  q.qname = msg.questions[0].name;
  q.qtype = msg.questions[0].type;
  q.qclass = msg.questions[0].klass;
  q.recursion_desired = msg.recursion_desired;
  return q;
}

Bytes encode_response(const DnsResponse& response) {
  Writer w;
  w.u16(response.id);
  std::uint16_t flags = static_cast<std::uint16_t>(response.rcode) & 0x0f;
  if (response.is_response) flags |= kFlagQr;
  if (response.authoritative) flags |= kFlagAa;
  if (response.truncated) flags |= kFlagTc;
  if (response.recursion_desired) flags |= kFlagRd;
  if (response.recursion_available) flags |= kFlagRa;
  w.u16(flags);
  w.u16(static_cast<std::uint16_t>(response.questions.size()));
  w.u16(static_cast<std::uint16_t>(response.answers.size()));
  w.u16(static_cast<std::uint16_t>(response.authority.size()));
  w.u16(static_cast<std::uint16_t>(response.additional.size()));
  for (const auto& q : response.questions) {
    w.name(q.name, true);
    w.u16(static_cast<std::uint16_t>(q.type));
    w.u16(static_cast<std::uint16_t>(q.klass));
  }
  for (const auto& rr : response.answers) write_record(w, rr);
  for (const auto& rr : response.authority) write_record(w, rr);
  for (const auto& rr : response.additional) write_record(w, rr);
  return w.take();
}

std::optional<std::uint32_t> min_answer_ttl(const DnsResponse& response, const DomainName& qname) {
  std::optional<std::uint32_t> best;
  auto take = [&](std::uint32_t ttl) { best = best ? std::min(*best, ttl) : ttl; };
  std::set<DomainName> visited;
  DomainName current = qname;
  while (visited.insert(current).second) {
    const ResourceRecord* cname = nullptr;
    for (const auto& rr : response.answers) {
      if (rr.name != current) continue;
      if (rr.rtype == RecordType::CNAME && rr.cname_target) {
        cname = &rr;
      } else {
        take(rr.ttl);
      }
    }
    if (!cname) break;
    take(cname->ttl);
    current = *cname->cname_target;
  }
  return best;
}

ResourceRecord make_a_record(const DomainName& name, std::uint32_t ttl, std::uint32_t ipv4) {
  ResourceRecord rr;
  rr.name = name;
  rr.rtype = RecordType::A;
  rr.ttl = ttl;
  rr.rdata = {static_cast<std::uint8_t>(ipv4 >> 24), static_cast<std::uint8_t>(ipv4 >> 16),
              static_cast<std::uint8_t>(ipv4 >> 8), static_cast<std::uint8_t>(ipv4)};
  return rr;
}

ResourceRecord make_cname_record(const DomainName& name, std::uint32_t ttl, const DomainName& target) {
  ResourceRecord rr;
  rr.name = name;
  rr.rtype = RecordType::CNAME;
  rr.ttl = ttl;
  rr.cname_target = target;
  for (const auto& label : target.labels()) {
    rr.rdata.push_back(static_cast<std::uint8_t>(label.size()));
    rr.rdata.insert(rr.rdata.end(), label.begin(), label.end());
  }
  rr.rdata.push_back(0);
  return rr;
}

}  // namespace snoopdns::dns
