#include "snoopdns/dns/name.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "snoopdns/error.hpp"

namespace snoopdns::dns {

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

DomainName DomainName::parse(std::string_view text) {
  if (text == ".") return DomainName{};
  if (text.empty()) throw Error(ErrorCode::InvalidName, "empty name");

  // Presentation format: '.' separates labels; \DDD and \X escape a byte.
  std::vector<std::string> labels(1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.') {
      if (i + 1 < text.size()) labels.emplace_back();
      continue;
    }
    if (c != '\\') {
      labels.back().push_back(c);
      continue;
    }
    if (i + 1 >= text.size()) throw Error(ErrorCode::InvalidName, "dangling escape");
    const auto digit = [&](std::size_t k) { return k < text.size() && text[k] >= '0' && text[k] <= '9'; };
    if (digit(i + 1)) {
      if (!digit(i + 2) || !digit(i + 3)) throw Error(ErrorCode::InvalidName, "escape needs three digits");
      const int v = (text[i + 1] - '0') * 100 + (text[i + 2] - '0') * 10 + (text[i + 3] - '0');
      if (v > 255) throw Error(ErrorCode::InvalidName, fmt::format("escape \\{} out of range", v));
      labels.back().push_back(static_cast<char>(v));
      i += 3;
    } else {
      labels.back().push_back(text[++i]);
    }
  }
  return from_labels(std::move(labels));
}

DomainName DomainName::from_labels(std::vector<std::string> labels) {
  std::size_t wire = 1;
  for (auto& label : labels) {
    if (label.empty()) throw Error(ErrorCode::InvalidName, "empty label");
    if (label.size() > kMaxLabelLength) {
      throw Error(ErrorCode::InvalidName, fmt::format("label of {} bytes exceeds 63", label.size()));
    }
    wire += label.size() + 1;
    label = to_lower_ascii(label);
  }
  if (wire > kMaxNameWireLength) {
    throw Error(ErrorCode::InvalidName, fmt::format("name of {} wire bytes exceeds 255", wire));
  }
  return DomainName(std::move(labels));
}

std::string DomainName::str() const {
  if (labels_.empty()) return ".";
  std::string out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) out.push_back('.');
    for (unsigned char c : labels_[i]) {
      if (c == '.' || c == '\\' || c <= 0x20 || c >= 0x7f) {
        out += fmt::format("\\{:03d}", c);
      } else {
        out.push_back(static_cast<char>(c));
      }
    }
  }
  return out;
}

std::size_t DomainName::wire_length() const {
  std::size_t n = 1;
  for (const auto& l : labels_) n += l.size() + 1;
  return n;
}

bool DomainName::is_subdomain_of(const DomainName& parent) const {
  if (parent.labels_.size() > labels_.size()) return false;
  return std::equal(parent.labels_.rbegin(), parent.labels_.rend(), labels_.rbegin());
}

DomainName DomainName::prepend(std::string_view label) const {
  std::vector<std::string> labels;
  labels.reserve(labels_.size() + 1);
  labels.emplace_back(label);
  labels.insert(labels.end(), labels_.begin(), labels_.end());
  return from_labels(std::move(labels));
}

DomainName DomainName::parent() const {
  if (labels_.empty()) return {};
  return DomainName(std::vector<std::string>(labels_.begin() + 1, labels_.end()));
}

}  // namespace snoopdns::dns
