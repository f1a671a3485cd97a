#include "snoopdns/snoop/observation.hpp"

#include <fmt/format.h>

namespace snoopdns::snoop {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::rd0: return "rd0";
    case Method::ttl_recursive: return "ttl_recursive";
    case Method::timing: return "timing";
  }
  return "ttl_recursive";
}

Method parse_method(std::string_view s) {
  if (s == "rd0") return Method::rd0;
  if (s == "ttl_recursive" || s == "ttl-recursive") return Method::ttl_recursive;
  if (s == "timing") return Method::timing;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown method '{}'", s));
}

bool RefreshObservation::satisfies_invariants() const {
  if (!(window_length.count() > 0)) return false;
  if (censored == event.has_value()) return false;
  if (event) {
    const double d = event->delay_after_expiry.count();
    if (d < 0 || d > window_length.count()) return false;
  }
  return true;
}

Seconds RefreshObservation::observed_time() const {
  return event ? event->delay_after_expiry : window_length;
}

}  // namespace snoopdns::snoop
