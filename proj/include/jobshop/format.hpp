#pragma once

#include <charconv>
#include <string>

namespace jssp {

// Shortest decimal form that round-trips exactly.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace jssp
