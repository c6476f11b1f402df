#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>

namespace prioflow {

/// Shortest round-trip decimal representation.
inline std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double value, int digits = 3) {
  if (value == 0.0) value = 0.0;  // drop negative zero
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

inline std::string format_hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace prioflow
