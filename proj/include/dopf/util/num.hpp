#pragma once

#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>

#include "dopf/errors.hpp"

namespace dopf {

// Shortest round-trip text for a double. Used everywhere a number is written
// to disk so that re-running a stage reproduces byte-identical files.
inline std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(Err::ParseError, "bad number '" + std::string(s) + "' in " + what);
  return v;
}

inline long long parse_int(std::string_view s, const std::string& what) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(Err::ParseError, "bad integer '" + std::string(s) + "' in " + what);
  return v;
}

}  // namespace dopf
