#pragma once

#include <cstdio>
#include <string>

namespace aadml {

// Shortest representation that round-trips a double.
inline std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_compact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace aadml
