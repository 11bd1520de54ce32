#pragma once

#include <iostream>
#include <set>
#include <string>

namespace aadml {

// Each distinct message is printed once per process; repeating conditions
// (an inert metric loss every batch, say) stay readable.
inline void warn(const std::string& message) {
  static std::set<std::string> seen;
  if (seen.insert(message).second) {
    std::cerr << "[aadml] warning: " << message << "\n";
  }
}

}  // namespace aadml
