#pragma once

#include <functional>
#include <string>
#include <utility>

namespace loadfuse::log {

// Numerical events worth surfacing (jitter escalation, variance clamping)
// go through this sink. Silent by default; the CLI wires it to stderr.
inline std::function<void(const std::string&)>& sink() {
  static std::function<void(const std::string&)> s;
  return s;
}

inline void warn(std::string msg) {
  if (sink()) sink()(std::move(msg));
}

}  // namespace loadfuse::log
