#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace confrag::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](const std::string& msg) { std::cerr << "[confrag] warning: " << msg << '\n'; };
  return s;
}
}  // namespace detail

// Replaces the warning sink, returning the previous one. Tests use this to
// capture warnings.
inline Sink set_sink(Sink sink) {
  std::lock_guard lock(detail::mutex());
  return std::exchange(detail::sink(), std::move(sink));
}

inline void warn(const std::string& message) {
  std::lock_guard lock(detail::mutex());
  if (detail::sink()) detail::sink()(message);
}

}  // namespace confrag::log
