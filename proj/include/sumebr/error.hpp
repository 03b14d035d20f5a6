#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace sumebr {

// Violated precondition, invariant or malformed input. CLI exit code 1.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable/unwritable file. CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline bool& warnings_enabled() {
  static bool enabled = true;
  return enabled;
}
}  // namespace detail

inline void set_warnings_enabled(bool on) { detail::warnings_enabled() = on; }

inline void warn(const std::string& msg) {
  if (detail::warnings_enabled()) std::cerr << "warning: " << msg << '\n';
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace sumebr
