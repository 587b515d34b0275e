/*
 * SPDX-License-Identifier: Apache-2.0
 */

//===---------------------------- support.hpp ----------------------------===//
//
// Error handling, diagnostics, and small formatting helpers shared by all
// loom components.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loom {

/// Exception carrying a stable machine-checkable kind ("IncompatibleShapes",
/// "ParseError", ...) next to the human-readable message.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string &kind() const { return kind_; }

private:
  std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string &message) {
  throw Error(std::move(kind), message);
}

/// One verifier finding. Verifiers return these instead of throwing so a
/// single run reports every violation.
struct Diagnostic {
  std::string code;
  std::string message;
  int op_index = -1; // -1 when not tied to a specific op

  std::string str() const {
    std::ostringstream os;
    os << code;
    if (op_index >= 0)
      os << " (op #" << op_index << ")";
    os << ": " << message;
    return os.str();
  }
};

/// Shortest decimal form of `v` that parses back to the same bits. The result
/// always lexes as a float literal (a bare integer gets a trailing ".0").
inline std::string format_float(float v) {
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  bool needs_marker = s.find_first_of(".e") == std::string::npos;
  if (needs_marker)
    s += ".0";
  return s;
}

inline float parse_float_exact(const std::string &s) {
  if (s == "nan")
    return std::nanf("");
  if (s == "inf")
    return HUGE_VALF;
  if (s == "-inf")
    return -HUGE_VALF;
  float v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail("ParseError", "malformed float literal '" + s + "'");
  return v;
}

template <typename T> std::string join(const std::vector<T> &items, const std::string &sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i)
      os << sep;
    os << items[i];
  }
  return os.str();
}

} // namespace loom
