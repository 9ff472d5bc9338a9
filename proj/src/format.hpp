#pragma once

#include <charconv>
#include <string>

namespace noisebench::detail {

// Shortest decimal text that round-trips to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace noisebench::detail
