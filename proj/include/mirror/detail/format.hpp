#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace mirror::detail {

// Fixed-point rendering shared by every report writer so that markdown, CSV
// and text emissions of one value are byte-identical. Never prints "-0.0000".
inline std::string fixed(double v, int decimals = 4) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace mirror::detail
