#pragma once

#include <cstdio>
#include <string>

namespace beamlat {

// Shortest-ish fixed formatting shared by every CSV writer so reruns are
// byte-identical.
inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace beamlat
