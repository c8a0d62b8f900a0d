#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "beamlat/seed.hpp"

namespace beamlat {

// Path of child positions from the root: element 0 is the initial seed index,
// element j-1 the position of the step-j candidate within its parent's pool.
// Ordered lexicographically; this order is the tie-break everywhere.
struct BeamId {
  std::vector<int> path;

  BeamId child(int position) const {
    BeamId out{path};
    out.path.push_back(position);
    return out;
  }
  BeamId prefix(std::size_t steps) const {
    return BeamId{std::vector<int>(path.begin(), path.begin() + static_cast<long>(steps))};
  }
  std::uint64_t key() const noexcept { return hash_path(path); }
  std::string to_string() const {
    std::string out = "b";
    for (std::size_t i = 0; i < path.size(); ++i) {
      out += i == 0 ? ":" : ".";
      out += std::to_string(path[i]);
    }
    return out;
  }

  friend auto operator<=>(const BeamId&, const BeamId&) = default;
  friend bool operator==(const BeamId&, const BeamId&) = default;
};

}  // namespace beamlat
