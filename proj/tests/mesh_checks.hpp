#pragma once

#include <map>
#include <utility>

#include "cityflow/error.hpp"
#include "cityflow/mesh.hpp"

namespace testing {

// Every undirected edge borders exactly two triangles, traversed once in
// each direction (closed, consistently oriented).
inline bool is_watertight(const cityflow::Mesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  }
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto back = directed.find({edge.second, edge.first});
    if (back == directed.end() || back->second != 1) return false;
  }
  return !mesh.triangles.empty();
}

}  // namespace testing
