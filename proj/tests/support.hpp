#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cityflow/error.hpp"
#include "cityflow/geo.hpp"
#include "cityflow/polygon.hpp"
#include "cityflow/rng.hpp"

namespace testing {

using cityflow::BuildingRecord;
using cityflow::Polygon;
using cityflow::Ring;
using cityflow::Vec2;

inline Ring closed(std::vector<Vec2> pts) {
  pts.push_back(pts.front());
  return pts;
}

inline Ring rect_ring(double x0, double y0, double x1, double y1) {
  return closed({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

inline BuildingRecord make_record(std::string id, Polygon footprint, double height) {
  BuildingRecord r;
  r.id = std::move(id);
  cityflow::orient(footprint.outer, true);
  for (auto& h : footprint.holes) cityflow::orient(h, false);
  r.centroid = cityflow::ring_centroid(footprint.outer);
  r.footprint = std::move(footprint);
  r.height = height;
  return r;
}

// Random union of axis-aligned bars on an integer lattice, traced as one
// orthogonal polygon: a staircase profile over [0, w] with random column heights.
inline Polygon random_rectilinear(cityflow::Rng& rng, double unit = 1.0) {
  const int cols = 1 + static_cast<int>(rng.index(5));
  std::vector<int> tops;
  for (int c = 0; c < cols; ++c) tops.push_back(2 + static_cast<int>(rng.index(9)));
  std::vector<Vec2> pts{{0, 0}};
  const int width = 2 + static_cast<int>(rng.index(4));
  double x = 0;
  for (int c = 0; c < cols; ++c) {
    x += width * unit;
    pts.push_back({x, 0});
  }
  // Walk back along the top from right to left.
  for (int c = cols - 1; c >= 0; --c) {
    pts.push_back({(c + 1) * width * unit, tops[c] * unit});
    pts.push_back({c * width * unit, tops[c] * unit});
  }
  // Drop collinear bottom vertices and repeated points.
  std::vector<Vec2> clean;
  for (auto p : pts) {
    if (!clean.empty() && clean.back() == p) continue;
    clean.push_back(p);
  }
  std::vector<Vec2> simple;
  const std::size_t n = clean.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = clean[(i + n - 1) % n], b = clean[i], c = clean[(i + 1) % n];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (cross != 0.0) simple.push_back(b);
  }
  Polygon poly;
  poly.outer = closed(simple);
  return poly;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cityflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
