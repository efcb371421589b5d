#include "cityflow/polygon.hpp"

#include <algorithm>
#include <limits>

namespace cityflow {

void Rect::expand(Vec2 p) {
  min_x = std::min(min_x, p.x);
  min_y = std::min(min_y, p.y);
  max_x = std::max(max_x, p.x);
  max_y = std::max(max_y, p.y);
}

void Rect::expand(const Rect& r) {
  expand(Vec2{r.min_x, r.min_y});
  expand(Vec2{r.max_x, r.max_y});
}

Rect Rect::empty() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {inf, inf, -inf, -inf};
}

Rect Polygon::bbox() const { return ring_bbox(outer); }

double signed_area(std::span<const Vec2> ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    twice += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
  }
  return twice / 2.0;
}

Vec2 ring_centroid(std::span<const Vec2> ring) {
  // Relative to the first vertex for conditioning with large coordinates.
  const Vec2 o = ring.front();
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Vec2 p = ring[i] - o;
    const Vec2 q = ring[i + 1] - o;
    const double cross = p.x * q.y - q.x * p.y;
    a2 += cross;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  return {o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2)};
}

Rect ring_bbox(std::span<const Vec2> ring) {
  Rect r = Rect::empty();
  for (Vec2 p : ring) r.expand(p);
  return r;
}

namespace {

bool crossings_odd(std::span<const Vec2> ring, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[i + 1];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

bool contains_even_odd(const Polygon& polygon, Vec2 p) {
  bool inside = crossings_odd(polygon.outer, p);
  for (const auto& hole : polygon.holes) {
    if (crossings_odd(hole, p)) inside = !inside;
  }
  return inside;
}

void orient(Ring& ring, bool ccw) {
  if ((signed_area(ring) > 0.0) != ccw) std::reverse(ring.begin(), ring.end());
}

}  // namespace cityflow
