#pragma once

#include <span>
#include <vector>

namespace cityflow {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  Vec2 center() const { return {(min_x + max_x) / 2, (min_y + max_y) / 2}; }
  bool contains(Vec2 p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  bool contains(const Rect& r) const {
    return r.min_x >= min_x && r.max_x <= max_x && r.min_y >= min_y && r.max_y <= max_y;
  }
  void expand(Vec2 p);
  void expand(const Rect& r);
  static Rect empty();
};

// Closed ring: front() == back(). Outer rings are counter-clockwise, holes
// clockwise once normalized.
using Ring = std::vector<Vec2>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;

  Rect bbox() const;
};

// Shoelace area of a closed ring; positive for counter-clockwise.
double signed_area(std::span<const Vec2> ring);

// Area-weighted centroid of a closed ring with non-zero area.
Vec2 ring_centroid(std::span<const Vec2> ring);

Rect ring_bbox(std::span<const Vec2> ring);

// Even-odd test over the outer ring and every hole. Edges are half-open in y
// so points on shared edges resolve consistently between neighbours.
bool contains_even_odd(const Polygon& polygon, Vec2 p);

// Reverses `ring` in place if its winding does not match `ccw`.
void orient(Ring& ring, bool ccw);

}  // namespace cityflow
