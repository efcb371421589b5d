#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/polygon.hpp"

namespace cityflow {

// WGS84 equatorial radius used by the local projection.
inline constexpr double kEarthRadius = 6378137.0;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
};

// Equirectangular tangent-plane projection about `origin`, meters east/north.
// Throws DomainError if |lat| >= 85 for either point.
Vec2 to_local_frame(double lon, double lat, GeoPoint origin);
GeoPoint from_local_frame(Vec2 local, GeoPoint origin);

struct BuildingRecord {
  std::string id;
  Polygon footprint;  // local meters
  double height = 0.0;
  Vec2 centroid;  // area-weighted centroid of the outer ring
  std::optional<int> levels;
};

struct Region {
  std::string name;
  GeoPoint origin;
  std::vector<BuildingRecord> buildings;  // sorted by id
  Rect bounds;

  const BuildingRecord* find(std::string_view id) const;
};

// Which properties carry height information and how to fill gaps.
struct HeightPolicy {
  double meters_per_level = 3.0;
  double default_height = 10.0;
  std::vector<std::string> height_keys{"height"};
  std::vector<std::string> level_keys{"levels", "building:levels"};
};

struct HeightAttributes {
  std::optional<double> height;
  std::optional<int> levels;
};

// Explicit height, else levels x meters_per_level, else default_height.
double resolve_height(const HeightAttributes& attrs, const HeightPolicy& policy = {});

struct FeatureIssue {
  std::size_t feature_index = 0;
  std::string id;
  std::string message;
};

struct ParseResult {
  Region region;
  std::vector<FeatureIssue> issues;  // per-feature problems, non-fatal
};

// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon building
// footprints. MultiPolygon parts become separate buildings "<id>_<part>".
// Throws ParseError on malformed JSON and ValidationError if no building
// survives.
ParseResult parse_region(std::string_view document, const HeightPolicy& policy = {},
                         std::string name = {});

// Canonical debugging dump; key order and number formatting are stable.
nlohmann::json region_to_json(const Region& region);

}  // namespace cityflow
