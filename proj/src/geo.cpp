#include "cityflow/geo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>

#include "cityflow/error.hpp"

namespace cityflow {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kMaxLat = 85.0;

void check_lat(double lat) {
  if (!(std::abs(lat) < kMaxLat)) {
    throw DomainError("geo", "latitude " + std::to_string(lat) + " outside (-85, 85)");
  }
}

// Accepts JSON numbers and numeric strings such as "12" or "12.5 m".
std::optional<double> number_of(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && std::isfinite(d)) return d;
  }
  return std::nullopt;
}

HeightAttributes height_attributes(const nlohmann::json& props, const HeightPolicy& policy) {
  HeightAttributes attrs;
  if (!props.is_object()) return attrs;
  for (const auto& key : policy.height_keys) {
    if (auto it = props.find(key); it != props.end()) {
      if (auto d = number_of(*it)) {
        attrs.height = *d;
        break;
      }
    }
  }
  for (const auto& key : policy.level_keys) {
    if (auto it = props.find(key); it != props.end()) {
      if (auto d = number_of(*it)) {
        attrs.levels = static_cast<int>(std::lround(*d));
        break;
      }
    }
  }
  return attrs;
}

std::string feature_id(const nlohmann::json& feature, std::size_t index) {
  auto as_text = [](const nlohmann::json& v) -> std::optional<std::string> {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    return std::nullopt;
  };
  if (auto props = feature.find("properties"); props != feature.end() && props->is_object()) {
    if (auto it = props->find("id"); it != props->end()) {
      if (auto s = as_text(*it)) return *s;
    }
  }
  if (auto it = feature.find("id"); it != feature.end()) {
    if (auto s = as_text(*it)) return *s;
  }
  return "bldg_" + std::to_string(index);
}

// Raw lon/lat ring, validated and closed, winding untouched.
struct LonLatPolygon {
  std::vector<Ring> rings;  // [0] outer, rest holes; x = lon, y = lat
};

Ring parse_ring(const nlohmann::json& coords) {
  if (!coords.is_array()) throw ValidationError("geo", "ring is not an array");
  Ring ring;
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw ValidationError("geo", "invalid position");
    }
    const Vec2 p{pos[0].get<double>(), pos[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("geo", "non-finite position");
    if (ring.empty() || !(ring.back() == p)) ring.push_back(p);
  }
  while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw ValidationError("geo", "ring has fewer than 3 distinct vertices");
  ring.push_back(ring.front());
  return ring;
}

LonLatPolygon parse_polygon(const nlohmann::json& coords) {
  if (!coords.is_array() || coords.empty()) throw ValidationError("geo", "polygon has no rings");
  LonLatPolygon out;
  for (const auto& r : coords) out.rings.push_back(parse_ring(r));
  return out;
}

struct PendingBuilding {
  std::string id;
  std::size_t feature_index;
  LonLatPolygon shape;
  double height;
  std::optional<int> levels;
};

Polygon project(const LonLatPolygon& shape, GeoPoint origin) {
  Polygon poly;
  for (std::size_t r = 0; r < shape.rings.size(); ++r) {
    Ring ring;
    ring.reserve(shape.rings[r].size());
    for (Vec2 ll : shape.rings[r]) ring.push_back(to_local_frame(ll.x, ll.y, origin));
    if (r == 0) {
      orient(ring, true);
      poly.outer = std::move(ring);
    } else {
      orient(ring, false);
      poly.holes.push_back(std::move(ring));
    }
  }
  return poly;
}

}  // namespace

Vec2 to_local_frame(double lon, double lat, GeoPoint origin) {
  check_lat(lat);
  check_lat(origin.lat);
  const double k = kEarthRadius * kDeg;
  return {(lon - origin.lon) * std::cos(origin.lat * kDeg) * k, (lat - origin.lat) * k};
}

GeoPoint from_local_frame(Vec2 local, GeoPoint origin) {
  check_lat(origin.lat);
  const double k = kEarthRadius * kDeg;
  const GeoPoint out{origin.lon + local.x / (std::cos(origin.lat * kDeg) * k),
                     origin.lat + local.y / k};
  check_lat(out.lat);
  return out;
}

const BuildingRecord* Region::find(std::string_view id) const {
  auto it = std::lower_bound(buildings.begin(), buildings.end(), id,
                             [](const BuildingRecord& b, std::string_view key) { return b.id < key; });
  return (it != buildings.end() && it->id == id) ? &*it : nullptr;
}

double resolve_height(const HeightAttributes& attrs, const HeightPolicy& policy) {
  if (attrs.height) {
    if (!(*attrs.height > 0.0) || !std::isfinite(*attrs.height)) {
      throw ValidationError("geo", "explicit height must be positive, got " +
                                       std::to_string(*attrs.height));
    }
    return *attrs.height;
  }
  if (attrs.levels && *attrs.levels > 0) return *attrs.levels * policy.meters_per_level;
  if (!(policy.default_height > 0.0)) throw ValidationError("geo", "default height must be positive");
  return policy.default_height;
}

ParseResult parse_region(std::string_view document, const HeightPolicy& policy, std::string name) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document.begin(), document.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("geo", "malformed JSON", e.byte);
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw ParseError("geo", "document is not a GeoJSON FeatureCollection", 0);
  }
  const auto features = doc.find("features");
  if (features == doc.end() || !features->is_array()) {
    throw ParseError("geo", "FeatureCollection has no \"features\" array", 0);
  }
  if (name.empty()) name = doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "region";

  ParseResult result;
  std::vector<PendingBuilding> pending;
  std::set<std::string> seen;

  for (std::size_t index = 0; index < features->size(); ++index) {
    const auto& feature = (*features)[index];
    const std::string id = feature.is_object() ? feature_id(feature, index) : "bldg_" + std::to_string(index);
    auto issue = [&](const std::string& id_, const std::string& msg) {
      result.issues.push_back({index, id_, msg});
    };
    if (!feature.is_object()) {
      issue(id, "feature is not an object");
      continue;
    }
    const auto geom = feature.find("geometry");
    if (geom == feature.end() || !geom->is_object()) {
      issue(id, "missing geometry");
      continue;
    }
    const std::string type = geom->value("type", "");
    const auto coords = geom->find("coordinates");
    if (type != "Polygon" && type != "MultiPolygon") {
      issue(id, "unsupported geometry \"" + type + "\"");
      continue;
    }
    if (coords == geom->end()) {
      issue(id, "missing coordinates");
      continue;
    }

    double height = 0.0;
    const auto attrs = height_attributes(feature.value("properties", nlohmann::json::object()), policy);
    try {
      height = resolve_height(attrs, policy);
    } catch (const ValidationError& e) {
      issue(id, e.what());
      continue;
    }

    std::vector<std::pair<std::string, const nlohmann::json*>> parts;
    if (type == "Polygon") {
      parts.emplace_back(id, &*coords);
    } else if (coords->is_array()) {
      for (std::size_t p = 0; p < coords->size(); ++p) {
        parts.emplace_back(id + "_" + std::to_string(p), &(*coords)[p]);
      }
    } else {
      issue(id, "MultiPolygon coordinates are not an array");
      continue;
    }
    for (const auto& [part_id, part] : parts) {
      if (seen.count(part_id)) {
        issue(part_id, "duplicate building id");
        continue;
      }
      try {
        auto shape = parse_polygon(*part);
        for (const auto& ring : shape.rings) check_lat(ring.front().y);
        pending.push_back({part_id, index, std::move(shape), height, attrs.levels});
        seen.insert(part_id);
      } catch (const Error& e) {
        issue(part_id, e.what());
      }
    }
  }

  // Origin: centroid of footprint centroids. The projection is affine for a
  // fixed origin latitude, so projecting once about a provisional origin and
  // mapping the mean centroid back gives the exact centroid-of-centroids.
  GeoPoint provisional{0.0, 0.0};
  std::size_t count = 0;
  for (const auto& b : pending) {
    for (Vec2 ll : b.shape.rings[0]) {
      provisional.lon += ll.x;
      provisional.lat += ll.y;
      ++count;
    }
  }
  if (count) {
    provisional.lon /= count;
    provisional.lat /= count;
  }

  Region& region = result.region;
  region.name = std::move(name);
  {
    Vec2 mean{0.0, 0.0};
    std::size_t valid = 0;
    for (const auto& b : pending) {
      const Polygon poly = project(b.shape, provisional);
      if (!(std::abs(signed_area(poly.outer)) > 0.0)) continue;
      mean = mean + ring_centroid(poly.outer);
      ++valid;
    }
    region.origin = valid ? from_local_frame((1.0 / valid) * mean, provisional) : provisional;
  }

  for (auto& b : pending) {
    Polygon poly = project(b.shape, region.origin);
    if (!(signed_area(poly.outer) > 0.0)) {
      result.issues.push_back({b.feature_index, b.id, "degenerate footprint with zero area"});
      continue;
    }
    BuildingRecord rec;
    rec.id = b.id;
    rec.centroid = ring_centroid(poly.outer);
    rec.footprint = std::move(poly);
    rec.height = b.height;
    rec.levels = b.levels;
    region.buildings.push_back(std::move(rec));
  }
  if (region.buildings.empty()) throw ValidationError("geo", "empty region: no valid buildings");

  std::sort(region.buildings.begin(), region.buildings.end(),
            [](const BuildingRecord& a, const BuildingRecord& b) { return a.id < b.id; });
  region.bounds = Rect::empty();
  for (const auto& b : region.buildings) {
    region.bounds.expand(b.footprint.bbox());
    for (const auto& h : b.footprint.holes) region.bounds.expand(ring_bbox(h));
  }
  return result;
}

nlohmann::json region_to_json(const Region& region) {
  using nlohmann::json;
  auto ring_json = [](const Ring& ring) {
    json arr = json::array();
    for (Vec2 p : ring) arr.push_back({p.x, p.y});
    return arr;
  };
  json buildings = json::array();
  for (const auto& b : region.buildings) {
    json holes = json::array();
    for (const auto& h : b.footprint.holes) holes.push_back(ring_json(h));
    json rec = {{"id", b.id},
                {"height", b.height},
                {"centroid", {b.centroid.x, b.centroid.y}},
                {"outer", ring_json(b.footprint.outer)},
                {"holes", holes}};
    rec["levels"] = b.levels ? json(*b.levels) : json(nullptr);
    buildings.push_back(std::move(rec));
  }
  return {{"name", region.name},
          {"origin", {region.origin.lon, region.origin.lat}},
          {"bounds",
           {region.bounds.min_x, region.bounds.min_y, region.bounds.max_x, region.bounds.max_y}},
          {"buildings", buildings}};
}

}  // namespace cityflow
