#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/geo.hpp"
#include "cityflow/mesh.hpp"
#include "cityflow/voxel.hpp"

namespace cityflow {

class PlacementError : public Error {
 public:
  explicit PlacementError(const std::string& what) : Error("scene", what) {}
};

// Maps asset-local p to translation + R * (scale * (p - pivot)). The pivot is
// the asset's footprint centroid at ground level, so `translation` is where
// that centroid lands. Rotation stays at identity: priors are generated in
// the geospatial frame, so orientation is already in the geometry.
struct PlacedAsset {
  std::string building_id;
  Vec3 scale{1.0, 1.0, 1.0};
  Vec3 translation;
  Vec3 pivot;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  int source_resolution = 0;

  Vec3 apply(const Vec3& p) const;
};

struct PlacedBuilding {
  PlacedAsset asset;
  Mesh mesh;
};

// Mean (x, y) of the occupied columns' centers in grid-local meters.
Vec2 footprint_centroid(const VoxelGrid& grid);

// Scales the asset's frame onto the building's padded prior frame and moves
// its footprint centroid onto record.centroid at z = 0.
PlacedAsset placement_for(const VoxelGrid& asset, const BuildingRecord& record, const Rect& region_bounds,
                          double padding = 0.05);

Mesh transform_mesh(const Mesh& mesh, const PlacedAsset& placement);

PlacedBuilding place_building(const VoxelGrid& asset, const BuildingRecord& record, const Rect& region_bounds,
                              double padding = 0.05);

// Concatenates the parts sorted by building id, one group per part.
Mesh merge_scene(std::vector<PlacedBuilding> placed);

// building_id -> transform listing; x east, y north, z up, meters.
nlohmann::json scene_manifest(const std::vector<PlacedBuilding>& placed);

}  // namespace cityflow
