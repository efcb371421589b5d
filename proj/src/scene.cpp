#include "cityflow/scene.hpp"

#include <algorithm>

namespace cityflow {

Vec3 PlacedAsset::apply(const Vec3& p) const {
  const double x = scale.x * (p.x - pivot.x);
  const double y = scale.y * (p.y - pivot.y);
  const double z = scale.z * (p.z - pivot.z);
  const auto& r = rotation;
  return {translation.x + r[0] * x + r[1] * y + r[2] * z,
          translation.y + r[3] * x + r[4] * y + r[5] * z,
          translation.z + r[6] * x + r[7] * y + r[8] * z};
}

Vec2 footprint_centroid(const VoxelGrid& grid) {
  const int n = grid.resolution();
  const double h = grid.cell_size();
  double sx = 0.0, sy = 0.0;
  std::size_t columns = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (grid.at(i, j, k)) {
          sx += (i + 0.5) * h;
          sy += (j + 0.5) * h;
          ++columns;
          break;
        }
      }
    }
  }
  if (columns == 0) throw PlacementError("asset grid is empty");
  return {sx / static_cast<double>(columns), sy / static_cast<double>(columns)};
}

PlacedAsset placement_for(const VoxelGrid& asset, const BuildingRecord& record, const Rect& region_bounds,
                          double padding) {
  if (!region_bounds.contains(record.centroid)) {
    throw PlacementError("centroid of \"" + record.id + "\" lies outside the region bounds");
  }
  const GridFrame target = frame_for_building(record, asset.resolution(), padding);
  const double s = target.extent() / asset.frame().extent();
  const Vec2 c = footprint_centroid(asset);
  PlacedAsset p;
  p.building_id = record.id;
  p.scale = {s, s, s};
  p.pivot = {c.x, c.y, 0.0};
  p.translation = {record.centroid.x, record.centroid.y, 0.0};
  p.source_resolution = asset.resolution();
  return p;
}

Mesh transform_mesh(const Mesh& mesh, const PlacedAsset& placement) {
  Mesh out = mesh;
  for (auto& v : out.vertices) v = placement.apply(v);
  return out;
}

PlacedBuilding place_building(const VoxelGrid& asset, const BuildingRecord& record, const Rect& region_bounds,
                              double padding) {
  auto placement = placement_for(asset, record, region_bounds, padding);
  auto mesh = transform_mesh(voxels_to_mesh(asset), placement);
  return {std::move(placement), std::move(mesh)};
}

Mesh merge_scene(std::vector<PlacedBuilding> placed) {
  std::stable_sort(placed.begin(), placed.end(), [](const PlacedBuilding& a, const PlacedBuilding& b) {
    return a.asset.building_id < b.asset.building_id;
  });
  Mesh scene;
  for (const auto& part : placed) {
    const auto base = static_cast<std::uint32_t>(scene.vertices.size());
    scene.groups.push_back({part.asset.building_id, scene.triangles.size(), part.mesh.triangles.size()});
    scene.vertices.insert(scene.vertices.end(), part.mesh.vertices.begin(), part.mesh.vertices.end());
    for (const auto& t : part.mesh.triangles) scene.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return scene;
}

nlohmann::json scene_manifest(const std::vector<PlacedBuilding>& placed) {
  auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); };
  nlohmann::json buildings = nlohmann::json::array();
  for (const auto& p : placed) {
    buildings.push_back({{"id", p.asset.building_id},
                         {"scale", vec(p.asset.scale)},
                         {"translation", vec(p.asset.translation)},
                         {"pivot", vec(p.asset.pivot)},
                         {"rotation", p.asset.rotation},
                         {"source_resolution", p.asset.source_resolution},
                         {"vertices", p.mesh.vertices.size()},
                         {"triangles", p.mesh.triangles.size()}});
  }
  std::sort(buildings.begin(), buildings.end(),
            [](const nlohmann::json& a, const nlohmann::json& b) { return a["id"] < b["id"]; });
  return {{"axes", "x east, y north, z up"}, {"units", "m"}, {"buildings", buildings}};
}

}  // namespace cityflow
