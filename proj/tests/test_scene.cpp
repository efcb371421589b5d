#include <doctest.h>

#include <cmath>

#include "cityflow/error.hpp"
#include "cityflow/metrics.hpp"
#include "cityflow/scene.hpp"
#include "mesh_checks.hpp"
#include "support.hpp"

using namespace cityflow;
using testing::make_record;
using testing::rect_ring;

namespace {

Rect bounds_of(std::initializer_list<const BuildingRecord*> records) {
  Rect r = Rect::empty();
  for (const auto* b : records) r.expand(b->footprint.bbox());
  return r;
}

// The asset grid re-based into the region frame by its placement.
VoxelGrid placed_grid(const VoxelGrid& asset, const PlacedAsset& p) {
  const Vec3 o = p.apply({0, 0, 0});
  VoxelGrid out({asset.resolution(), asset.cell_size() * p.scale.x, o});
  for (const auto& idx : asset.active()) out.set(idx);
  return out;
}

}  // namespace

TEST_CASE("asset from its own prior lands on the footprint") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    Polygon poly = testing::random_rectilinear(rng, 1.5);
    const double dx = 100 * rng.uniform(), dy = -50 * rng.uniform();
    for (auto& v : poly.outer) v = {v.x + dx, v.y + dy};
    const auto r = make_record("b", poly, 12);
    const auto frame = frame_for_building(r, 32);
    const auto asset = extrude_lod1(r, frame);
    const auto placed = place_building(asset, r, bounds_of({&r}));
    CHECK(placed.asset.scale.x == doctest::Approx(1.0));
    CHECK(placed.asset.scale.z == placed.asset.scale.x);
    CHECK(placed.asset.translation.x == r.centroid.x);
    CHECK(placed.asset.translation.z == 0.0);

    const auto g = placed_grid(asset, placed.asset);
    const double iou = iou_top(rasterize_topdown(g, 32), rasterize_footprint(poly, g.frame(), 32));
    CHECK(iou >= 0.9);

    // Placed footprint centroid within half a voxel of the record centroid.
    const auto c = footprint_centroid(asset);
    const auto world = placed.asset.apply({c.x, c.y, 0});
    CHECK(std::hypot(world.x - r.centroid.x, world.y - r.centroid.y) <= 0.5 * frame.cell_size + 1e-9);
    CHECK(testing::is_watertight(placed.mesh));
  }
}

TEST_CASE("identity placement and scaling of a coarser asset") {
  Polygon sq;
  sq.outer = rect_ring(-4, -4, 4, 4);
  const auto r = make_record("o", sq, 8);
  const auto frame = frame_for_building(r, 16);
  const auto asset = extrude_lod1(r, frame);
  const auto placed = place_building(asset, r, bounds_of({&r}));
  const auto local = voxels_to_mesh(asset);
  const auto c = footprint_centroid(asset);
  for (std::size_t i = 0; i < local.vertices.size(); ++i) {
    CHECK(placed.mesh.vertices[i].x == doctest::Approx(local.vertices[i].x - c.x));
    CHECK(placed.mesh.vertices[i].z == doctest::Approx(local.vertices[i].z));
  }

  // An asset generated at half resolution in a frame of another size is
  // rescaled to the building's frame.
  Polygon half;
  half.outer = rect_ring(-2, -2, 2, 2);
  const auto small = extrude_lod1(make_record("o", half, 4), GridFrame{8, 0.525, {-2.1, -2.1, 0}});
  const auto p2 = placement_for(small, r, bounds_of({&r}));
  CHECK(p2.scale.x == doctest::Approx(frame.extent() / 4.2));
  CHECK(p2.source_resolution == 8);
}

TEST_CASE("placement errors") {
  Polygon sq;
  sq.outer = rect_ring(0, 0, 4, 4);
  const auto r = make_record("x", sq, 4);
  const auto asset = extrude_lod1(r, frame_for_building(r, 8));
  CHECK_THROWS_AS(placement_for(asset, r, Rect{10, 10, 20, 20}), PlacementError);
  CHECK_THROWS_AS(placement_for(VoxelGrid({8, 1.0, {}}), r, Rect{-1, -1, 5, 5}), PlacementError);
}

TEST_CASE("disjoint footprints stay disjoint and distances are preserved") {
  Polygon a, b;
  a.outer = rect_ring(0, 0, 10, 6);
  b.outer = rect_ring(20, 3, 30, 9);
  const auto ra = make_record("a", a, 9), rb = make_record("b", b, 9);
  const auto bounds = bounds_of({&ra, &rb});
  const auto pa = place_building(extrude_lod1(ra, frame_for_building(ra, 16)), ra, bounds);
  const auto pb = place_building(extrude_lod1(rb, frame_for_building(rb, 16)), rb, bounds);
  double max_a = -1e9, min_b = 1e9;
  for (const auto& v : pa.mesh.vertices) max_a = std::max(max_a, v.x);
  for (const auto& v : pb.mesh.vertices) min_b = std::min(min_b, v.x);
  CHECK(max_a < min_b);
  const auto& ta = pa.asset.translation;
  const auto& tb = pb.asset.translation;
  CHECK(std::hypot(ta.x - tb.x, ta.y - tb.y) == doctest::Approx(std::hypot(ra.centroid.x - rb.centroid.x, ra.centroid.y - rb.centroid.y)));
}

TEST_CASE("merge scene") {
  VoxelGrid g({2, 1.0, {}});
  g.set(0, 0, 0);
  const auto cube = voxels_to_mesh(g);
  std::vector<PlacedBuilding> parts;
  for (const char* id : {"c", "a", "b"}) {
    PlacedBuilding p;
    p.asset.building_id = id;
    p.mesh = cube;
    parts.push_back(p);
  }
  const auto scene = merge_scene(parts);
  CHECK(scene.vertices.size() == 24);
  CHECK(scene.triangles.size() == 36);
  REQUIRE(scene.groups.size() == 3);
  CHECK(scene.groups[0].name == "a");
  CHECK(scene.groups[2].first_triangle == 24);
  CHECK_NOTHROW(scene.validate());

  std::reverse(parts.begin(), parts.end());
  CHECK(export_mesh(merge_scene(parts), MeshFormat::obj) == export_mesh(scene, MeshFormat::obj));

  const auto single = merge_scene({parts[0]});
  CHECK(single.vertices == cube.vertices);
  CHECK(single.triangles == cube.triangles);
  CHECK(single.groups.size() == 1);

  const auto manifest = scene_manifest(parts);
  CHECK(manifest["buildings"].size() == 3);
  CHECK(manifest["buildings"][0]["id"] == "a");
}
