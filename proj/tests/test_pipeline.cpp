#include <doctest.h>

#include "cityflow/error.hpp"
#include "cityflow/binary_io.hpp"
#include "cityflow/pipeline.hpp"
#include "support.hpp"

using namespace cityflow;

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("file stems") {
  CHECK(file_stem("way/123") == "way_123");
  CHECK(file_stem("b1_0") == "b1_0");
  CHECK(file_stem("a b:c") == "a_b_c");
  CHECK(file_stem("..") != "..");
}

TEST_CASE("artifact log records relative paths and checksums") {
  const auto dir = testing::temp_dir("artifacts");
  ArtifactLog log(dir.string());
  log.write("sub/x.txt", "abc");
  REQUIRE(log.records().size() == 1);
  CHECK(log.records()[0].path == "sub/x.txt");
  CHECK(log.records()[0].bytes == 3);
  CHECK(log.records()[0].sha256 == sha256_hex("abc"));
  CHECK(io::read_file((dir / "sub/x.txt").string()) == "abc");
  log.write((dir / "y.bin").string(), "z");
  CHECK(log.records()[1].path == "y.bin");

  PipelineConfig c;
  const auto m = run_manifest("prior", nlohmann::json::object(), c, log);
  CHECK(m["artifacts"].size() == 2);
  CHECK(m["config_sha256"] == sha256_hex("{}"));
  CHECK(m.contains("seeds"));
}

TEST_CASE("reference asset is a gabled version of the extrusion") {
  Polygon p;
  p.outer = testing::rect_ring(0, 0, 20, 10);
  const auto r = testing::make_record("g", p, 12);
  const auto frame = frame_for_building(r, 32);
  const auto ref = synthesize_reference(r, frame);
  const auto lod1 = extrude_lod1(r, frame);
  CHECK(ref.count() < lod1.count());
  CHECK(ref.count() > lod1.count() * 3 / 4);
  for (const auto& idx : ref.active()) CHECK(lod1.at(idx));
  // Same footprint from above.
  CHECK(rasterize_topdown(ref, 32) == rasterize_topdown(lod1, 32));
}

TEST_CASE("conditions come out with the configured shapes") {
  Polygon p;
  p.outer = testing::rect_ring(0, 0, 8, 8);
  const auto r = testing::make_record("c", p, 8);
  PipelineConfig c;
  c.grid.resolution = 16;
  c.image_patch = 4;
  c.model.d_cond = 6;
  const auto ref = synthesize_reference(r, frame_for_building(r, 16));
  const auto cond = building_conditions(c, ref, nullptr);
  CHECK(cond.top.tokens.rows == 16);
  CHECK(cond.top.tokens.cols == 6);
  CHECK(cond.front.source == ConditionSource::frontal);
}

TEST_CASE("unknown subcommand and mesh loading errors") {
  PipelineConfig c;
  ArtifactLog log(testing::temp_dir("unknown").string());
  CHECK_THROWS_AS(run_subcommand("render", c, 1, log), ArgumentError);
  CHECK_THROWS_AS(load_mesh("scene.stl"), ArgumentError);
}
