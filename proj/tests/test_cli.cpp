#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cityflow/error.hpp"
#include "cityflow/binary_io.hpp"
#include "cityflow/mesh.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kConfig = std::string(CITYFLOW_REPO_DATA) + "/demo_config.json";

int run(const std::string& args) {
  const std::string cmd = std::string(CITYFLOW_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quick(const fs::path& out) {
  return "--config " + kConfig + " --set output_dir=" + out.string() + " --set train.steps=5";
}

}  // namespace

TEST_CASE("version and usage") {
  CHECK(run("--version") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("prior") == 2);  // --config is required
}

TEST_CASE("config failures exit 2, runtime failures exit 1") {
  const auto out = testing::temp_dir("cli_errors");
  CHECK(run("prior " + quick(out) + " --set grid.resolution=30") == 2);
  CHECK(run("prior " + quick(out) + " --set grid.bogus=1") == 2);
  CHECK(run("prior --config " + (out / "missing.json").string()) == 2);
  CHECK(run("cluster " + quick(out) + " --set cluster.embeddings=nope.csv") == 2);
  // Valid config, but there are no generated grids to assemble.
  CHECK(run("assemble " + quick(out)) == 1);
}

TEST_CASE("prompts on the demo library") {
  const auto out = testing::temp_dir("cli_prompts");
  REQUIRE(run("prompts " + quick(out)) == 0);
  const auto text = cityflow::io::read_file((out / "prompts.jsonl").string());
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  const auto manifest = json::parse(cityflow::io::read_file((out / "manifest.prompts.json").string()));
  CHECK(manifest["artifacts"][0]["path"] == "prompts.jsonl");
}

TEST_CASE("eval of two identical meshes") {
  const auto out = testing::temp_dir("cli_eval");
  cityflow::VoxelGrid g({4, 1.0, {}});
  g.set(1, 1, 1);
  g.set(1, 2, 1);
  std::ofstream(out / "a.obj") << cityflow::export_mesh(cityflow::voxels_to_mesh(g), cityflow::MeshFormat::obj);
  const auto args = "eval " + quick(out) + " --set eval.generated_mesh=" + (out / "a.obj").string() +
                    " --set eval.reference_mesh=" + (out / "a.obj").string() + " --set eval.points=2000" +
                    " --set eval.embeddings=";
  REQUIRE(run(args) == 0);
  const auto report = json::parse(cityflow::io::read_file((out / "eval/report.json").string()));
  CHECK(report["cd"] == 0.0);
  CHECK(report["fscore"] == 1.0);
  CHECK(fs::exists(out / "eval/summary.csv"));
}

TEST_CASE("ingest, prior and cluster on the demo region") {
  const auto out = testing::temp_dir("cli_front");
  REQUIRE(run("ingest " + quick(out)) == 0);
  REQUIRE(run("prior " + quick(out) + " --jobs 2") == 0);
  REQUIRE(run("cluster " + quick(out)) == 0);
  const auto region = json::parse(cityflow::io::read_file((out / "region.json").string()));
  CHECK(region["buildings"].size() == 5);
  CHECK(fs::exists(out / "priors/block-c.lod1.uvox"));
  const auto labels = cityflow::io::read_file((out / "clusters.csv").string());
  CHECK(labels.rfind("id,label,probability\n", 0) == 0);
  CHECK(std::count(labels.begin(), labels.end(), '\n') == 6);
}

TEST_CASE("generate twice gives identical latents") {
  const auto out = testing::temp_dir("cli_generate");
  REQUIRE(run("train " + quick(out)) == 0);
  REQUIRE(run("generate " + quick(out)) == 0);
  const auto first = cityflow::io::read_file((out / "generated/block-a.ulat").string());
  const auto manifest1 = cityflow::io::read_file((out / "manifest.generate.json").string());
  REQUIRE(run("generate " + quick(out) + " --jobs 3") == 0);
  CHECK(cityflow::io::read_file((out / "generated/block-a.ulat").string()) == first);
  CHECK(cityflow::io::read_file((out / "manifest.generate.json").string()) == manifest1);
  // A model trained with another architecture is refused.
  CHECK(run("generate " + quick(out) + " --set model.d_model=16") == 2);
}
