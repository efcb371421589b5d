#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/cluster.hpp"
#include "cityflow/error.hpp"
#include "cityflow/flow.hpp"
#include "cityflow/geo.hpp"
#include "cityflow/latent.hpp"

namespace cityflow {

// Invalid configuration; `field()` is the dotted path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config", field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  struct {
    std::string geojson;
    std::string name;
    HeightPolicy heights;
  } region;

  struct {
    int resolution = 64;
    double padding = 0.05;
  } grid;

  struct {
    int resolution = 16;
    int channels = 8;
    std::uint64_t lift_seed = 1;
  } latent;

  FlowConfig model;
  int image_patch = 4;
  std::uint64_t image_seed = 2;

  PriorMixPolicy mix;

  TrainSchedule train;
  std::string checkpoint;  // defaults to <output_dir>/model.uflw

  struct {
    int steps = 16;
    std::string frontal_image;  // optional PGM shared by every building
  } generate;

  struct {
    std::vector<std::string> formats{"obj", "ply"};
  } assemble;

  struct {
    std::size_t points = 20000;
    std::size_t building_points = 2048;
    std::optional<double> tau;
    std::uint64_t seed = 3;
    std::string generated_mesh;  // both set: compare these two meshes only
    std::string reference_mesh;
    std::string embeddings;
    std::string reference_embeddings;
  } eval;

  struct {
    std::string embeddings;
    HdbscanOptions hdbscan;
    FeatureOptions features;
  } cluster;

  struct {
    std::string library;
  } prompts;

  std::string checkpoint_path() const;
};

// Applies "a.b.c=value" overrides; values parse as JSON when they can and
// are taken as strings otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Typed read of every known field; unknown keys and type or range problems
// throw ConfigError with the field path.
PipelineConfig parse_config(const nlohmann::json& doc);

// Rewrites relative paths (inputs and the output directory) against base_dir,
// normally the directory holding the config file.
void resolve_paths(PipelineConfig& config, const std::string& base_dir);

// Checks the inputs a subcommand reads exist.
void validate_for(const PipelineConfig& config, const std::string& subcommand);

}  // namespace cityflow
