#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/config.hpp"
#include "cityflow/flow.hpp"
#include "cityflow/geo.hpp"
#include "cityflow/mesh.hpp"
#include "cityflow/voxel.hpp"

namespace cityflow {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kFormatVersions = "UVOX 1, ULAT 1, UFLW 1, UEMB 1";

std::string sha256_hex(std::string_view bytes);

struct ArtifactRecord {
  std::string path;  // relative to the output directory when inside it
  std::string sha256;
  std::size_t bytes = 0;
};

// Writes files under an output directory and remembers their checksums.
class ArtifactLog {
 public:
  explicit ArtifactLog(std::string output_dir);

  // `path` is relative to the output directory unless absolute.
  void write(const std::string& path, std::string_view bytes);
  std::string resolve(const std::string& path) const;
  const std::vector<ArtifactRecord>& records() const noexcept { return records_; }

 private:
  std::string output_dir_;
  std::vector<ArtifactRecord> records_;
};

nlohmann::json run_manifest(const std::string& subcommand, const nlohmann::json& config_doc,
                            const PipelineConfig& config, const ArtifactLog& log);

// Filesystem-safe stem for a building id.
std::string file_stem(const std::string& id);

Region load_region(const PipelineConfig& config);

// Stand-in for a building's true shape: its footprint extruded to the eave
// (three quarters of the height) and topped with a gable whose ridge runs
// along the longer bbox side and reaches the full height.
VoxelGrid synthesize_reference(const BuildingRecord& record, const GridFrame& frame);

struct BuildingConditions {
  ConditionTokens top;
  ConditionTokens front;
};

// Top view from the reference height map; front view from `frontal` when
// given, else from the reference's frontal render.
BuildingConditions building_conditions(const PipelineConfig& config, const VoxelGrid& reference,
                                       const GrayImage* frontal);

Mesh load_mesh(const std::string& path);

// Runs one subcommand, writing its artifacts through `log`. Returns a short
// human-readable summary.
std::string run_subcommand(const std::string& subcommand, const PipelineConfig& config, int jobs,
                           ArtifactLog& log);

}  // namespace cityflow
