#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "cityflow/binary_io.hpp"
#include "cityflow/config.hpp"
#include "cityflow/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using cityflow::ConfigError;

struct Invocation {
  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
};

nlohmann::json load_config_doc(const Invocation& inv) {
  std::string text;
  try {
    text = cityflow::io::read_file(inv.config_path);
  } catch (const cityflow::Error& e) {
    throw ConfigError("--config", e.what());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("--config", "top level must be an object");
  for (const auto& o : inv.overrides) cityflow::apply_override(doc, o);
  return doc;
}

int run(const std::string& subcommand, const Invocation& inv) {
  const auto doc = load_config_doc(inv);
  auto config = cityflow::parse_config(doc);
  cityflow::resolve_paths(config, fs::absolute(inv.config_path).parent_path().string());
  cityflow::validate_for(config, subcommand);

  cityflow::ArtifactLog log(config.output_dir);
  const auto summary = cityflow::run_subcommand(subcommand, config, inv.jobs, log);
  const auto manifest = cityflow::run_manifest(subcommand, doc, config, log);
  const auto manifest_path = (fs::path(config.output_dir) / ("manifest." + subcommand + ".json")).string();
  cityflow::io::write_file(manifest_path, manifest.dump(2) + "\n");
  std::cout << subcommand << ": " << summary << "\n"
            << subcommand << ": " << log.records().size() << " artifacts, manifest " << manifest_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"City-scale building generation from footprint priors"};
  app.set_version_flag("--version", std::string("cityflow ") + cityflow::kVersion + " (formats: " +
                                        cityflow::kFormatVersions + ")");
  app.require_subcommand(1);

  Invocation inv;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"ingest", "Parse the region GeoJSON into building records"},
      {"prior", "Write LOD0/LOD1 voxel priors per building"},
      {"train", "Train the flow model on the region"},
      {"generate", "Sample a voxel grid per building"},
      {"assemble", "Mesh and place generated buildings into one scene"},
      {"eval", "Compute geometry and consistency metrics"},
      {"cluster", "Cluster buildings by embedding and height"},
      {"prompts", "Enumerate descriptor prompts"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", inv.config_path, "Pipeline config JSON")->required();
    sub->add_option("--set", inv.overrides, "Override a config value, key.path=value")->take_all();
    sub->add_option("-j,--jobs", inv.jobs, "Worker threads for per-building work")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string subcommand = app.get_subcommands().front()->get_name();
  try {
    return run(subcommand, inv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cityflow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
