#include "cityflow/config.hpp"

#include <filesystem>
#include <set>

namespace cityflow {

namespace {

using nlohmann::json;

// Walks one JSON object, reading typed fields and rejecting unknown keys.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(node_.contains(key) ? node_.at(key) : empty, field(key));
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() == false && v.get<long long>() < 0) {
            throw ConfigError(field(key), "expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  template <typename T>
  void require_range(const std::string& key, T value, T lo, T hi) const {
    if (value < lo || value > hi) {
      throw ConfigError(field(key), "value " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
                                        std::to_string(hi) + "]");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

std::string PipelineConfig::checkpoint_path() const {
  if (!checkpoint.empty()) return checkpoint;
  return (std::filesystem::path(output_dir) / "model.uflw").string();
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

PipelineConfig parse_config(const json& doc) {
  PipelineConfig c;
  Section root(doc, "");
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  {
    auto s = root.child("region");
    s.read("geojson", c.region.geojson);
    s.read("name", c.region.name);
    s.read("meters_per_level", c.region.heights.meters_per_level);
    s.read("default_height", c.region.heights.default_height);
    if (!(c.region.heights.meters_per_level > 0.0)) throw ConfigError(s.field("meters_per_level"), "must be positive");
    if (!(c.region.heights.default_height > 0.0)) throw ConfigError(s.field("default_height"), "must be positive");
  }
  {
    auto s = root.child("grid");
    s.read("resolution", c.grid.resolution);
    s.read("padding", c.grid.padding);
    s.require_range("resolution", c.grid.resolution, 2, 512);
    s.require_range("padding", c.grid.padding, 0.0, 1.0);
  }
  {
    auto s = root.child("latent");
    s.read("resolution", c.latent.resolution);
    s.read("channels", c.latent.channels);
    s.read("lift_seed", c.latent.lift_seed);
    s.require_range("resolution", c.latent.resolution, 1, 256);
    s.require_range("channels", c.latent.channels, 1, 256);
    if (c.grid.resolution % c.latent.resolution != 0) {
      throw ConfigError(s.field("resolution"), "must divide grid.resolution (" + std::to_string(c.grid.resolution) + ")");
    }
  }
  {
    auto s = root.child("model");
    s.read("patch", c.model.patch);
    s.read("d_model", c.model.d_model);
    s.read("heads", c.model.heads);
    s.read("blocks", c.model.blocks);
    s.read("d_cond", c.model.d_cond);
    s.read("ffn_hidden", c.model.ffn_hidden);
    s.read("time_frequencies", c.model.time_frequencies);
    s.read("image_patch", c.image_patch);
    s.read("image_seed", c.image_seed);
    c.model.latent_resolution = c.latent.resolution;
    c.model.channels = c.latent.channels;
    try {
      c.model.validate();
    } catch (const Error& e) {
      throw ConfigError("model", e.what());
    }
    s.require_range("image_patch", c.image_patch, 1, 512);
    if (c.grid.resolution % c.image_patch != 0) {
      throw ConfigError(s.field("image_patch"), "must divide grid.resolution");
    }
  }
  {
    auto s = root.child("prior");
    s.read("train_lambdas", c.mix.train_lambdas);
    s.read("train_lods", c.mix.train_lods);
    s.read("inference_lambda", c.mix.inference_lambda);
    s.read("inference_lod", c.mix.inference_lod);
    s.require_range("inference_lambda", c.mix.inference_lambda, 0.0, 1.0);
    s.require_range("inference_lod", c.mix.inference_lod, 0, 1);
    for (double l : c.mix.train_lambdas) s.require_range("train_lambdas", l, 0.0, 1.0);
    for (int l : c.mix.train_lods) s.require_range("train_lods", l, 0, 1);
  }
  {
    auto s = root.child("train");
    c.train.seed = c.seed;
    s.read("steps", c.train.steps);
    s.read("batch_size", c.train.batch_size);
    s.read("learning_rate", c.train.learning_rate);
    s.read("momentum", c.train.momentum);
    s.read("clip_norm", c.train.clip_norm);
    s.read("seed", c.train.seed);
    s.read("checkpoint", c.checkpoint);
    s.require_range("steps", c.train.steps, 0, 10'000'000);
    s.require_range("batch_size", c.train.batch_size, 1, 4096);
    if (!(c.train.learning_rate > 0.0)) throw ConfigError(s.field("learning_rate"), "must be positive");
    s.require_range("momentum", c.train.momentum, 0.0, 0.999999);
    c.train.mix = c.mix;
  }
  {
    auto s = root.child("generate");
    s.read("steps", c.generate.steps);
    s.read("frontal_image", c.generate.frontal_image);
    s.require_range("steps", c.generate.steps, 1, 100000);
  }
  {
    auto s = root.child("assemble");
    s.read("formats", c.assemble.formats);
    for (const auto& f : c.assemble.formats) {
      if (f != "obj" && f != "ply") throw ConfigError(s.field("formats"), "unknown format \"" + f + "\"");
    }
  }
  {
    auto s = root.child("eval");
    s.read("points", c.eval.points);
    s.read("building_points", c.eval.building_points);
    double tau = 0.0;
    if (s.has("tau")) {
      s.read("tau", tau);
      if (!(tau > 0.0)) throw ConfigError(s.field("tau"), "must be positive");
      c.eval.tau = tau;
    }
    s.read("seed", c.eval.seed);
    s.read("generated_mesh", c.eval.generated_mesh);
    s.read("reference_mesh", c.eval.reference_mesh);
    s.read("embeddings", c.eval.embeddings);
    s.read("reference_embeddings", c.eval.reference_embeddings);
    if (c.eval.points == 0) throw ConfigError(s.field("points"), "must be positive");
    if (c.eval.building_points == 0) throw ConfigError(s.field("building_points"), "must be positive");
    if (c.eval.generated_mesh.empty() != c.eval.reference_mesh.empty()) {
      throw ConfigError(s.field(c.eval.generated_mesh.empty() ? "generated_mesh" : "reference_mesh"),
                        "generated_mesh and reference_mesh must be given together");
    }
  }
  {
    auto s = root.child("cluster");
    s.read("embeddings", c.cluster.embeddings);
    s.read("min_cluster_size", c.cluster.hdbscan.min_cluster_size);
    s.read("min_samples", c.cluster.hdbscan.min_samples);
    s.read("allow_single_cluster", c.cluster.hdbscan.allow_single_cluster);
    std::string selection = "eom";
    s.read("selection", selection);
    if (selection == "eom") {
      c.cluster.hdbscan.selection = ClusterSelection::excess_of_mass;
    } else if (selection == "leaf") {
      c.cluster.hdbscan.selection = ClusterSelection::leaf;
    } else {
      throw ConfigError(s.field("selection"), "expected \"eom\" or \"leaf\"");
    }
    s.read("height_scale", c.cluster.features.height_scale);
    s.read("standardize", c.cluster.features.standardize);
    s.require_range("min_cluster_size", c.cluster.hdbscan.min_cluster_size, 2, 1 << 30);
    s.require_range("min_samples", c.cluster.hdbscan.min_samples, 1, 1 << 30);
  }
  {
    auto s = root.child("prompts");
    s.read("library", c.prompts.library);
  }
  return c;
}

void resolve_paths(PipelineConfig& c, const std::string& base_dir) {
  if (base_dir.empty()) return;
  auto fix = [&](std::string& path) {
    if (!path.empty() && std::filesystem::path(path).is_relative()) {
      path = (std::filesystem::path(base_dir) / path).lexically_normal().string();
    }
  };
  for (auto* p : {&c.output_dir, &c.region.geojson, &c.checkpoint, &c.generate.frontal_image,
                  &c.eval.generated_mesh, &c.eval.reference_mesh, &c.eval.embeddings,
                  &c.eval.reference_embeddings, &c.cluster.embeddings, &c.prompts.library}) {
    fix(*p);
  }
}

void validate_for(const PipelineConfig& c, const std::string& subcommand) {
  auto need_file = [](const std::string& field, const std::string& path) {
    if (path.empty()) throw ConfigError(field, "required for this subcommand");
    if (!std::filesystem::is_regular_file(path)) throw ConfigError(field, "file not found: " + path);
  };
  auto optional_file = [&](const std::string& field, const std::string& path) {
    if (!path.empty()) need_file(field, path);
  };
  const bool uses_region = subcommand != "prompts" &&
                           !(subcommand == "eval" && !c.eval.generated_mesh.empty());
  if (uses_region) need_file("region.geojson", c.region.geojson);
  if (subcommand == "generate") {
    need_file("train.checkpoint", c.checkpoint_path());
    optional_file("generate.frontal_image", c.generate.frontal_image);
  } else if (subcommand == "eval") {
    optional_file("eval.generated_mesh", c.eval.generated_mesh);
    optional_file("eval.reference_mesh", c.eval.reference_mesh);
    optional_file("eval.embeddings", c.eval.embeddings);
    optional_file("eval.reference_embeddings", c.eval.reference_embeddings);
    if (!c.eval.reference_embeddings.empty() && c.eval.embeddings.empty()) {
      throw ConfigError("eval.embeddings", "required when eval.reference_embeddings is set");
    }
  } else if (subcommand == "cluster") {
    need_file("cluster.embeddings", c.cluster.embeddings);
  } else if (subcommand == "prompts") {
    need_file("prompts.library", c.prompts.library);
  }
}

}  // namespace cityflow
