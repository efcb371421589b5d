#include "cityflow/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "cityflow/binary_io.hpp"
#include "cityflow/cluster.hpp"
#include "cityflow/image.hpp"
#include "cityflow/latent.hpp"
#include "cityflow/metrics.hpp"
#include "cityflow/parallel.hpp"
#include "cityflow/promptgen.hpp"
#include "cityflow/rng.hpp"
#include "cityflow/scene.hpp"

namespace cityflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw IoError("manifest", "SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

ArtifactLog::ArtifactLog(std::string output_dir) : output_dir_(std::move(output_dir)) {}

std::string ArtifactLog::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(output_dir_) / p).string();
}

void ArtifactLog::write(const std::string& path, std::string_view bytes) {
  const fs::path full(resolve(path));
  if (full.has_parent_path()) fs::create_directories(full.parent_path());
  io::write_file(full.string(), bytes);
  const auto rel = fs::path(path).is_absolute() ? fs::relative(full, output_dir_) : fs::path(path);
  const bool inside = !rel.empty() && *rel.begin() != "..";
  records_.push_back({inside ? rel.generic_string() : full.string(), sha256_hex(bytes), bytes.size()});
}

json run_manifest(const std::string& subcommand, const json& config_doc, const PipelineConfig& config,
                  const ArtifactLog& log) {
  json artifacts = json::array();
  for (const auto& a : log.records()) artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  return {{"subcommand", subcommand},
          {"version", kVersion},
          {"config_sha256", sha256_hex(config_doc.dump())},
          {"seeds",
           {{"seed", config.seed},
            {"train", config.train.seed},
            {"lift", config.latent.lift_seed},
            {"image", config.image_seed},
            {"eval", config.eval.seed}}},
          {"artifacts", artifacts}};
}

std::string file_stem(const std::string& id) {
  std::string out;
  for (char c : id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(keep ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

namespace {

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void check_stems(const Region& region) {
  std::set<std::string> stems;
  for (const auto& b : region.buildings) {
    if (!stems.insert(file_stem(b.id)).second) {
      throw ValidationError("pipeline", "building ids collide after filename sanitizing: \"" + b.id + "\"");
    }
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

GridFrame building_frame(const PipelineConfig& c, const BuildingRecord& b) {
  return frame_for_building(b, c.grid.resolution, c.grid.padding);
}

std::string prior_path(const BuildingRecord& b, int lod) {
  return "priors/" + file_stem(b.id) + ".lod" + std::to_string(lod) + ".uvox";
}

std::string generated_path(const BuildingRecord& b, const char* ext) {
  return "generated/" + file_stem(b.id) + ext;
}

VoxelGrid prior_for(const BuildingRecord& b, const GridFrame& frame, int lod) {
  return lod == 0 ? extrude_lod0(b, frame) : extrude_lod1(b, frame);
}

std::string stats_path(const PipelineConfig& c) { return c.checkpoint_path() + ".stats.json"; }

// Reference asset placed at its true position in the region frame.
Mesh reference_mesh(const VoxelGrid& reference) {
  Mesh m = voxels_to_mesh(reference);
  const auto& o = reference.frame().origin;
  for (auto& v : m.vertices) v = {v.x + o.x, v.y + o.y, v.z + o.z};
  return m;
}

std::string run_ingest(const PipelineConfig& c, ArtifactLog& log) {
  const auto text = io::read_file(c.region.geojson);
  auto parsed = parse_region(text, c.region.heights, c.region.name);
  log.write("region.json", dump(region_to_json(parsed.region)));
  json issues = json::array();
  for (const auto& i : parsed.issues) {
    issues.push_back({{"feature_index", i.feature_index}, {"id", i.id}, {"message", i.message}});
  }
  log.write("issues.json", dump(issues));
  return std::to_string(parsed.region.buildings.size()) + " buildings, " + std::to_string(parsed.issues.size()) +
         " skipped features";
}

std::string run_prior(const PipelineConfig& c, int jobs, ArtifactLog& log) {
  const auto region = load_region(c);
  const auto& bs = region.buildings;
  std::vector<std::array<std::string, 3>> files(bs.size());
  parallel_for(bs.size(), jobs, [&](std::size_t i) {
    const auto frame = building_frame(c, bs[i]);
    files[i][0] = serialize_grid(extrude_lod0(bs[i], frame));
    files[i][1] = serialize_grid(extrude_lod1(bs[i], frame));
    files[i][2] = mask_to_pgm(rasterize_footprint(bs[i].footprint, frame, c.grid.resolution));
  });
  for (std::size_t i = 0; i < bs.size(); ++i) {
    log.write(prior_path(bs[i], 0), files[i][0]);
    log.write(prior_path(bs[i], 1), files[i][1]);
    log.write("priors/" + file_stem(bs[i].id) + ".footprint.pgm", files[i][2]);
  }
  return std::to_string(bs.size()) + " buildings, LOD0 and LOD1 at N = " + std::to_string(c.grid.resolution);
}

struct EncodedBuilding {
  Latent x0;
  std::vector<Latent> priors;
  BuildingConditions conditions;
};

std::string run_train(const PipelineConfig& c, int jobs, ArtifactLog& log) {
  const auto region = load_region(c);
  const auto& bs = region.buildings;
  const int m = c.latent.resolution, ch = c.latent.channels;
  std::vector<EncodedBuilding> enc(bs.size());
  parallel_for(bs.size(), jobs, [&](std::size_t i) {
    const auto frame = building_frame(c, bs[i]);
    const auto reference = synthesize_reference(bs[i], frame);
    enc[i].x0 = encode_surrogate(reference, m, ch, c.latent.lift_seed);
    for (int lod = 0; lod < 2; ++lod) {
      enc[i].priors.push_back(encode_surrogate(prior_for(bs[i], frame, lod), m, ch, c.latent.lift_seed));
    }
    enc[i].conditions = building_conditions(c, reference, nullptr);
  });

  std::vector<Latent> targets;
  for (const auto& e : enc) targets.push_back(e.x0);
  const auto stats = fit_channel_stats(targets);

  std::vector<TrainExample> data;
  for (auto& e : enc) {
    TrainExample ex{latent_norm(e.x0, stats), {}, e.conditions.top, e.conditions.front};
    for (const auto& p : e.priors) ex.priors.push_back(latent_norm(p, stats));
    data.push_back(std::move(ex));
  }

  auto model = FlowModel::initialize(c.model, derive_seed(c.seed, 0x4d4f444c));  // "MODL"
  const auto result = train(model, data, c.train);
  log.write(c.checkpoint_path(), save_checkpoint(model));
  log.write(stats_path(c), dump(stats_to_json(stats)));
  log.write("train_loss.csv", loss_trace_csv(result.loss_trace));

  std::ostringstream out;
  out << c.train.steps << " steps on " << data.size() << " buildings";
  if (!result.loss_trace.empty()) {
    out << ", loss " << result.loss_trace.front() << " -> " << result.loss_trace.back();
  }
  return out.str();
}

std::string run_generate(const PipelineConfig& c, int jobs, ArtifactLog& log) {
  const auto region = load_region(c);
  const auto& bs = region.buildings;
  const auto model = load_checkpoint(io::read_file(c.checkpoint_path()));
  if (!(model.config() == c.model)) {
    throw ConfigError("model", "checkpoint " + c.checkpoint_path() + " was trained with a different configuration");
  }
  const auto stats = stats_from_json(json::parse(io::read_file(stats_path(c))));
  const auto lift = SurrogateLift::from_seed(c.latent.channels, c.latent.lift_seed);
  std::optional<GrayImage> frontal;
  if (!c.generate.frontal_image.empty()) frontal = read_pgm(io::read_file(c.generate.frontal_image));

  std::vector<std::pair<std::string, std::string>> files(bs.size());
  std::vector<std::size_t> occupied(bs.size());
  parallel_for(bs.size(), jobs, [&](std::size_t i) {
    const auto& b = bs[i];
    const auto frame = building_frame(c, b);
    const auto reference = synthesize_reference(b, frame);
    const auto cond = building_conditions(c, reference, frontal ? &*frontal : nullptr);
    const auto prior = latent_norm(
        encode_surrogate(prior_for(b, frame, c.mix.inference_lod), c.latent.resolution, c.latent.channels,
                         c.latent.lift_seed),
        stats);
    const auto seed = derive_seed(c.seed, id_hash(b.id));
    const auto noise = sample_noise(c.latent.resolution, c.latent.channels, seed);
    const auto start = cosine_interpolate(prior, noise, c.mix.inference_lambda);
    const auto z = latent_denorm(sample(model, start, cond.top, cond.front, c.generate.steps), stats);
    const auto grid = decode_surrogate(z, lift, frame);
    occupied[i] = grid.count();
    files[i] = {serialize_latent(z), serialize_grid(grid)};
  });
  std::size_t empty = 0;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    log.write(generated_path(bs[i], ".ulat"), files[i].first);
    log.write(generated_path(bs[i], ".uvox"), files[i].second);
    empty += occupied[i] == 0;
  }
  return std::to_string(bs.size()) + " buildings generated (" + std::to_string(empty) + " empty)";
}

std::vector<PlacedBuilding> place_generated(const PipelineConfig& c, const Region& region, int jobs,
                                            const ArtifactLog& log, std::vector<VoxelGrid>* grids = nullptr) {
  const auto& bs = region.buildings;
  std::vector<PlacedBuilding> placed(bs.size());
  std::vector<std::optional<VoxelGrid>> loaded(bs.size());
  parallel_for(bs.size(), jobs, [&](std::size_t i) {
    const auto path = log.resolve(generated_path(bs[i], ".uvox"));
    if (!fs::exists(path)) throw IoError("scene", "missing generated grid " + path + " (run generate first)");
    loaded[i] = deserialize_grid(io::read_file(path));
    if (loaded[i]->empty()) throw MeshError("generated grid for \"" + bs[i].id + "\" is empty");
    placed[i] = place_building(*loaded[i], bs[i], region.bounds, c.grid.padding);
  });
  if (grids) {
    grids->clear();
    for (auto& g : loaded) grids->push_back(std::move(*g));
  }
  return placed;
}

std::string run_assemble(const PipelineConfig& c, int jobs, ArtifactLog& log) {
  const auto region = load_region(c);
  auto placed = place_generated(c, region, jobs, log);
  for (const auto& p : placed) log.write("meshes/" + file_stem(p.asset.building_id) + ".obj", export_mesh(p.mesh, MeshFormat::obj));
  log.write("scene_manifest.json", dump(scene_manifest(placed)));
  const auto scene = merge_scene(placed);
  for (const auto& f : c.assemble.formats) log.write("scene." + f, export_mesh(scene, parse_mesh_format(f)));
  return std::to_string(placed.size()) + " buildings, " + std::to_string(scene.vertices.size()) + " vertices, " +
         std::to_string(scene.triangles.size()) + " triangles";
}

std::string run_eval(const PipelineConfig& c, int jobs, ArtifactLog& log) {
  MetricReport report;
  report.region = c.region.name;
  Mesh generated, reference;
  std::vector<double> ious, building_cd, building_fscore;
  if (!c.eval.generated_mesh.empty()) {
    generated = load_mesh(c.eval.generated_mesh);
    reference = load_mesh(c.eval.reference_mesh);
    if (report.region.empty()) report.region = fs::path(c.eval.generated_mesh).stem().string();
  } else {
    const auto region = load_region(c);
    if (report.region.empty()) report.region = region.name;
    std::vector<VoxelGrid> grids;
    auto placed = place_generated(c, region, jobs, log, &grids);
    generated = merge_scene(placed);
    std::vector<PlacedBuilding> truth(region.buildings.size());
    const std::size_t n = region.buildings.size();
    ious.resize(n);
    building_cd.resize(n);
    building_fscore.resize(n);
    parallel_for(n, jobs, [&](std::size_t i) {
      const auto& b = region.buildings[i];
      const auto frame = building_frame(c, b);
      truth[i].asset.building_id = b.id;
      truth[i].mesh = reference_mesh(synthesize_reference(b, frame));
      ious[i] = iou_top(rasterize_topdown(grids[i], c.grid.resolution),
                        rasterize_footprint(b.footprint, frame, c.grid.resolution));
      const auto g = sample_points(placed[i].mesh, c.eval.building_points, c.eval.seed);
      const auto r = sample_points(truth[i].mesh, c.eval.building_points, c.eval.seed);
      building_cd[i] = chamfer(g, r);
      building_fscore[i] = fscore(g, r, c.eval.tau ? *c.eval.tau : default_tau(r));
    });
    reference = merge_scene(std::move(truth));
    double sum = 0.0;
    for (double v : ious) sum += v;
    report.iou_top = sum / static_cast<double>(ious.size());
  }

  // One seed for both clouds, so identical meshes give identical samples.
  const auto gen_points = sample_points(generated, c.eval.points, c.eval.seed);
  const auto ref_points = sample_points(reference, c.eval.points, c.eval.seed);
  report.tau = c.eval.tau ? *c.eval.tau : default_tau(ref_points);
  report.cd = chamfer(gen_points, ref_points);
  report.fscore = fscore(gen_points, ref_points, *report.tau);

  if (!c.eval.embeddings.empty()) {
    const auto emb = load_embeddings(c.eval.embeddings);
    report.clip_pairwise = pairwise_cos(emb);
    if (report.iou_top) report.s_regional = regional_score(*report.iou_top, *report.clip_pairwise);
    if (!c.eval.reference_embeddings.empty()) {
      report.clip_score = clip_score(emb, load_embeddings(c.eval.reference_embeddings));
    }
  }
  report.seeds = {{"sample", c.eval.seed}};
  report.counts = {{"points", c.eval.points},
                   {"generated_triangles", generated.triangles.size()},
                   {"reference_triangles", reference.triangles.size()},
                   {"buildings", ious.size()}};
  if (!ious.empty()) {
    report.counts["building_points"] = c.eval.building_points;
    report.counts["per_building_iou"] = ious;
    report.counts["per_building_cd"] = building_cd;
    report.counts["per_building_fscore"] = building_fscore;
  }

  log.write("eval/report.json", dump(report_to_json(report)));
  log.write("eval/summary.csv", reports_to_csv({report}));
  std::ostringstream out;
  out << "cd " << *report.cd << ", fscore " << *report.fscore << " (tau " << *report.tau << ")";
  if (report.iou_top) out << ", iou_top " << *report.iou_top;
  if (report.s_regional) out << ", s_regional " << *report.s_regional;
  return out.str();
}

std::string run_cluster(const PipelineConfig& c, ArtifactLog& log) {
  const auto region = load_region(c);
  const auto emb = load_embeddings(c.cluster.embeddings);
  std::vector<std::string> ids;
  std::vector<double> heights;
  for (const auto& b : region.buildings) {
    ids.push_back(b.id);
    heights.push_back(b.height);
  }
  const auto features = build_features(emb, ids, heights, c.cluster.features);
  const auto labels = hdbscan(features, c.cluster.hdbscan);
  log.write("clusters.csv", labels_to_csv(emb.ids, labels));
  std::size_t noise = std::count(labels.labels.begin(), labels.labels.end(), -1);
  return std::to_string(labels.cluster_count()) + " clusters, " + std::to_string(noise) + " noise points";
}

std::string run_prompts(const PipelineConfig& c, ArtifactLog& log) {
  json doc;
  try {
    doc = json::parse(io::read_file(c.prompts.library));
  } catch (const json::parse_error& e) {
    throw ParseError("promptgen", e.what(), e.byte);
  }
  const auto spec = parse_prompt_spec(doc);
  const auto records = generate_prompts(spec.library, spec.rules);
  log.write("prompts.jsonl", records_to_jsonl(spec.library, records));
  return std::to_string(records.size()) + " prompts from " + std::to_string(spec.library.combinations()) +
         " combinations";
}

}  // namespace

Region load_region(const PipelineConfig& config) {
  auto region = parse_region(io::read_file(config.region.geojson), config.region.heights, config.region.name).region;
  check_stems(region);
  return region;
}

VoxelGrid synthesize_reference(const BuildingRecord& record, const GridFrame& frame) {
  VoxelGrid grid = extrude_lod1(record, frame);
  const Rect box = record.footprint.bbox();
  const Vec2 center = box.center();
  const bool ridge_along_x = box.width() >= box.height();
  const double half = 0.5 * (ridge_along_x ? box.height() : box.width());
  const double eave = 0.75 * record.height;
  for (const auto& p : grid.active()) {
    const Vec3 c = grid.cell_center(p.i, p.j, p.k);
    const double d = ridge_along_x ? std::abs(c.y - center.y) : std::abs(c.x - center.x);
    const double roof = half > 0.0 ? eave + (record.height - eave) * std::max(0.0, 1.0 - d / half) : record.height;
    if (c.z >= roof) grid.set(p, false);
  }
  return grid;
}

BuildingConditions building_conditions(const PipelineConfig& config, const VoxelGrid& reference,
                                       const GrayImage* frontal) {
  BuildingConditions out;
  out.top = featurize_image(render_height_map(reference), config.image_patch, config.model.d_cond, config.image_seed,
                            ConditionSource::top);
  out.front = featurize_image(frontal ? *frontal : render_frontal(reference), config.image_patch,
                              config.model.d_cond, derive_seed(config.image_seed, 1), ConditionSource::frontal);
  return out;
}

Mesh load_mesh(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  if (ext == ".obj") return parse_obj(io::read_file(path));
  if (ext == ".ply") return parse_ply(io::read_file(path));
  throw ArgumentError("mesh", "cannot infer mesh format from \"" + path + "\"");
}

std::string run_subcommand(const std::string& subcommand, const PipelineConfig& config, int jobs,
                           ArtifactLog& log) {
  if (subcommand == "ingest") return run_ingest(config, log);
  if (subcommand == "prior") return run_prior(config, jobs, log);
  if (subcommand == "train") return run_train(config, jobs, log);
  if (subcommand == "generate") return run_generate(config, jobs, log);
  if (subcommand == "assemble") return run_assemble(config, jobs, log);
  if (subcommand == "eval") return run_eval(config, jobs, log);
  if (subcommand == "cluster") return run_cluster(config, log);
  if (subcommand == "prompts") return run_prompts(config, log);
  throw ArgumentError("cli", "unknown subcommand \"" + subcommand + "\"");
}

}  // namespace cityflow
