#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/embedding.hpp"
#include "cityflow/mesh.hpp"
#include "cityflow/voxel.hpp"

namespace cityflow {

using PointCloud = std::vector<Vec3>;

// n points, triangle chosen with probability proportional to area, then
// uniform within it.
PointCloud sample_points(const Mesh& mesh, std::size_t n, std::uint64_t seed);

// Uniform-grid index for exact nearest-neighbour distances.
class NearestNeighbors {
 public:
  explicit NearestNeighbors(const PointCloud& points);

  double distance(const Vec3& q) const;
  std::vector<double> distances(const PointCloud& queries) const;

 private:
  std::size_t cell_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * dims_[1] + static_cast<std::size_t>(y)) * dims_[2] +
           static_cast<std::size_t>(z);
  }

  PointCloud points_;
  Vec3 lo_;
  double cell_ = 1.0;
  int dims_[3] = {1, 1, 1};
  std::vector<std::uint32_t> start_;  // CSR offsets per cell
  std::vector<std::uint32_t> order_;
};

double point_distance(const Vec3& a, const Vec3& b);

// Half the sum of both mean nearest-neighbour distances (not squared).
double chamfer(const PointCloud& a, const PointCloud& b);

// Precision/recall of nearest distances strictly below tau; F = 0 when both
// are zero.
double fscore(const PointCloud& a, const PointCloud& b, double tau);

// 0.05 x the bounding-box diagonal of `reference`.
double default_tau(const PointCloud& reference);

// |gen & gt| / |gen | gt|; 1 when both are empty.
double iou_top(const BinaryMask& generated, const BinaryMask& ground_truth);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Mean cosine over all unordered pairs.
double pairwise_cos(const EmbeddingSet& embeddings);

// IoU_top x CLIP_pairwise.
double regional_score(double iou_mean, double clip_pairwise);

// Mean cosine over pairs matched by id.
double clip_score(const EmbeddingSet& generated, const EmbeddingSet& reference);

struct MetricReport {
  std::string region;
  std::optional<double> cd;
  std::optional<double> fscore;
  std::optional<double> tau;
  std::optional<double> iou_top;
  std::optional<double> clip_pairwise;
  std::optional<double> s_regional;
  std::optional<double> clip_score;
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
};

nlohmann::json report_to_json(const MetricReport& report);
std::string reports_to_csv(const std::vector<MetricReport>& reports);

}  // namespace cityflow
