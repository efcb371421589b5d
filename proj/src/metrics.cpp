#include "cityflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "cityflow/rng.hpp"

namespace cityflow {

namespace {

constexpr const char* kModule = "metrics";

void require_points(const PointCloud& cloud, const char* name) {
  if (cloud.empty()) throw ArgumentError(kModule, std::string(name) + " point cloud is empty");
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

PointCloud sample_points(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  mesh.validate();
  if (mesh.triangles.empty()) throw MeshError("cannot sample a mesh without triangles");
  if (n == 0) throw ArgumentError(kModule, "sample count must be positive");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw MeshError("mesh has zero surface area");

  const Philox gen(seed, /*stream=*/0x534d504c);  // "SMPL"
  PointCloud out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = gen.uniform_at(3 * s) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                 cumulative.size() - 1);
    const double r1 = std::sqrt(gen.uniform_at(3 * s + 1));
    const double r2 = gen.uniform_at(3 * s + 2);
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    const auto& a = mesh.vertices[mesh.triangles[t][0]];
    const auto& b = mesh.vertices[mesh.triangles[t][1]];
    const auto& c = mesh.vertices[mesh.triangles[t][2]];
    out.push_back({wa * a.x + wb * b.x + wc * c.x, wa * a.y + wb * b.y + wc * c.y, wa * a.z + wb * b.z + wc * c.z});
  }
  return out;
}

double point_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

NearestNeighbors::NearestNeighbors(const PointCloud& points) : points_(points) {
  require_points(points_, "indexed");
  Vec3 hi = points_.front();
  lo_ = points_.front();
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ArgumentError(kModule, "non-finite point coordinate");
    }
    lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double ext[3] = {hi.x - lo_.x, hi.y - lo_.y, hi.z - lo_.z};
  const double longest = std::max({ext[0], ext[1], ext[2]});
  // About one point per cell along the longest axis' cube-root share.
  const double per_axis = std::max(1.0, std::ceil(std::cbrt(static_cast<double>(points_.size()))));
  cell_ = longest > 0.0 ? longest / per_axis : 1.0;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::clamp(static_cast<int>(std::floor(ext[a] / cell_)) + 1, 1, 256);
  }

  const std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  std::vector<std::size_t> cell_of(points_.size());
  start_.assign(cells + 1, 0);
  auto axis_cell = [&](double v, double origin, int a) {
    return std::clamp(static_cast<int>(std::floor((v - origin) / cell_)), 0, dims_[a] - 1);
  };
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    cell_of[i] = cell_index(axis_cell(p.x, lo_.x, 0), axis_cell(p.y, lo_.y, 1), axis_cell(p.z, lo_.z, 2));
    ++start_[cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
  order_.resize(points_.size());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

double NearestNeighbors::distance(const Vec3& q) const {
  auto axis_cell = [&](double v, double origin, int a) {
    const double f = std::floor((v - origin) / cell_);
    if (f < 0.0) return 0;
    if (f > dims_[a] - 1) return dims_[a] - 1;
    return static_cast<int>(f);
  };
  const int c[3] = {axis_cell(q.x, lo_.x, 0), axis_cell(q.y, lo_.y, 1), axis_cell(q.z, lo_.z, 2)};
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  double best = std::numeric_limits<double>::infinity();
  auto visit = [&](int x, int y, int z) {
    const auto cell = cell_index(x, y, z);
    for (auto k = start_[cell]; k < start_[cell + 1]; ++k) {
      best = std::min(best, point_distance(q, points_[order_[k]]));
    }
  };
  for (int r = 0; r <= max_ring; ++r) {
    const int z_lo = std::max(0, c[2] - r), z_hi = std::min(dims_[2] - 1, c[2] + r);
    for (int x = std::max(0, c[0] - r); x <= std::min(dims_[0] - 1, c[0] + r); ++x) {
      for (int y = std::max(0, c[1] - r); y <= std::min(dims_[1] - 1, c[1] + r); ++y) {
        if (std::abs(x - c[0]) == r || std::abs(y - c[1]) == r) {
          for (int z = z_lo; z <= z_hi; ++z) visit(x, y, z);
        } else {
          // Interior column of the ring: only its two caps are on the shell.
          if (c[2] - r >= 0) visit(x, y, c[2] - r);
          if (r > 0 && c[2] + r < dims_[2]) visit(x, y, c[2] + r);
        }
      }
    }
    // Cells beyond ring r are at least r cell widths away.
    if (best <= r * cell_) break;
  }
  return best;
}

std::vector<double> NearestNeighbors::distances(const PointCloud& queries) const {
  std::vector<double> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = distance(queries[i]);
  return out;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_points(a, "first");
  require_points(b, "second");
  const double ab = mean(NearestNeighbors(b).distances(a));
  const double ba = mean(NearestNeighbors(a).distances(b));
  return 0.5 * (ab + ba);
}

double fscore(const PointCloud& a, const PointCloud& b, double tau) {
  require_points(a, "first");
  require_points(b, "second");
  if (!(tau > 0.0)) throw ArgumentError(kModule, "tau must be positive");
  auto share_within = [tau](const std::vector<double>& d) {
    std::size_t hits = 0;
    for (double x : d) hits += x < tau;
    return static_cast<double>(hits) / static_cast<double>(d.size());
  };
  const double precision = share_within(NearestNeighbors(b).distances(a));
  const double recall = share_within(NearestNeighbors(a).distances(b));
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double default_tau(const PointCloud& reference) {
  require_points(reference, "reference");
  Vec3 lo = reference.front(), hi = reference.front();
  for (const auto& p : reference) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  return 0.05 * point_distance(lo, hi);
}

double iou_top(const BinaryMask& generated, const BinaryMask& ground_truth) {
  if (generated.width() != ground_truth.width() || generated.height() != ground_truth.height()) {
    throw ArgumentError(kModule, "mask dimensions differ");
  }
  std::size_t inter = 0, uni = 0;
  for (int r = 0; r < generated.height(); ++r) {
    for (int c = 0; c < generated.width(); ++c) {
      const bool g = generated.at(r, c), t = ground_truth.at(r, c);
      inter += g && t;
      uni += g || t;
    }
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError(kModule, "embedding dimensions differ");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ArgumentError(kModule, "zero embedding vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

double pairwise_cos(const EmbeddingSet& embeddings) {
  embeddings.validate();
  const std::size_t n = embeddings.size();
  if (n < 2) throw ArgumentError(kModule, "pairwise similarity needs at least 2 embeddings");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += cosine_similarity(embeddings.vectors[i], embeddings.vectors[j]);
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double regional_score(double iou_mean, double clip_pairwise) {
  if (!(iou_mean >= 0.0 && iou_mean <= 1.0)) throw DomainError(kModule, "IoU must lie in [0, 1]");
  if (!(clip_pairwise >= -1.0 && clip_pairwise <= 1.0)) {
    throw DomainError(kModule, "pairwise similarity must lie in [-1, 1]");
  }
  return iou_mean * clip_pairwise;
}

double clip_score(const EmbeddingSet& generated, const EmbeddingSet& reference) {
  generated.validate();
  reference.validate();
  if (generated.size() != reference.size() || generated.size() == 0) {
    throw ValidationError(kModule, "generated and reference embeddings are not aligned");
  }
  std::unordered_map<std::string, std::size_t> ref_index;
  for (std::size_t i = 0; i < reference.size(); ++i) ref_index.emplace(reference.ids[i], i);
  double sum = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    auto it = ref_index.find(generated.ids[i]);
    if (it == ref_index.end()) {
      throw ValidationError(kModule, "no reference embedding for \"" + generated.ids[i] + "\"");
    }
    sum += cosine_similarity(generated.vectors[i], reference.vectors[it->second]);
  }
  return sum / static_cast<double>(generated.size());
}

nlohmann::json report_to_json(const MetricReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"region", report.region},
          {"cd", opt(report.cd)},
          {"fscore", opt(report.fscore)},
          {"tau", opt(report.tau)},
          {"iou_top", opt(report.iou_top)},
          {"clip_pairwise", opt(report.clip_pairwise)},
          {"s_regional", opt(report.s_regional)},
          {"clip_score", opt(report.clip_score)},
          {"seeds", report.seeds},
          {"counts", report.counts}};
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out.precision(10);
  out << "region,cd,fscore,tau,iou_top,clip_pairwise,s_regional,clip_score\n";
  auto cell = [&out](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const auto& r : reports) {
    out << r.region;
    cell(r.cd);
    cell(r.fscore);
    cell(r.tau);
    cell(r.iou_top);
    cell(r.clip_pairwise);
    cell(r.s_regional);
    cell(r.clip_score);
    out << '\n';
  }
  return out.str();
}

}  // namespace cityflow
