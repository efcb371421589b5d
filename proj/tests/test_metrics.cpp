#include <doctest.h>

#include <cmath>

#include "cityflow/error.hpp"
#include "cityflow/metrics.hpp"
#include "cityflow/rng.hpp"

using namespace cityflow;

namespace {

PointCloud random_cloud(Rng& rng, std::size_t n, double spread = 1.0) {
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) pc.push_back({spread * rng.uniform(), spread * rng.uniform(), spread * rng.normal()});
  return pc;
}

double brute_nn(const Vec3& q, const PointCloud& pts) {
  double best = INFINITY;
  for (const auto& p : pts) best = std::min(best, std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z)));
  return best;
}

BinaryMask square_mask(int n, int r0, int c0, int size) {
  BinaryMask m(n, n, 1.0, {0, 0});
  for (int r = r0; r < r0 + size; ++r)
    for (int c = c0; c < c0 + size; ++c) m.set(r, c);
  return m;
}

}  // namespace

TEST_CASE("grid nearest neighbours equal brute force") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pts = random_cloud(rng, 1000, 1 + 10 * trial);
    const auto queries = random_cloud(rng, 1000, 1 + 12 * trial);
    const NearestNeighbors index(pts);
    const auto d = index.distances(queries);
    for (std::size_t i = 0; i < queries.size(); ++i) CHECK(std::abs(d[i] - brute_nn(queries[i], pts)) <= 1e-12);
  }
  // Degenerate layouts: all points coincident, and a flat plane.
  PointCloud same(50, Vec3{1, 2, 3});
  CHECK(NearestNeighbors(same).distance({1, 2, 4}) == 1.0);
  PointCloud plane;
  for (int i = 0; i < 30; ++i) plane.push_back({i * 0.1, (i % 7) * 0.2, 0});
  CHECK(NearestNeighbors(plane).distance({0.05, 0.0, 1.0}) == doctest::Approx(brute_nn({0.05, 0.0, 1.0}, plane)));
}

TEST_CASE("chamfer") {
  Rng rng(2);
  const auto a = random_cloud(rng, 100), b = random_cloud(rng, 120);
  CHECK(chamfer(a, a) == 0.0);
  CHECK(chamfer(PointCloud{{0, 0, 0}}, PointCloud{{1, 0, 0}}) == 1.0);
  CHECK(chamfer(a, b) == chamfer(b, a));
  double sa = 0, sb = 0;
  for (const auto& p : a) sa += brute_nn(p, b);
  for (const auto& p : b) sb += brute_nn(p, a);
  CHECK(std::abs(chamfer(a, b) - 0.5 * (sa / 100 + sb / 120)) <= 1e-12);
  // Zero iff each cloud is covered by the other.
  PointCloud dup = a;
  dup.insert(dup.end(), a.begin(), a.begin() + 10);
  CHECK(chamfer(a, dup) == 0.0);
  CHECK_THROWS_AS(chamfer(a, PointCloud{}), ArgumentError);
}

TEST_CASE("fscore") {
  Rng rng(3);
  const auto a = random_cloud(rng, 200);
  CHECK(fscore(a, a, 0.01) == 1.0);
  PointCloud far = a;
  for (auto& p : far) p.x += 10.0;
  CHECK(fscore(a, far, 0.5) == 0.0);

  // Half of each cloud within tau of the other.
  PointCloud x{{0, 0, 0}, {1, 0, 0}, {100, 0, 0}, {200, 0, 0}};
  PointCloud y{{0, 0.05, 0}, {1, 0.05, 0}, {-100, 0, 0}, {-200, 0, 0}};
  CHECK(fscore(x, y, 0.1) == doctest::Approx(0.5));

  const auto b = random_cloud(rng, 150);
  double prev = 1.0;
  for (double tau : {1.0, 0.3, 0.1, 0.03, 0.01, 0.003}) {
    const double f = fscore(a, b, tau);
    CHECK(f <= prev);
    prev = f;
  }
  CHECK_THROWS_AS(fscore(a, b, 0.0), ArgumentError);
  CHECK(default_tau(PointCloud{{0, 0, 0}, {3, 4, 0}}) == doctest::Approx(0.25));
}

TEST_CASE("point sampling") {
  Mesh tri;
  tri.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}};
  tri.triangles = {{0, 1, 2}};
  const auto pts = sample_points(tri, 1000, 4);
  for (const auto& p : pts) {
    CHECK(p.x >= 0);
    CHECK(p.y >= 0);
    CHECK(p.x / 2 + p.y <= 1 + 1e-12);
    CHECK(p.z == 0);
  }
  CHECK(sample_points(tri, 1000, 4) == pts);
  CHECK_FALSE(sample_points(tri, 1000, 5) == pts);

  // Areas 1 and 3: the second gets 75% of the points. Binomial sd at
  // n = 1e5 is 0.14%, so 3% is far outside chance.
  Mesh two;
  two.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {10, 0, 0}, {16, 0, 0}, {10, 1, 0}};
  two.triangles = {{0, 1, 2}, {3, 4, 5}};
  std::size_t second = 0;
  for (const auto& p : sample_points(two, 100000, 6)) second += p.x >= 10;
  CHECK(std::abs(second / 1e5 - 0.75) <= 0.03);

  Mesh flat;
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  flat.triangles = {{0, 1, 2}};
  CHECK_THROWS_AS(sample_points(flat, 10, 1), MeshError);
}

TEST_CASE("top-down IoU") {
  const auto a = square_mask(8, 0, 0, 4);
  CHECK(iou_top(a, a) == 1.0);
  CHECK(iou_top(a, square_mask(8, 4, 4, 4)) == 0.0);
  CHECK(iou_top(a, square_mask(8, 0, 2, 4)) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_top(BinaryMask(8, 8, 1, {}), BinaryMask(8, 8, 1, {})) == 1.0);
  CHECK_THROWS_AS(iou_top(a, BinaryMask(4, 8, 1, {})), ArgumentError);
}

TEST_CASE("embedding similarities") {
  EmbeddingSet same{{"a", "b", "c"}, {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}};
  CHECK(pairwise_cos(same) == doctest::Approx(1.0));
  CHECK(pairwise_cos(EmbeddingSet{{"a", "b"}, {{1, 0}, {0, 5}}}) == 0.0);
  // Three unit vectors at 60 degrees to each other.
  const double s = std::sqrt(0.5);
  EmbeddingSet tri{{"a", "b", "c"}, {{s, s, 0}, {s, 0, s}, {0, s, s}}};
  CHECK(pairwise_cos(tri) == doctest::Approx(0.5));
  CHECK_THROWS_AS(pairwise_cos(EmbeddingSet{{"a"}, {{1}}}), ArgumentError);
  CHECK_THROWS_AS(pairwise_cos(EmbeddingSet{{"a", "b"}, {{1, 0}, {0, 0}}}), ArgumentError);

  CHECK(clip_score(same, same) == doctest::Approx(1.0));
  EmbeddingSet neg = same;
  for (auto& v : neg.vectors)
    for (double& x : v) x = -x;
  CHECK(clip_score(same, neg) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(clip_score(same, EmbeddingSet{{"a", "b", "z"}, same.vectors}), ValidationError);

  Rng rng(12);
  EmbeddingSet g, r;
  double manual = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> u(16), v(16);
    for (double& x : u) x = rng.normal();
    for (double& x : v) x = rng.normal();
    double dot = 0, nu = 0, nv = 0;
    for (int k = 0; k < 16; ++k) {
      dot += u[k] * v[k];
      nu += u[k] * u[k];
      nv += v[k] * v[k];
    }
    manual += dot / std::sqrt(nu * nv);
    g.ids.push_back("e" + std::to_string(i));
    r.ids.push_back("e" + std::to_string(49 - i));
    g.vectors.push_back(u);
    r.vectors.insert(r.vectors.begin(), v);
  }
  // r lists the pairs in reverse order; matching is by id.
  CHECK(std::abs(clip_score(g, r) - manual / 50) <= 1e-12);
}

TEST_CASE("regional score") {
  CHECK(regional_score(1.0, 1.0) == 1.0);
  CHECK(regional_score(0.0, 0.7) == 0.0);
  CHECK(regional_score(0.5, 0.8) == doctest::Approx(0.4));
  CHECK_THROWS_AS(regional_score(1.2, 0.5), DomainError);
  CHECK_THROWS_AS(regional_score(0.5, -1.5), DomainError);
}

TEST_CASE("metric report serialization") {
  MetricReport r;
  r.region = "demo";
  r.cd = 0.5;
  r.fscore = 0.75;
  r.seeds = {{"sample", 3}};
  const auto j = report_to_json(r);
  for (const char* key : {"region", "cd", "fscore", "tau", "iou_top", "clip_pairwise", "s_regional", "clip_score", "seeds", "counts"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["iou_top"].is_null());
  const auto csv = reports_to_csv({r, r});
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
