#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "cityflow/cluster.hpp"
#include "cityflow/error.hpp"

namespace cityflow {

namespace {

constexpr const char* kModule = "cluster";
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_points(const PointSet& points) {
  if (points.size() < 2) throw ArgumentError(kModule, "need at least 2 points");
  const auto dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ArgumentError(kModule, "points have inconsistent dimensions");
    for (double v : p) {
      if (!std::isfinite(v)) throw ArgumentError(kModule, "non-finite coordinate");
    }
  }
}

// Level-order walk of the dendrogram below `root`, left child first.
std::vector<int> dendrogram_bfs(const std::vector<LinkageRow>& linkage, int root) {
  const int n = static_cast<int>(linkage.size()) + 1;
  std::vector<int> out;
  std::vector<int> level{root};
  while (!level.empty()) {
    out.insert(out.end(), level.begin(), level.end());
    std::vector<int> next;
    for (int node : level) {
      if (node >= n) {
        next.push_back(linkage[node - n].left);
        next.push_back(linkage[node - n].right);
      }
    }
    level = std::move(next);
  }
  return out;
}

struct ClusterTree {
  int root = 0;
  int count = 0;                     // cluster ids are root .. root + count - 1
  std::vector<int> parent;           // per cluster, -1 for the root
  std::vector<std::vector<int>> children;
  std::vector<int> size;             // members at birth
  std::vector<double> birth;
  std::vector<double> stability;
  std::vector<double> death;         // largest lambda among direct rows

  int slot(int id) const { return id - root; }
};

ClusterTree build_cluster_tree(const std::vector<CondensedRow>& rows, int n) {
  ClusterTree tree;
  tree.root = n;
  int max_id = n;
  for (const auto& r : rows) max_id = std::max({max_id, r.parent, r.size > 1 ? r.child : n});
  tree.count = max_id - n + 1;
  tree.parent.assign(tree.count, -1);
  tree.children.assign(tree.count, {});
  tree.size.assign(tree.count, 0);
  tree.birth.assign(tree.count, 0.0);
  tree.stability.assign(tree.count, 0.0);
  tree.death.assign(tree.count, 0.0);
  tree.size[0] = n;
  for (const auto& r : rows) {
    if (r.size > 1) {
      const int c = tree.slot(r.child);
      tree.parent[c] = r.parent;
      tree.children[tree.slot(r.parent)].push_back(r.child);
      tree.size[c] = r.size;
      tree.birth[c] = r.lambda;
    }
  }
  std::vector<bool> seen(tree.count, false);
  for (const auto& r : rows) {
    const int p = tree.slot(r.parent);
    tree.stability[p] += (r.lambda - tree.birth[p]) * r.size;
    tree.death[p] = seen[p] ? std::max(tree.death[p], r.lambda) : r.lambda;
    seen[p] = true;
  }
  return tree;
}

void collect_descendants(const ClusterTree& tree, int id, std::vector<int>& out) {
  for (int c : tree.children[tree.slot(id)]) {
    out.push_back(c);
    collect_descendants(tree, c, out);
  }
}

void collect_leaves(const ClusterTree& tree, int id, std::vector<int>& out) {
  const auto& kids = tree.children[tree.slot(id)];
  if (kids.empty()) {
    out.push_back(id);
    return;
  }
  for (int c : kids) collect_leaves(tree, c, out);
}

std::vector<bool> select_clusters(ClusterTree& tree, const HdbscanOptions& options) {
  std::vector<bool> selected(tree.count, false);
  if (options.selection == ClusterSelection::leaf) {
    // Leaves strictly below the root; a tree without splits selects nothing.
    if (tree.children[0].empty()) return selected;
    std::vector<int> leaves;
    collect_leaves(tree, tree.root, leaves);
    for (int id : leaves) selected[tree.slot(id)] = true;
    return selected;
  }

  // Child ids exceed their parent's, so descending order visits children
  // before parents.
  const int last = options.allow_single_cluster ? 0 : 1;
  for (int s = tree.count - 1; s >= last; --s) selected[s] = true;
  for (int s = tree.count - 1; s >= last; --s) {
    double subtree = 0.0;
    for (int c : tree.children[s]) subtree += tree.stability[tree.slot(c)];
    if (subtree > tree.stability[s]) {
      selected[s] = false;
      tree.stability[s] = subtree;
    } else {
      std::vector<int> below;
      collect_descendants(tree, tree.root + s, below);
      for (int id : below) selected[tree.slot(id)] = false;
    }
  }
  return selected;
}

}  // namespace

int ClusterLabels::cluster_count() const {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return top + 1;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::vector<double> core_distances(const PointSet& points, int min_samples) {
  check_points(points);
  const int n = static_cast<int>(points.size());
  if (min_samples < 1) throw ArgumentError(kModule, "min_samples must be at least 1");
  if (n < min_samples) {
    throw ArgumentError(kModule, "fewer points (" + std::to_string(n) + ") than min_samples (" +
                                     std::to_string(min_samples) + ")");
  }
  std::vector<double> core(n);
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) row[j] = i == j ? 0.0 : euclidean(points[i], points[j]);
    std::nth_element(row.begin(), row.begin() + (min_samples - 1), row.end());
    core[i] = row[min_samples - 1];
  }
  return core;
}

double mutual_reachability(const PointSet& points, const std::vector<double>& core, int a, int b) {
  return std::max({core[a], core[b], euclidean(points[a], points[b])});
}

std::vector<MstEdge> mst_mutual_reachability(const PointSet& points, const std::vector<double>& core) {
  const int n = static_cast<int>(points.size());
  if (static_cast<int>(core.size()) != n) throw ArgumentError(kModule, "core distance count mismatch");
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, kInf);
  std::vector<int> source(n, -1);
  int current = 0;
  for (int step = 1; step < n; ++step) {
    in_tree[current] = true;
    int next = -1;
    for (int j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = mutual_reachability(points, core, current, j);
      if (d < best[j] || (d == best[j] && current < source[j])) {
        best[j] = d;
        source[j] = current;
      }
      if (next < 0 || best[j] < best[next]) next = j;
    }
    edges.push_back({std::min(source[next], next), std::max(source[next], next), best[next]});
    current = next;
  }
  std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  return edges;
}

std::vector<LinkageRow> single_linkage(const std::vector<MstEdge>& sorted_edges, int n) {
  if (static_cast<int>(sorted_edges.size()) != n - 1) {
    throw ArgumentError(kModule, "a spanning tree over " + std::to_string(n) + " points needs " +
                                     std::to_string(n - 1) + " edges");
  }
  std::vector<int> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> size(2 * n - 1, 1);
  auto find = [&](int x) {
    int root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const int up = parent[x];
      parent[x] = root;
      x = up;
    }
    return root;
  };

  std::vector<LinkageRow> rows;
  rows.reserve(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const auto& e = sorted_edges[i];
    const int left = find(e.a);
    const int right = find(e.b);
    if (left == right) throw ArgumentError(kModule, "edge list contains a cycle");
    const int merged = n + i;
    size[merged] = size[left] + size[right];
    parent[left] = merged;
    parent[right] = merged;
    rows.push_back({left, right, e.weight, size[merged]});
  }
  return rows;
}

std::vector<CondensedRow> condense_tree(const std::vector<LinkageRow>& linkage, int min_cluster_size) {
  const int n = static_cast<int>(linkage.size()) + 1;
  const int root = 2 * (n - 1);
  std::vector<int> relabel(root + 1, 0);
  std::vector<bool> ignore(root + 1, false);
  relabel[root] = n;
  int next_label = n + 1;

  auto count_of = [&](int node) { return node >= n ? linkage[node - n].size : 1; };
  std::vector<CondensedRow> out;

  auto drop_branch = [&](int branch, int parent_label, double lambda) {
    for (int sub : dendrogram_bfs(linkage, branch)) {
      if (sub < n) out.push_back({parent_label, sub, lambda, 1});
      ignore[sub] = true;
    }
  };

  for (int node : dendrogram_bfs(linkage, root)) {
    if (node < n || ignore[node]) continue;
    const auto& row = linkage[node - n];
    const double lambda = row.distance > 0.0 ? 1.0 / row.distance : kInf;
    const int left_count = count_of(row.left);
    const int right_count = count_of(row.right);
    const int label = relabel[node];

    if (left_count >= min_cluster_size && right_count >= min_cluster_size) {
      relabel[row.left] = next_label++;
      out.push_back({label, relabel[row.left], lambda, left_count});
      relabel[row.right] = next_label++;
      out.push_back({label, relabel[row.right], lambda, right_count});
    } else if (left_count < min_cluster_size && right_count < min_cluster_size) {
      drop_branch(row.left, label, lambda);
      drop_branch(row.right, label, lambda);
    } else if (left_count < min_cluster_size) {
      relabel[row.right] = label;
      drop_branch(row.left, label, lambda);
    } else {
      relabel[row.left] = label;
      drop_branch(row.right, label, lambda);
    }
  }
  return out;
}

ClusterLabels extract_clusters(const std::vector<LinkageRow>& linkage, const HdbscanOptions& options) {
  if (options.min_cluster_size < 2) throw ArgumentError(kModule, "min_cluster_size must be at least 2");
  const int n = static_cast<int>(linkage.size()) + 1;
  const auto rows = condense_tree(linkage, options.min_cluster_size);
  auto tree = build_cluster_tree(rows, n);
  const auto selected = select_clusters(tree, options);

  std::vector<int> label_of(tree.count, -1);
  int next = 0;
  for (int s = 0; s < tree.count; ++s) {
    if (selected[s]) label_of[s] = next++;
  }

  ClusterLabels result;
  result.labels.assign(n, -1);
  result.probabilities.assign(n, 0.0);
  for (const auto& r : rows) {
    if (r.child >= n) continue;
    int s = tree.slot(r.parent);
    while (s != 0 && !selected[s]) s = tree.slot(tree.parent[s]);
    if (s == 0) {
      // The root labels points only when a single cluster is allowed and the
      // root is it, and then only those that persist to its densest level.
      if (!options.allow_single_cluster || !selected[0] || r.lambda < tree.death[0]) continue;
    }
    result.labels[r.child] = label_of[s];
    const double death = tree.death[s];
    result.probabilities[r.child] =
        (death == 0.0 || std::isinf(r.lambda)) ? 1.0 : std::min(r.lambda, death) / death;
  }
  return result;
}

ClusterLabels hdbscan(const PointSet& points, const HdbscanOptions& options) {
  if (options.min_cluster_size < 2) throw ArgumentError(kModule, "min_cluster_size must be at least 2");
  const auto core = core_distances(points, options.min_samples);
  const int n = static_cast<int>(points.size());
  return extract_clusters(single_linkage(mst_mutual_reachability(points, core), n), options);
}

ClusterLabels hdbscan(const std::vector<FeatureVector>& features, const HdbscanOptions& options) {
  PointSet points;
  points.reserve(features.size());
  for (const auto& f : features) points.push_back(f.values);
  return hdbscan(points, options);
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> renumber;
  std::vector<int> out(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    auto [it, inserted] = renumber.try_emplace(labels[i], static_cast<int>(renumber.size()));
    out[i] = it->second;
  }
  return out;
}

std::string labels_to_csv(const std::vector<std::string>& ids, const ClusterLabels& labels) {
  if (ids.size() != labels.labels.size()) throw ArgumentError(kModule, "id count does not match label count");
  std::ostringstream out;
  out.precision(10);
  out << "id,label,probability\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double p = i < labels.probabilities.size() ? labels.probabilities[i] : 0.0;
    out << ids[i] << ',' << labels.labels[i] << ',' << p << '\n';
  }
  return out.str();
}

}  // namespace cityflow
