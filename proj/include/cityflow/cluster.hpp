#pragma once

#include <string>
#include <vector>

#include "cityflow/embedding.hpp"

namespace cityflow {

struct FeatureVector {
  std::string building_id;
  std::vector<double> values;
};

struct FeatureOptions {
  double height_scale = 1.0;
  bool standardize = false;
};

// Appends scale*h to each embedding. Heights are matched to embeddings by
// id; output order follows `embeddings`.
std::vector<FeatureVector> build_features(const EmbeddingSet& embeddings,
                                          const std::vector<std::string>& height_ids,
                                          const std::vector<double>& heights,
                                          const FeatureOptions& options = {});

enum class ClusterSelection { excess_of_mass, leaf };

struct HdbscanOptions {
  int min_cluster_size = 2;
  int min_samples = 2;
  ClusterSelection selection = ClusterSelection::excess_of_mass;
  bool allow_single_cluster = false;
};

struct ClusterLabels {
  std::vector<int> labels;  // -1 = noise
  std::vector<double> probabilities;

  int cluster_count() const;
};

struct MstEdge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

// One node of the single-linkage dendrogram. Children below n are points,
// children >= n are earlier merges (node n + i is row i).
struct LinkageRow {
  int left = 0;
  int right = 0;
  double distance = 0.0;
  int size = 0;
};

// Rows of the condensed tree. `lambda` is 1/distance (inf at distance 0).
struct CondensedRow {
  int parent = 0;
  int child = 0;
  double lambda = 0.0;
  int size = 0;
};

using PointSet = std::vector<std::vector<double>>;

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

// Distance to the k-th nearest neighbour, the point itself counted as the
// first (k = min_samples).
std::vector<double> core_distances(const PointSet& points, int min_samples);

double mutual_reachability(const PointSet& points, const std::vector<double>& core, int a, int b);

// Prim's algorithm over the implicit complete mutual-reachability graph,
// grown from vertex 0. Ties go to the smallest vertex indices. Edges come
// back sorted by (weight, a, b) with a < b.
std::vector<MstEdge> mst_mutual_reachability(const PointSet& points, const std::vector<double>& core);

std::vector<LinkageRow> single_linkage(const std::vector<MstEdge>& sorted_edges, int n);
std::vector<CondensedRow> condense_tree(const std::vector<LinkageRow>& linkage, int min_cluster_size);

// Condenses the dendrogram, selects clusters and labels every point.
ClusterLabels extract_clusters(const std::vector<LinkageRow>& linkage, const HdbscanOptions& options);

ClusterLabels hdbscan(const PointSet& points, const HdbscanOptions& options = {});
ClusterLabels hdbscan(const std::vector<FeatureVector>& features, const HdbscanOptions& options = {});

// Renumbers clusters by their smallest member index; noise stays -1.
std::vector<int> canonical_labels(const std::vector<int>& labels);

// "id,label,probability" with a header line.
std::string labels_to_csv(const std::vector<std::string>& ids, const ClusterLabels& labels);

}  // namespace cityflow
