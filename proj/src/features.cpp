#include <cmath>
#include <unordered_map>

#include "cityflow/cluster.hpp"
#include "cityflow/error.hpp"

namespace cityflow {

std::vector<FeatureVector> build_features(const EmbeddingSet& embeddings,
                                          const std::vector<std::string>& height_ids,
                                          const std::vector<double>& heights,
                                          const FeatureOptions& options) {
  embeddings.validate();
  if (height_ids.size() != heights.size()) {
    throw ValidationError("cluster", "height id count does not match height count");
  }
  if (height_ids.size() != embeddings.size()) {
    throw ValidationError("cluster", std::to_string(embeddings.size()) + " embeddings but " +
                                         std::to_string(heights.size()) + " heights");
  }
  std::unordered_map<std::string, double> height_of;
  for (std::size_t i = 0; i < heights.size(); ++i) {
    if (!std::isfinite(heights[i])) throw ValidationError("cluster", "height of \"" + height_ids[i] + "\" is not finite");
    if (!height_of.emplace(height_ids[i], heights[i]).second) {
      throw ValidationError("cluster", "duplicate height id \"" + height_ids[i] + "\"");
    }
  }

  std::vector<FeatureVector> out;
  out.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    auto it = height_of.find(embeddings.ids[i]);
    if (it == height_of.end()) {
      throw ValidationError("cluster", "no height for embedding \"" + embeddings.ids[i] + "\"");
    }
    FeatureVector f{embeddings.ids[i], embeddings.vectors[i]};
    f.values.push_back(options.height_scale * it->second);
    out.push_back(std::move(f));
  }

  if (options.standardize && !out.empty()) {
    const std::size_t dim = out.front().values.size();
    const double n = static_cast<double>(out.size());
    for (std::size_t d = 0; d < dim; ++d) {
      double mean = 0.0;
      for (const auto& f : out) mean += f.values[d];
      mean /= n;
      double var = 0.0;
      for (const auto& f : out) var += (f.values[d] - mean) * (f.values[d] - mean);
      const double sd = std::sqrt(var / n);
      // A constant dimension carries no information; map it to zero.
      for (auto& f : out) f.values[d] = sd > 0.0 ? (f.values[d] - mean) / sd : 0.0;
    }
  }
  return out;
}

}  // namespace cityflow
