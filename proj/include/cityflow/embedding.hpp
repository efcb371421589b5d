#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cityflow {

// Id-tagged real vectors of a common dimension.
struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }

  // Throws ValidationError on ragged or non-finite rows and count mismatch.
  void validate() const;
};

// "id,dim0,...,dimD-1" header followed by one row per record.
EmbeddingSet parse_embeddings_csv(std::string_view text);
std::string embeddings_to_csv(const EmbeddingSet& set);

// "UEMB", u32 count, u32 D, then per record u16 id length, id bytes, D f32.
EmbeddingSet parse_embeddings_binary(std::string_view bytes);
std::string embeddings_to_binary(const EmbeddingSet& set);

// Picks the format from the leading magic.
EmbeddingSet load_embeddings(const std::string& path);

}  // namespace cityflow
