#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cityflow/voxel.hpp"

namespace cityflow {

// Dense M^3 x C grid of coefficients. Cell (i, j, k) has linear index
// (i*M + j)*M + k; channels are the fastest-varying dimension.
class Latent {
 public:
  Latent() = default;
  Latent(int resolution, int channels, double fill = 0.0);

  int resolution() const noexcept { return resolution_; }
  int channels() const noexcept { return channels_; }
  std::size_t cells() const noexcept {
    return static_cast<std::size_t>(resolution_) * resolution_ * resolution_;
  }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(std::size_t cell, int c) { return values_[cell * channels_ + c]; }
  double at(std::size_t cell, int c) const { return values_[cell * channels_ + c]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const Latent& other) const {
    return resolution_ == other.resolution_ && channels_ == other.channels_;
  }
  friend bool operator==(const Latent&, const Latent&) = default;

 private:
  int resolution_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

// Fixed per-channel affine lift s -> scale[c]*s + bias[c] standing in for a
// pretrained structure encoder.
struct SurrogateLift {
  std::vector<double> scale;
  std::vector<double> bias;

  static SurrogateLift from_seed(int channels, std::uint64_t seed);
};

// Average-pools occupancy to M^3 fill fractions in [0, 1].
std::vector<double> pool_occupancy(const VoxelGrid& grid, int latent_resolution);

// Pools `grid` to M^3 and lifts every fraction through the seed's affine map.
Latent encode_surrogate(const VoxelGrid& grid, int latent_resolution, int channels, std::uint64_t seed);

// Least-squares inverse of the lift per cell, trilinearly upsampled to
// `frame` and thresholded at half occupancy.
VoxelGrid decode_surrogate(const Latent& latent, const SurrogateLift& lift, const GridFrame& frame,
                           double threshold = 0.5);

// Per-channel population mean and std over every cell of every latent;
// std is floored at 1e-6.
ChannelStats fit_channel_stats(std::span<const Latent> latents);

Latent latent_norm(const Latent& z, const ChannelStats& stats);
Latent latent_denorm(const Latent& z, const ChannelStats& stats);

// cos(lambda*pi/2) * prior + sin(lambda*pi/2) * noise; the endpoints are
// reproduced exactly.
Latent cosine_interpolate(const Latent& prior, const Latent& noise, double lambda);

// I.i.d. standard normal latent addressed by (seed, element index).
Latent sample_noise(int resolution, int channels, std::uint64_t seed);

// How training pairs priors with noise strengths.
struct PriorMixPolicy {
  std::vector<double> train_lambdas{0.3, 0.5, 0.7};
  std::vector<int> train_lods{0, 1};
  double inference_lambda = 0.5;
  int inference_lod = 1;
};

// "ULAT" little-endian f32 file.
std::string serialize_latent(const Latent& latent);
Latent deserialize_latent(std::string_view bytes);

nlohmann::json stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const nlohmann::json& j);

}  // namespace cityflow
