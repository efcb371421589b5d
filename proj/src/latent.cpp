#include "cityflow/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cityflow/binary_io.hpp"
#include "cityflow/error.hpp"
#include "cityflow/rng.hpp"

namespace cityflow {

namespace {
constexpr double kStdFloor = 1e-6;
}

Latent::Latent(int resolution, int channels, double fill)
    : resolution_(resolution), channels_(channels) {
  if (resolution <= 0 || channels <= 0) {
    throw ArgumentError("latent", "latent resolution and channels must be positive");
  }
  values_.assign(cells() * static_cast<std::size_t>(channels), fill);
}

SurrogateLift SurrogateLift::from_seed(int channels, std::uint64_t seed) {
  if (channels <= 0) throw ArgumentError("latent", "channels must be positive");
  const Philox gen(seed, /*stream=*/0x4c494654);  // "LIFT"
  SurrogateLift lift;
  for (int c = 0; c < channels; ++c) {
    // |scale| in [0.5, 1.5) keeps the lift invertible per channel.
    const double magnitude = 0.5 + gen.uniform_at(3 * c);
    const double sign = gen.uniform_at(3 * c + 1) < 0.5 ? -1.0 : 1.0;
    lift.scale.push_back(sign * magnitude);
    lift.bias.push_back(gen.uniform_at(3 * c + 2) - 0.5);
  }
  return lift;
}

std::vector<double> pool_occupancy(const VoxelGrid& grid, int latent_resolution) {
  const int n = grid.resolution();
  if (latent_resolution <= 0 || n % latent_resolution != 0) {
    throw ArgumentError("latent", "grid resolution " + std::to_string(n) +
                                      " not divisible by latent resolution " +
                                      std::to_string(latent_resolution));
  }
  const int m = latent_resolution;
  const int f = n / m;
  std::vector<double> counts(static_cast<std::size_t>(m) * m * m, 0.0);
  for (const Index3 p : grid.active()) {
    counts[(static_cast<std::size_t>(p.i / f) * m + p.j / f) * m + p.k / f] += 1.0;
  }
  const double block = static_cast<double>(f) * f * f;
  for (double& c : counts) c /= block;
  return counts;
}

Latent encode_surrogate(const VoxelGrid& grid, int latent_resolution, int channels, std::uint64_t seed) {
  const auto fill = pool_occupancy(grid, latent_resolution);
  const auto lift = SurrogateLift::from_seed(channels, seed);
  Latent z(latent_resolution, channels);
  for (std::size_t cell = 0; cell < fill.size(); ++cell) {
    for (int c = 0; c < channels; ++c) z.at(cell, c) = lift.scale[c] * fill[cell] + lift.bias[c];
  }
  return z;
}

VoxelGrid decode_surrogate(const Latent& latent, const SurrogateLift& lift, const GridFrame& frame,
                           double threshold) {
  const int m = latent.resolution();
  const int channels = latent.channels();
  if (static_cast<int>(lift.scale.size()) != channels) {
    throw ArgumentError("latent", "lift channel count does not match latent");
  }
  if (frame.resolution % m != 0) {
    throw ArgumentError("latent", "frame resolution not divisible by latent resolution");
  }
  double norm2 = 0.0;
  for (double a : lift.scale) norm2 += a * a;
  std::vector<double> fill(latent.cells());
  for (std::size_t cell = 0; cell < fill.size(); ++cell) {
    double dot = 0.0;
    for (int c = 0; c < channels; ++c) dot += lift.scale[c] * (latent.at(cell, c) - lift.bias[c]);
    fill[cell] = dot / norm2;
  }
  auto value = [&](int i, int j, int k) {
    i = std::clamp(i, 0, m - 1);
    j = std::clamp(j, 0, m - 1);
    k = std::clamp(k, 0, m - 1);
    return fill[(static_cast<std::size_t>(i) * m + j) * m + k];
  };

  VoxelGrid grid(frame);
  const int n = frame.resolution;
  const double ratio = static_cast<double>(m) / n;
  for (int i = 0; i < n; ++i) {
    // Fine cell center in coarse-cell-center coordinates.
    const double u = (i + 0.5) * ratio - 0.5;
    const int i0 = static_cast<int>(std::floor(u));
    const double fu = u - i0;
    for (int j = 0; j < n; ++j) {
      const double v = (j + 0.5) * ratio - 0.5;
      const int j0 = static_cast<int>(std::floor(v));
      const double fv = v - j0;
      for (int k = 0; k < n; ++k) {
        const double w = (k + 0.5) * ratio - 0.5;
        const int k0 = static_cast<int>(std::floor(w));
        const double fw = w - k0;
        double s = 0.0;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk)
              s += (di ? fu : 1 - fu) * (dj ? fv : 1 - fv) * (dk ? fw : 1 - fw) *
                   value(i0 + di, j0 + dj, k0 + dk);
        if (s >= threshold) grid.set(i, j, k);
      }
    }
  }
  return grid;
}

ChannelStats fit_channel_stats(std::span<const Latent> latents) {
  if (latents.empty()) throw ArgumentError("latent", "cannot fit channel stats on an empty batch");
  const int channels = latents.front().channels();
  for (const auto& z : latents) {
    if (z.channels() != channels) throw ArgumentError("latent", "channel count differs across batch");
  }
  ChannelStats stats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  std::size_t count = 0;
  for (const auto& z : latents) {
    for (std::size_t cell = 0; cell < z.cells(); ++cell)
      for (int c = 0; c < channels; ++c) stats.mean[c] += z.at(cell, c);
    count += z.cells();
  }
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const auto& z : latents) {
    for (std::size_t cell = 0; cell < z.cells(); ++cell) {
      for (int c = 0; c < channels; ++c) {
        const double d = z.at(cell, c) - stats.mean[c];
        stats.std[c] += d * d;
      }
    }
  }
  for (double& s : stats.std) s = std::max(std::sqrt(s / static_cast<double>(count)), kStdFloor);
  return stats;
}

namespace {

void check_stats(const Latent& z, const ChannelStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(z.channels()) || stats.std.size() != stats.mean.size()) {
    throw ArgumentError("latent", "channel stats have " + std::to_string(stats.mean.size()) +
                                      " channels, latent has " + std::to_string(z.channels()));
  }
}

}  // namespace

Latent latent_norm(const Latent& z, const ChannelStats& stats) {
  check_stats(z, stats);
  Latent out = z;
  for (std::size_t cell = 0; cell < z.cells(); ++cell)
    for (int c = 0; c < z.channels(); ++c)
      out.at(cell, c) = (z.at(cell, c) - stats.mean[c]) / stats.std[c];
  return out;
}

Latent latent_denorm(const Latent& z, const ChannelStats& stats) {
  check_stats(z, stats);
  Latent out = z;
  for (std::size_t cell = 0; cell < z.cells(); ++cell)
    for (int c = 0; c < z.channels(); ++c)
      out.at(cell, c) = z.at(cell, c) * stats.std[c] + stats.mean[c];
  return out;
}

Latent cosine_interpolate(const Latent& prior, const Latent& noise, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("latent", "lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (!prior.same_shape(noise)) throw ArgumentError("latent", "prior and noise shapes differ");
  if (lambda == 0.0) return prior;
  if (lambda == 1.0) return noise;
  const double a = std::cos(lambda * std::numbers::pi / 2);
  const double b = std::sin(lambda * std::numbers::pi / 2);
  Latent out = prior;
  auto p = prior.values();
  auto e = noise.values();
  auto o = out.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = a * p[n] + b * e[n];
  return out;
}

Latent sample_noise(int resolution, int channels, std::uint64_t seed) {
  Latent out(resolution, channels);
  const Philox gen(seed, /*stream=*/0x4e4f4953);  // "NOIS"
  auto v = out.values();
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = gen.normal_at(n);
  return out;
}

std::string serialize_latent(const Latent& latent) {
  io::ByteWriter w;
  w.magic("ULAT");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(latent.resolution()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(latent.channels()));
  for (double v : latent.values()) w.put<float>(static_cast<float>(v));
  return w.take();
}

Latent deserialize_latent(std::string_view bytes) {
  io::ByteReader r(bytes, "latent");
  r.expect_magic("ULAT");
  const auto m = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  if (m == 0 || c == 0 || m > 1024 || c > 65536) throw IoError("latent", "ULAT header out of range");
  Latent out(static_cast<int>(m), static_cast<int>(c));
  for (double& v : out.values()) v = r.get<float>();
  if (!r.at_end()) throw IoError("latent", "trailing bytes after ULAT payload");
  return out;
}

nlohmann::json stats_to_json(const ChannelStats& stats) {
  return {{"mean", stats.mean}, {"std", stats.std}};
}

ChannelStats stats_from_json(const nlohmann::json& j) {
  ChannelStats stats{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
  if (stats.mean.size() != stats.std.size() || stats.mean.empty()) {
    throw ValidationError("latent", "stats \"mean\" and \"std\" must be equal-length, non-empty arrays");
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw ValidationError("latent", "stats std entries must be positive");
  }
  return stats;
}

}  // namespace cityflow
