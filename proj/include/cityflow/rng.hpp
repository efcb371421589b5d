#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace cityflow {

// Philox4x32-10 counter-based generator. Every output is a pure function of
// (seed, stream, counter), so draws can be addressed directly by index and
// reproduced independently of call order.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  std::array<std::uint32_t, 4> block(std::uint64_t counter) const noexcept;

  // Two independent 64-bit words for `counter`.
  std::array<std::uint64_t, 2> words(std::uint64_t counter) const noexcept;

  // Uniform in [0, 1) with 53 bits.
  double uniform_at(std::uint64_t index) const noexcept;

  // Standard normal draw `index`; consecutive even/odd indices share one
  // Box-Muller pair.
  double normal_at(std::uint64_t index) const noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
};

// Sequential view over a Philox stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : philox_(seed, stream) {}

  double uniform() noexcept { return philox_.uniform_at(next_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept { return philox_.normal_at(normal_next_++); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) noexcept;

 private:
  Philox philox_;
  std::uint64_t next_ = 0;
  // Normals draw from the upper half of the counter space so they never
  // alias uniform draws of the same stream.
  std::uint64_t normal_next_ = std::uint64_t{1} << 62;
};

// Derives an independent seed for a named sub-stream (e.g. per building).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

}  // namespace cityflow
