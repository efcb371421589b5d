#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cityflow/geo.hpp"

namespace cityflow {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(Vec3, Vec3) = default;
};

// Activated voxel index p_i = (i, j, k) along (x, y, z).
struct Index3 {
  int i = 0;
  int j = 0;
  int k = 0;

  friend auto operator<=>(const Index3&, const Index3&) = default;
};

// Axis-aligned cubic grid placement. Cell (i, j, k) spans
// origin + [i, i+1) * cell_size along each axis.
struct GridFrame {
  int resolution = 0;
  double cell_size = 0.0;
  Vec3 origin;

  double extent() const { return resolution * cell_size; }
  friend bool operator==(const GridFrame&, const GridFrame&) = default;
};

// Binary occupancy over an N^3 grid, stored densely.
class VoxelGrid {
 public:
  explicit VoxelGrid(GridFrame frame);

  const GridFrame& frame() const noexcept { return frame_; }
  int resolution() const noexcept { return frame_.resolution; }
  double cell_size() const noexcept { return frame_.cell_size; }

  bool at(int i, int j, int k) const { return bits_[linear(i, j, k)] != 0; }
  bool at(Index3 p) const { return at(p.i, p.j, p.k); }
  void set(int i, int j, int k, bool value = true);
  void set(Index3 p, bool value = true) { set(p.i, p.j, p.k, value); }

  // Number of activated voxels, L.
  std::size_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  // Activated indices in lexicographic (i, j, k) order.
  std::vector<Index3> active() const;

  Vec3 cell_center(int i, int j, int k) const;
  bool in_range(int i, int j, int k) const;

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.frame_ == b.frame_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t linear(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(frame_.resolution);
    return (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)) * n +
           static_cast<std::size_t>(k);
  }

  GridFrame frame_;
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

// Top-down raster. Row r covers y in origin.y + [r, r+1) * pixel_size
// (row 0 is the southern edge), column c covers x likewise.
class BinaryMask {
 public:
  BinaryMask(int width, int height, double pixel_size, Vec2 origin);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  double pixel_size() const noexcept { return pixel_size_; }
  Vec2 origin() const noexcept { return origin_; }

  bool at(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool value = true) {
    bits_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0;
  }
  std::size_t count() const;
  Vec2 pixel_center(int row, int col) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_;
  int height_;
  double pixel_size_;
  Vec2 origin_;
  std::vector<std::uint8_t> bits_;
};

// Per-building prior frame: footprint bbox centered in x/y, ground at z = 0,
// cubic extent max(bbox width, bbox depth, height) grown by `padding`.
GridFrame frame_for_building(const BuildingRecord& record, int resolution, double padding = 0.05);

// Bounding-box proxy: cells whose centers lie in the footprint bbox
// (half-open) and below the roof height.
VoxelGrid extrude_lod0(const BuildingRecord& record, const GridFrame& frame);

// Extruded footprint: cells whose (x, y) center is inside the footprint by the
// even-odd rule and whose z center is below the roof height.
VoxelGrid extrude_lod1(const BuildingRecord& record, const GridFrame& frame);

// Max-pool by `factor` along every axis.
VoxelGrid downsample_occupancy(const VoxelGrid& grid, int factor);

// Column-OR projection onto an out_resolution^2 mask covering the grid's x/y
// extent, nearest-neighbour resampled.
BinaryMask rasterize_topdown(const VoxelGrid& grid, int out_resolution);

// Pixel-center even-odd rasterization of a footprint into a mask covering
// `frame`'s x/y extent at out_resolution^2.
BinaryMask rasterize_footprint(const Polygon& footprint, const GridFrame& frame, int out_resolution);

// "UVOX" little-endian occupancy file.
std::string serialize_grid(const VoxelGrid& grid);
VoxelGrid deserialize_grid(std::string_view bytes);

// Binary PGM (P5), north-up, 255 for set pixels.
std::string mask_to_pgm(const BinaryMask& mask);

}  // namespace cityflow
