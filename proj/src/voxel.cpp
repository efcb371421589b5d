#include "cityflow/voxel.hpp"

#include <algorithm>
#include <cmath>

#include "cityflow/binary_io.hpp"
#include "cityflow/error.hpp"

namespace cityflow {

VoxelGrid::VoxelGrid(GridFrame frame) : frame_(frame) {
  if (frame.resolution <= 0 || frame.resolution > 65535) {
    throw ArgumentError("voxel", "grid resolution must be in [1, 65535]");
  }
  if (!(frame.cell_size > 0.0)) throw ArgumentError("voxel", "cell_size must be positive");
  const auto n = static_cast<std::size_t>(frame.resolution);
  bits_.assign(n * n * n, 0);
}

void VoxelGrid::set(int i, int j, int k, bool value) {
  if (!in_range(i, j, k)) throw ArgumentError("voxel", "voxel index out of range");
  auto& cell = bits_[linear(i, j, k)];
  if (static_cast<bool>(cell) != value) {
    cell = value ? 1 : 0;
    value ? ++count_ : --count_;
  }
}

std::vector<Index3> VoxelGrid::active() const {
  std::vector<Index3> out;
  out.reserve(count_);
  const int n = frame_.resolution;
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k, ++idx)
        if (bits_[idx]) out.push_back({i, j, k});
  return out;
}

Vec3 VoxelGrid::cell_center(int i, int j, int k) const {
  const double c = frame_.cell_size;
  return {frame_.origin.x + (i + 0.5) * c, frame_.origin.y + (j + 0.5) * c,
          frame_.origin.z + (k + 0.5) * c};
}

bool VoxelGrid::in_range(int i, int j, int k) const {
  const int n = frame_.resolution;
  return i >= 0 && j >= 0 && k >= 0 && i < n && j < n && k < n;
}

BinaryMask::BinaryMask(int width, int height, double pixel_size, Vec2 origin)
    : width_(width), height_(height), pixel_size_(pixel_size), origin_(origin) {
  if (width <= 0 || height <= 0) throw ArgumentError("voxel", "mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Vec2 BinaryMask::pixel_center(int row, int col) const {
  return {origin_.x + (col + 0.5) * pixel_size_, origin_.y + (row + 0.5) * pixel_size_};
}

GridFrame frame_for_building(const BuildingRecord& record, int resolution, double padding) {
  if (resolution <= 0) throw ArgumentError("voxel", "resolution must be positive");
  const Rect box = record.footprint.bbox();
  const double extent = std::max({box.width(), box.height(), record.height}) * (1.0 + padding);
  const Vec2 c = box.center();
  return {resolution, extent / resolution, {c.x - extent / 2, c.y - extent / 2, 0.0}};
}

namespace {

void check_fits(const BuildingRecord& record, const GridFrame& frame) {
  const Rect box = record.footprint.bbox();
  const double ext = frame.extent();
  const double tol = 1e-9 * std::max(1.0, ext);
  const Rect frame_box{frame.origin.x - tol, frame.origin.y - tol, frame.origin.x + ext + tol,
                       frame.origin.y + ext + tol};
  if (!frame_box.contains(box) || record.height > frame.origin.z + ext + tol) {
    throw ArgumentError("voxel", "building \"" + record.id + "\" exceeds the grid frame");
  }
}

// Number of z layers whose cell center is below `height`.
int column_height(const GridFrame& frame, double height) {
  int layers = 0;
  while (layers < frame.resolution &&
         frame.origin.z + (layers + 0.5) * frame.cell_size < height) {
    ++layers;
  }
  return layers;
}

template <typename Inside>
VoxelGrid extrude(const BuildingRecord& record, const GridFrame& frame, Inside inside) {
  check_fits(record, frame);
  VoxelGrid grid(frame);
  const int layers = column_height(frame, record.height);
  if (layers == 0) return grid;
  const int n = frame.resolution;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec3 c = grid.cell_center(i, j, 0);
      if (!inside(Vec2{c.x, c.y})) continue;
      for (int k = 0; k < layers; ++k) grid.set(i, j, k);
    }
  }
  return grid;
}

}  // namespace

VoxelGrid extrude_lod0(const BuildingRecord& record, const GridFrame& frame) {
  const Rect box = record.footprint.bbox();
  return extrude(record, frame, [&](Vec2 p) {
    return p.x >= box.min_x && p.x < box.max_x && p.y >= box.min_y && p.y < box.max_y;
  });
}

VoxelGrid extrude_lod1(const BuildingRecord& record, const GridFrame& frame) {
  if (record.footprint.outer.size() < 4 || !(std::abs(signed_area(record.footprint.outer)) > 0.0)) {
    throw ValidationError("voxel", "building \"" + record.id + "\" has a degenerate footprint");
  }
  return extrude(record, frame, [&](Vec2 p) { return contains_even_odd(record.footprint, p); });
}

VoxelGrid downsample_occupancy(const VoxelGrid& grid, int factor) {
  const int n = grid.resolution();
  if (factor <= 0 || n % factor != 0) {
    throw ArgumentError("voxel", "downsample factor " + std::to_string(factor) +
                                     " does not divide resolution " + std::to_string(n));
  }
  GridFrame coarse = grid.frame();
  coarse.resolution = n / factor;
  coarse.cell_size *= factor;
  VoxelGrid out(coarse);
  for (const Index3 p : grid.active()) out.set(p.i / factor, p.j / factor, p.k / factor);
  return out;
}

BinaryMask rasterize_topdown(const VoxelGrid& grid, int out_resolution) {
  if (out_resolution <= 0) throw ArgumentError("voxel", "mask resolution must be positive");
  const int n = grid.resolution();
  std::vector<std::uint8_t> columns(static_cast<std::size_t>(n) * n, 0);
  for (const Index3 p : grid.active()) columns[static_cast<std::size_t>(p.j) * n + p.i] = 1;

  const GridFrame& f = grid.frame();
  BinaryMask mask(out_resolution, out_resolution, f.extent() / out_resolution, {f.origin.x, f.origin.y});
  for (int r = 0; r < out_resolution; ++r) {
    const int j = static_cast<int>((r + 0.5) * n / out_resolution);
    for (int c = 0; c < out_resolution; ++c) {
      const int i = static_cast<int>((c + 0.5) * n / out_resolution);
      if (columns[static_cast<std::size_t>(j) * n + i]) mask.set(r, c);
    }
  }
  return mask;
}

BinaryMask rasterize_footprint(const Polygon& footprint, const GridFrame& frame, int out_resolution) {
  if (out_resolution <= 0) throw ArgumentError("voxel", "mask resolution must be positive");
  BinaryMask mask(out_resolution, out_resolution, frame.extent() / out_resolution,
                  {frame.origin.x, frame.origin.y});
  for (int r = 0; r < out_resolution; ++r)
    for (int c = 0; c < out_resolution; ++c)
      if (contains_even_odd(footprint, mask.pixel_center(r, c))) mask.set(r, c);
  return mask;
}

std::string serialize_grid(const VoxelGrid& grid) {
  io::ByteWriter w;
  w.magic("UVOX");
  const GridFrame& f = grid.frame();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.resolution));
  w.put<float>(static_cast<float>(f.cell_size));
  w.put<float>(static_cast<float>(f.origin.x));
  w.put<float>(static_cast<float>(f.origin.y));
  w.put<float>(static_cast<float>(f.origin.z));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.count()));
  for (const Index3 p : grid.active()) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.i));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.j));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.k));
  }
  return w.take();
}

VoxelGrid deserialize_grid(std::string_view bytes) {
  io::ByteReader r(bytes, "voxel");
  r.expect_magic("UVOX");
  GridFrame f;
  f.resolution = static_cast<int>(r.get<std::uint32_t>());
  f.cell_size = r.get<float>();
  f.origin.x = r.get<float>();
  f.origin.y = r.get<float>();
  f.origin.z = r.get<float>();
  const auto count = r.get<std::uint32_t>();
  VoxelGrid grid(f);
  for (std::uint32_t n = 0; n < count; ++n) {
    const int i = r.get<std::uint16_t>();
    const int j = r.get<std::uint16_t>();
    const int k = r.get<std::uint16_t>();
    if (!grid.in_range(i, j, k)) throw IoError("voxel", "UVOX index out of range");
    if (grid.at(i, j, k)) throw IoError("voxel", "UVOX duplicate index");
    grid.set(i, j, k);
  }
  if (!r.at_end()) throw IoError("voxel", "trailing bytes after UVOX payload");
  return grid;
}

std::string mask_to_pgm(const BinaryMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(mask.width()) * mask.height());
  for (int r = mask.height() - 1; r >= 0; --r)
    for (int c = 0; c < mask.width(); ++c) out.push_back(mask.at(r, c) ? '\xff' : '\0');
  return out;
}

}  // namespace cityflow
