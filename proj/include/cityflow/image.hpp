#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cityflow/voxel.hpp"

namespace cityflow {

// Grayscale raster with intensities in [0, 1], row-major, row 0 on top.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0);

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

// Binary PGM (P5, maxval <= 255) in and out.
GrayImage read_pgm(std::string_view bytes);
std::string write_pgm(const GrayImage& image);

// Top view: each pixel is the normalized height of its tallest active cell.
GrayImage render_height_map(const VoxelGrid& grid);

// Frontal view looking north: each pixel is the normalized depth-cued
// coverage of the first active cell along +y; row 0 is the top of the grid.
GrayImage render_frontal(const VoxelGrid& grid);

}  // namespace cityflow
