#include "cityflow/image.hpp"

#include <algorithm>
#include <cctype>

#include "cityflow/error.hpp"

namespace cityflow {

GrayImage::GrayImage(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ArgumentError("image", "image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

GrayImage read_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) throw ParseError("image", "PGM header value too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError("image", "expected integer in PGM header", start);
    return static_cast<int>(value);
  };
  if (bytes.substr(0, 2) != "P5") throw ParseError("image", "not a binary PGM (P5)", 0);
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (maxval <= 0 || maxval > 255) throw ParseError("image", "unsupported PGM maxval", pos);
  ++pos;  // single whitespace before raster
  const auto n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) throw ParseError("image", "truncated PGM raster", bytes.size());
  GrayImage img(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / static_cast<double>(maxval);
  }
  return img;
}

std::string write_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (double v : image.pixels) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out.push_back(static_cast<char>(static_cast<unsigned char>(c * 255.0 + 0.5)));
  }
  return out;
}

GrayImage render_height_map(const VoxelGrid& grid) {
  const int n = grid.resolution();
  GrayImage img(n, n);
  for (const Index3 p : grid.active()) {
    // North-up: row 0 is the largest j.
    double& px = img.at(n - 1 - p.j, p.i);
    px = std::max(px, (p.k + 1.0) / n);
  }
  return img;
}

GrayImage render_frontal(const VoxelGrid& grid) {
  const int n = grid.resolution();
  GrayImage img(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j) {
        if (grid.at(i, j, k)) {
          img.at(n - 1 - k, i) = 1.0 - 0.5 * j / n;
          break;
        }
      }
    }
  }
  return img;
}

}  // namespace cityflow
