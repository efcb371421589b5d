#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cityflow/error.hpp"
#include "cityflow/voxel.hpp"

namespace cityflow {

class MeshError : public Error {
 public:
  explicit MeshError(const std::string& what) : Error("mesh", what) {}
};

// Contiguous run of triangles tagged with a building id.
struct MeshGroup {
  std::string name;
  std::size_t first_triangle = 0;
  std::size_t triangle_count = 0;

  friend bool operator==(const MeshGroup&, const MeshGroup&) = default;
};

using Triangle = std::array<std::uint32_t, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<MeshGroup> groups;

  // Throws MeshError on out-of-range indices or groups.
  void validate() const;
  double surface_area() const;

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

// One quad (two triangles) per voxel face that borders an empty cell or the
// grid boundary, wound counter-clockwise seen from outside. Vertex (x, y, z)
// is the grid corner (i, j, k) * cell_size, measured from the grid origin.
// Where solids or voids meet only along an edge or at a corner the shared
// corner is duplicated, so every edge borders exactly two triangles.
Mesh voxels_to_mesh(const VoxelGrid& grid);

enum class MeshFormat { obj, ply };

MeshFormat parse_mesh_format(std::string_view name);

// OBJ: ASCII, every "v" first, then "g <name>" blocks of 1-based "f" lines.
// PLY: binary little-endian, float xyz, uchar/int face lists; groups are kept
// in "comment group <name> <first> <count>" header lines. Whitespace inside
// group names is written as '_'.
std::string export_mesh(const Mesh& mesh, MeshFormat format);
Mesh parse_obj(std::string_view text);
Mesh parse_ply(std::string_view bytes);

}  // namespace cityflow
