#include "cityflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cityflow/binary_io.hpp"

namespace cityflow {

namespace {

using Int3 = std::array<int, 3>;

// Face of cell `cell` on side `dir` (axis dir/2, positive when dir is odd).
struct Face {
  Int3 cell;
  int dir;
  std::array<Int3, 4> corners;
};

Int3 neighbour(const Int3& c, int dir) {
  Int3 n = c;
  n[dir / 2] += (dir % 2) ? 1 : -1;
  return n;
}

Face make_face(const Int3& cell, int dir) {
  const int a = dir / 2;
  const int u = (a + 1) % 3;
  const int v = (a + 2) % 3;
  Face f{cell, dir, {}};
  static constexpr int du[4] = {0, 1, 1, 0};
  static constexpr int dv[4] = {0, 0, 1, 1};
  for (int m = 0; m < 4; ++m) {
    Int3 p = cell;
    if (dir % 2) p[a] += 1;
    p[u] += du[m];
    p[v] += dv[m];
    f.corners[m] = p;
  }
  // (u, v, a) is cyclic, so the order above faces +a.
  if (dir % 2 == 0) std::swap(f.corners[1], f.corners[3]);
  return f;
}

class SlotUnion {
 public:
  explicit SlotUnion(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::string group_token(const std::string& name) {
  std::string out = name.empty() ? std::string("_") : name;
  for (char& c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) c = '_';
  }
  return out;
}

}  // namespace

void Mesh::validate() const {
  const auto n = vertices.size();
  for (const auto& t : triangles) {
    for (auto idx : t) {
      if (idx >= n) throw MeshError("triangle index " + std::to_string(idx) + " out of range");
    }
  }
  for (const auto& g : groups) {
    if (g.first_triangle + g.triangle_count > triangles.size()) {
      throw MeshError("group \"" + g.name + "\" exceeds the triangle list");
    }
  }
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double ux = b.x - a.x, uy = b.y - a.y, uz = b.z - a.z;
  const double vx = c.x - a.x, vy = c.y - a.y, vz = c.z - a.z;
  const double cx = uy * vz - uz * vy;
  const double cy = uz * vx - ux * vz;
  const double cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

double Mesh::surface_area() const {
  double total = 0.0;
  for (const auto& t : triangles) total += triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  return total;
}

Mesh voxels_to_mesh(const VoxelGrid& grid) {
  if (grid.empty()) throw MeshError("cannot mesh an empty grid");
  const int n = grid.resolution();
  auto solid = [&](const Int3& c) {
    return grid.in_range(c[0], c[1], c[2]) && grid.at(c[0], c[1], c[2]);
  };

  std::vector<Face> faces;
  for (const auto& p : grid.active()) {
    const Int3 cell{p.i, p.j, p.k};
    for (int dir = 0; dir < 6; ++dir) {
      if (!solid(neighbour(cell, dir))) faces.push_back(make_face(cell, dir));
    }
  }

  const auto stride = static_cast<std::uint64_t>(n) + 1;
  auto corner_id = [&](const Int3& c) {
    return (static_cast<std::uint64_t>(c[0]) * stride + static_cast<std::uint64_t>(c[1])) * stride +
           static_cast<std::uint64_t>(c[2]);
  };

  // Faces incident to every edge, keyed by its two corner ids.
  struct EdgeUse {
    std::size_t face;
    int from;  // corner slot of the edge start within the face
  };
  std::unordered_map<std::uint64_t, std::vector<EdgeUse>> edges;
  const std::uint64_t corner_count = stride * stride * stride;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int m = 0; m < 4; ++m) {
      auto a = corner_id(faces[f].corners[m]);
      auto b = corner_id(faces[f].corners[(m + 1) % 4]);
      edges[std::min(a, b) * corner_count + std::max(a, b)].push_back({f, m});
    }
  }

  SlotUnion slots(faces.size() * 4);
  auto slot_of = [&](std::size_t f, const Int3& corner) {
    for (int m = 0; m < 4; ++m) {
      if (faces[f].corners[m] == corner) return f * 4 + static_cast<std::size_t>(m);
    }
    throw MeshError("internal corner lookup failed");
  };
  auto join = [&](const EdgeUse& x, const EdgeUse& y) {
    const auto& fx = faces[x.face];
    const Int3 c0 = fx.corners[x.from];
    const Int3 c1 = fx.corners[(x.from + 1) % 4];
    slots.unite(slot_of(x.face, c0), slot_of(y.face, c0));
    slots.unite(slot_of(x.face, c1), slot_of(y.face, c1));
  };

  for (auto& [key, uses] : edges) {
    if (uses.size() == 2) {
      join(uses[0], uses[1]);
      continue;
    }
    if (uses.size() != 4) throw MeshError("internal edge with " + std::to_string(uses.size()) + " faces");

    // Two solid cells meet diagonally across this edge. Pair each cell's own
    // faces unless the solids are joined around both end corners, in which
    // case the two voids are the separated pieces and their walls pair up.
    const auto& f0 = faces[uses[0].face];
    const Int3 lo = f0.corners[uses[0].from];
    const Int3 hi = f0.corners[(uses[0].from + 1) % 4];
    int axis = 0;
    while (lo[axis] == hi[axis]) ++axis;
    const int layer = std::min(lo[axis], hi[axis]);
    const Int3 cell_a = faces[uses[0].face].cell;
    Int3 cell_b = cell_a;
    std::vector<Int3> voids;
    for (const auto& u : uses) {
      if (faces[u.face].cell != cell_a) cell_b = faces[u.face].cell;
      auto nb = neighbour(faces[u.face].cell, faces[u.face].dir);
      if (std::find(voids.begin(), voids.end(), nb) == voids.end()) voids.push_back(nb);
    }
    auto shifted = [&](Int3 c, int to_layer) {
      c[axis] = to_layer;
      return c;
    };
    auto joined_at = [&](int other_layer) {
      return solid(shifted(cell_a, other_layer)) && solid(shifted(cell_b, other_layer)) &&
             (solid(shifted(voids[0], other_layer)) || solid(shifted(voids[1], other_layer)));
    };
    const bool pair_by_void = joined_at(layer - 1) && joined_at(layer + 1);
    for (std::size_t x = 0; x < 4; ++x) {
      for (std::size_t y = x + 1; y < 4; ++y) {
        const auto& fx = faces[uses[x].face];
        const auto& fy = faces[uses[y].face];
        const bool same = pair_by_void ? neighbour(fx.cell, fx.dir) == neighbour(fy.cell, fy.dir)
                                       : fx.cell == fy.cell;
        if (same) join(uses[x], uses[y]);
      }
    }
  }

  Mesh mesh;
  const double h = grid.cell_size();
  std::unordered_map<std::size_t, std::uint32_t> vertex_of;
  std::vector<std::uint32_t> slot_vertex(faces.size() * 4);
  for (std::size_t s = 0; s < slot_vertex.size(); ++s) {
    auto root = slots.find(s);
    auto [it, inserted] = vertex_of.try_emplace(root, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) {
      const Int3& c = faces[s / 4].corners[s % 4];
      mesh.vertices.push_back({c[0] * h, c[1] * h, c[2] * h});
    }
    slot_vertex[s] = it->second;
  }
  mesh.triangles.reserve(faces.size() * 2);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto* v = &slot_vertex[f * 4];
    mesh.triangles.push_back({v[0], v[1], v[2]});
    mesh.triangles.push_back({v[0], v[2], v[3]});
  }
  return mesh;
}

MeshFormat parse_mesh_format(std::string_view name) {
  if (name == "obj") return MeshFormat::obj;
  if (name == "ply") return MeshFormat::ply;
  throw ArgumentError("mesh", "unknown mesh format \"" + std::string(name) + "\"");
}

std::string export_mesh(const Mesh& mesh, MeshFormat format) {
  mesh.validate();
  if (format == MeshFormat::obj) {
    std::string out;
    char buf[96];
    for (const auto& v : mesh.vertices) {
      std::snprintf(buf, sizeof buf, "v %.10g %.10g %.10g\n", v.x, v.y, v.z);
      out += buf;
    }
    auto write_faces = [&](std::size_t first, std::size_t count) {
      for (std::size_t t = first; t < first + count; ++t) {
        const auto& tri = mesh.triangles[t];
        std::snprintf(buf, sizeof buf, "f %u %u %u\n", tri[0] + 1, tri[1] + 1, tri[2] + 1);
        out += buf;
      }
    };
    // Triangles outside every group come first, ungrouped.
    std::vector<bool> grouped(mesh.triangles.size(), false);
    for (const auto& g : mesh.groups) {
      std::fill_n(grouped.begin() + static_cast<std::ptrdiff_t>(g.first_triangle), g.triangle_count, true);
    }
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      if (!grouped[t]) write_faces(t, 1);
    }
    for (const auto& g : mesh.groups) {
      out += "g " + group_token(g.name) + "\n";
      write_faces(g.first_triangle, g.triangle_count);
    }
    return out;
  }

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& g : mesh.groups) {
    header << "comment group " << group_token(g.name) << ' ' << g.first_triangle << ' ' << g.triangle_count << '\n';
  }
  header << "element vertex " << mesh.vertices.size() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "element face " << mesh.triangles.size() << "\n"
         << "property list uchar int vertex_indices\nend_header\n";
  io::ByteWriter w;
  w.raw(header.str());
  for (const auto& v : mesh.vertices) {
    w.put<float>(static_cast<float>(v.x));
    w.put<float>(static_cast<float>(v.y));
    w.put<float>(static_cast<float>(v.z));
  }
  for (const auto& t : mesh.triangles) {
    w.put<std::uint8_t>(3);
    for (auto idx : t) w.put<std::int32_t>(static_cast<std::int32_t>(idx));
  }
  return w.take();
}

Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    const std::size_t offset = pos;
    pos = end + 1;
    ++line_no;
    std::istringstream in(line);
    std::string tag;
    if (!(in >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(in >> v.x >> v.y >> v.z)) throw ParseError("mesh", "bad vertex on line " + std::to_string(line_no), offset);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (in >> tok) {
        // Keep only the position index of "v/vt/vn" tokens.
        idx.push_back(std::stol(tok.substr(0, tok.find('/'))));
      }
      if (idx.size() < 3) throw ParseError("mesh", "face with fewer than 3 vertices on line " + std::to_string(line_no), offset);
      auto resolve = [&](long i) -> std::uint32_t {
        const long n = static_cast<long>(mesh.vertices.size());
        const long r = i < 0 ? n + i : i - 1;
        if (r < 0 || r >= n) throw ParseError("mesh", "face index out of range on line " + std::to_string(line_no), offset);
        return static_cast<std::uint32_t>(r);
      };
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
        mesh.triangles.push_back({resolve(idx[0]), resolve(idx[t]), resolve(idx[t + 1])});
        if (!mesh.groups.empty()) ++mesh.groups.back().triangle_count;
      }
    } else if (tag == "g") {
      std::string name;
      in >> name;
      mesh.groups.push_back({name, mesh.triangles.size(), 0});
    }
  }
  return mesh;
}

Mesh parse_ply(std::string_view bytes) {
  const auto header_end = bytes.find("end_header\n");
  if (bytes.substr(0, 4) != "ply\n" || header_end == std::string_view::npos) {
    throw ParseError("mesh", "not a PLY file", 0);
  }
  std::istringstream header(std::string(bytes.substr(0, header_end)));
  std::string line;
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  Mesh mesh;
  while (std::getline(header, line)) {
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "format") {
      std::string fmt;
      in >> fmt;
      if (fmt != "binary_little_endian") throw ParseError("mesh", "unsupported PLY format " + fmt, 0);
    } else if (tag == "element") {
      std::string what;
      std::size_t count = 0;
      in >> what >> count;
      (what == "vertex" ? vertex_count : face_count) = count;
    } else if (tag == "comment") {
      std::string kind;
      MeshGroup g;
      if (in >> kind && kind == "group" && in >> g.name >> g.first_triangle >> g.triangle_count) {
        mesh.groups.push_back(g);
      }
    }
  }
  io::ByteReader r(bytes.substr(header_end + 11), "mesh");
  mesh.vertices.resize(vertex_count);
  for (auto& v : mesh.vertices) {
    v.x = r.get<float>();
    v.y = r.get<float>();
    v.z = r.get<float>();
  }
  mesh.triangles.resize(face_count);
  for (auto& t : mesh.triangles) {
    if (r.get<std::uint8_t>() != 3) throw ParseError("mesh", "only triangle faces are supported", r.position());
    for (auto& idx : t) idx = static_cast<std::uint32_t>(r.get<std::int32_t>());
  }
  mesh.validate();
  return mesh;
}

}  // namespace cityflow
