#include "cathlab/error.hpp"
#include "cathlab/volume_data.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

namespace cathlab::volume {

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

void flip_all(SurfaceMesh& mesh) {
  for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
}

double signed_volume(const SurfaceMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

}  // namespace

double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

void validate_indices(const SurfaceMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f)
    for (int idx : mesh.triangles[f])
      require(idx >= 0 && idx < n, ErrorCode::IndexOutOfRange,
              "triangle " + std::to_string(f) + " references vertex " + std::to_string(idx) + " of " +
                  std::to_string(n));
}

void validate_indices(const TetMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.tets.size(); ++t)
    for (int idx : mesh.tets[t])
      require(idx >= 0 && idx < n, ErrorCode::IndexOutOfRange,
              "tet " + std::to_string(t) + " references vertex " + std::to_string(idx) + " of " +
                  std::to_string(n));
}

MeshReport inspect(const SurfaceMesh& mesh) {
  validate_indices(mesh);
  // directed edge -> count; undirected edge -> count
  std::unordered_map<std::uint64_t, int> directed;
  std::unordered_map<std::uint64_t, int> undirected;
  directed.reserve(mesh.triangles.size() * 3);
  undirected.reserve(mesh.triangles.size() * 3);
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++directed[edge_key(a, b)];
      ++undirected[edge_key(std::min(a, b), std::max(a, b))];
    }
  }
  MeshReport r;
  r.manifold = true;
  r.closed = !mesh.triangles.empty();
  r.consistently_oriented = true;
  for (const auto& [key, count] : undirected) {
    if (count > 2) r.manifold = false;
    if (count != 2) r.closed = false;
  }
  for (const auto& [key, count] : directed)
    if (count > 1) r.consistently_oriented = false;
  r.signed_volume = signed_volume(mesh);
  return r;
}

SurfaceMesh unit_cube() {
  SurfaceMesh m;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) m.vertices.emplace_back(i, j, k);
  // vertex index = i + 2j + 4k; faces wound counter-clockwise seen from outside
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

SurfaceMesh icosphere(double radius, int subdivisions, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  SurfaceMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int idx = static_cast<int>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& f : m.triangles) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v = center + radius * v;
  if (signed_volume(m) < 0.0) flip_all(m);
  return m;
}

SurfaceMesh ellipsoid(const Vec3& semi_axes, int subdivisions, const Vec3& center) {
  SurfaceMesh m = icosphere(1.0, subdivisions);
  for (auto& v : m.vertices) v = center + v.cwiseProduct(semi_axes);
  return m;
}

SurfaceMesh tube_surface(const Polyline3& centerline, const std::vector<double>& radii, int n_theta) {
  require(centerline.size() >= 2 && radii.size() == centerline.size(), ErrorCode::InvalidArgument,
          "tube_surface needs >= 2 stations with one radius each");
  require(n_theta >= 3, ErrorCode::InvalidArgument, "tube_surface needs n_theta >= 3");
  const std::size_t n = centerline.size();
  Polyline3 tangents(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = centerline[std::min(i + 1, n - 1)] - centerline[i == 0 ? 0 : i - 1];
    require(d.norm() > 0.0, ErrorCode::Bounds, "tube_surface: repeated centerline station");
    tangents[i] = d.normalized();
  }
  // parallel-transported normal
  Vec3 normal = tangents[0].unitOrthogonal();
  SurfaceMesh m;
  m.vertices.reserve(n * n_theta + 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      normal -= tangents[i] * tangents[i].dot(normal);
      if (normal.norm() < 1e-9) normal = tangents[i].unitOrthogonal();
      normal.normalize();
    }
    const Vec3 binormal = tangents[i].cross(normal);
    for (int k = 0; k < n_theta; ++k) {
      const double th = 2.0 * kPi * k / n_theta;
      m.vertices.push_back(centerline[i] + radii[i] * (std::cos(th) * normal + std::sin(th) * binormal));
    }
  }
  auto ring = [&](std::size_t i, int k) { return static_cast<int>(i * n_theta + (k % n_theta)); };
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (int k = 0; k < n_theta; ++k) {
      m.triangles.push_back({ring(i, k), ring(i + 1, k), ring(i + 1, k + 1)});
      m.triangles.push_back({ring(i, k), ring(i + 1, k + 1), ring(i, k + 1)});
    }
  const int c0 = static_cast<int>(m.vertices.size());
  m.vertices.push_back(centerline.front());
  const int c1 = static_cast<int>(m.vertices.size());
  m.vertices.push_back(centerline.back());
  for (int k = 0; k < n_theta; ++k) {
    m.triangles.push_back({c0, ring(0, k), ring(0, k + 1)});
    m.triangles.push_back({c1, ring(n - 1, k + 1), ring(n - 1, k)});
  }
  if (signed_volume(m) < 0.0) flip_all(m);
  return m;
}

TetMesh tet_mesh_from_mask(const std::vector<std::uint8_t>& mask, std::array<int, 3> dims, double cell_mm,
                           const Vec3& origin_mm) {
  const std::size_t total = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  require(mask.size() == total, ErrorCode::SizeMismatch, "mask size does not match dims");
  require(cell_mm > 0.0, ErrorCode::InvalidArgument, "cell size must be > 0");
  // corner bit b = x + 2y + 4z; even cubes use the central tet {1,2,4,7}
  static constexpr int kEven[5][4] = {{0, 1, 2, 4}, {3, 2, 1, 7}, {5, 4, 7, 1}, {6, 7, 4, 2}, {1, 2, 4, 7}};
  static constexpr int kOdd[5][4] = {{1, 0, 3, 5}, {2, 3, 0, 6}, {4, 5, 6, 0}, {7, 6, 5, 3}, {0, 3, 5, 6}};

  TetMesh m;
  std::unordered_map<std::uint64_t, int> corner_index;
  auto corner = [&](int i, int j, int k) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(i) << 42) | (static_cast<std::uint64_t>(j) << 21) | static_cast<std::uint64_t>(k);
    auto [it, inserted] = corner_index.emplace(key, static_cast<int>(m.vertices.size()));
    if (inserted) m.vertices.push_back(origin_mm + cell_mm * Vec3(i, j, k));
    return it->second;
  };
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        if (!mask[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k)])
          continue;
        int c[8];
        for (int b = 0; b < 8; ++b) c[b] = corner(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
        const auto& table = ((i + j + k) % 2 == 0) ? kEven : kOdd;
        for (const auto& t : table) {
          std::array<int, 4> tet{c[t[0]], c[t[1]], c[t[2]], c[t[3]]};
          if (tet_volume(m.vertices[tet[0]], m.vertices[tet[1]], m.vertices[tet[2]], m.vertices[tet[3]]) < 0.0)
            std::swap(tet[2], tet[3]);
          m.tets.push_back(tet);
        }
      }
  return m;
}

}  // namespace cathlab::volume
