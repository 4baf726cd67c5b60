#pragma once

#include "cathlab/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace cathlab::volume {

// Regular grid of X-ray attenuation (1/mm). Voxel (i, j, k) is centered at
// origin + (i sx, j sy, k sz); data is x-fastest.
class AttenuationVolume {
 public:
  AttenuationVolume() = default;
  AttenuationVolume(std::array<int, 3> dims, Vec3 spacing_mm, Vec3 origin_mm, float fill = 0.0f);
  AttenuationVolume(std::array<int, 3> dims, Vec3 spacing_mm, Vec3 origin_mm, std::vector<float> data);

  // A volume of the given dims centered on the world origin.
  static AttenuationVolume centered(std::array<int, 3> dims, Vec3 spacing_mm, float fill = 0.0f);

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(k));
  }
  float at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  float& at(int i, int j, int k) { return data_[index(i, j, k)]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  Vec3 voxel_center(int i, int j, int k) const;
  // Axis-aligned extent of the voxel boxes (centers +- half a voxel).
  Vec3 lower_corner() const;
  Vec3 upper_corner() const;
  double voxel_volume() const { return spacing_.prod(); }

  // Throws InvalidArgument on broken invariants (non-finite or negative data).
  void validate() const;

  bool same_grid(const AttenuationVolume& other) const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  std::vector<float> data_;
};

struct SurfaceMesh {
  Polyline3 vertices;
  std::vector<std::array<int, 3>> triangles;
};

struct TetMesh {
  Polyline3 vertices;
  std::vector<std::array<int, 4>> tets;
};

struct MeshReport {
  bool closed = false;                 // every edge shared by exactly two faces
  bool manifold = false;               // no edge shared by more than two faces
  bool consistently_oriented = false;  // each shared edge traversed in opposite directions
  double signed_volume = 0.0;          // divergence-theorem volume, mm^3
};

MeshReport inspect(const SurfaceMesh& mesh);
void validate_indices(const SurfaceMesh& mesh);
void validate_indices(const TetMesh& mesh);

// Signed volume of tet (a, b, c, d); positive for right-handed ordering.
double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// Uniform Catmull-Rom curve through the knots. End knots are
// mirrored so the curve starts and ends exactly on the first/last knot.
class CenterlineCurve {
 public:
  CenterlineCurve() = default;
  explicit CenterlineCurve(Polyline3 knots);

  const Polyline3& knots() const { return knots_; }
  std::size_t segments() const { return knots_.size() < 2 ? 0 : knots_.size() - 1; }
  // s in [0, segments()].
  Vec3 eval(double s) const;
  // Dense samples with consecutive distance at most max_step.
  Polyline3 sample(double max_step) const;

 private:
  Polyline3 knots_;
};

double polyline_length(const Polyline3& pts);

struct PhantomSpec {
  std::array<int, 3> dims{128, 128, 128};
  Vec3 spacing_mm = Vec3::Constant(0.5);
  // World position of voxel (0,0,0); when unset the grid is centered on the isocenter.
  bool has_origin = false;
  Vec3 origin_mm = Vec3::Zero();
  Polyline3 centerline_knots;
  // Radius as a piecewise-linear function of normalized arc length in [0, 1].
  std::vector<std::pair<double, double>> radius_profile{{0.0, 2.0}, {1.0, 2.0}};
  float background = 0.0f;
  float vessel = 0.05f;

  void validate() const;
  double radius_at(double s_frac) const;
};

struct Phantom {
  AttenuationVolume volume;
  Polyline3 centerline;        // dense ground-truth samples
  std::vector<double> radii;   // radius at each centerline sample
  SurfaceMesh surface;         // closed tube surface, outward oriented
};

Phantom generate_vessel_phantom(const PhantomSpec& spec);

// Straight segment from a to b with constant radius.
PhantomSpec straight_tube_spec(const Vec3& a, const Vec3& b, double radius_mm,
                               std::array<int, 3> dims, Vec3 spacing_mm);
// Helix around the z axis: radius R, pitch per turn, turns; knots every
// few degrees so the Catmull-Rom curve follows the analytic helix.
PhantomSpec helix_tube_spec(double helix_radius, double pitch, double turns, double tube_radius,
                            std::array<int, 3> dims, Vec3 spacing_mm);
double helix_length(double helix_radius, double pitch, double turns);

// Closed tube mesh around a polyline with per-sample radii.
SurfaceMesh tube_surface(const Polyline3& centerline, const std::vector<double>& radii, int n_theta = 24);
SurfaceMesh icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());
SurfaceMesh ellipsoid(const Vec3& semi_axes, int subdivisions, const Vec3& center = Vec3::Zero());
SurfaceMesh unit_cube();

// Conforming tetrahedralization of the occupied voxels of a boolean mask:
// every cube is split into five tets with checkerboard alternation, so
// neighbouring cubes share face diagonals. An even cube count along an axis
// makes the mesh mirror-symmetric about that axis's midplane.
TetMesh tet_mesh_from_mask(const std::vector<std::uint8_t>& mask, std::array<int, 3> dims, double cell_mm,
                           const Vec3& origin_mm = Vec3::Zero());

// File formats. Volumes: raw little-endian float32 (x fastest) plus a JSON
// sidecar with the same stem. Either the .raw or .json path may be given.
void save_volume(const AttenuationVolume& vol, const std::filesystem::path& path);
AttenuationVolume load_volume(const std::filesystem::path& path);

// OBJ subset (v / f lines, 1-based indices).
void save_mesh(const SurfaceMesh& mesh, const std::filesystem::path& path);
SurfaceMesh load_mesh(const std::filesystem::path& path, bool require_closed = false);

// "v x y z" and "t i j k l" lines, 0-based indices.
void save_tet_mesh(const TetMesh& mesh, const std::filesystem::path& path);
TetMesh load_tet_mesh(const std::filesystem::path& path);

}  // namespace cathlab::volume
