#include "cathlab/error.hpp"
#include "cathlab/volume_data.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace cathlab;
using namespace cathlab::volume;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cathlab_test_volume_data";
  fs::create_directories(dir);
  return dir / name;
}

std::size_t count_vessel(const AttenuationVolume& v, float level) {
  std::size_t n = 0;
  for (float x : v.data()) n += (x == level);
  return n;
}

bool bit_identical(const AttenuationVolume& a, const AttenuationVolume& b) {
  return a.dims() == b.dims() && a.spacing() == b.spacing() && a.origin() == b.origin() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("straight tube voxelization matches cylinder volume") {
  const double r = 2.0, len = 50.0;
  // axis along a row of voxel centers
  const auto spec = straight_tube_spec(Vec3(-25, 0.25, 0.25), Vec3(25, 0.25, 0.25), r, {128, 128, 128}, Vec3::Constant(0.5));
  const Phantom ph = generate_vessel_phantom(spec);
  const double voxelized = count_vessel(ph.volume, spec.vessel) * ph.volume.voxel_volume();
  const double analytic = kPi * r * r * len;
  CHECK(std::abs(voxelized - analytic) / analytic < 0.03);
  CHECK(polyline_length(ph.centerline) == doctest::Approx(len).epsilon(1e-9));
  // the surface mesh is closed and outward oriented
  const MeshReport rep = inspect(ph.surface);
  CHECK(rep.closed);
  CHECK(rep.consistently_oriented);
  CHECK(rep.signed_volume == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("voxelization error shrinks as spacing halves") {
  // off-grid axis so the error is not accidentally zero
  const Vec3 a(-10.3, 0.37, -0.21), b(10.1, 0.37, 0.44);
  const double r = 1.7;
  const double analytic = kPi * r * r * (b - a).norm();
  auto err = [&](double spacing, int n) {
    const auto spec = straight_tube_spec(a, b, r, {n, n, n}, Vec3::Constant(spacing));
    const Phantom ph = generate_vessel_phantom(spec);
    return std::abs(count_vessel(ph.volume, spec.vessel) * ph.volume.voxel_volume() - analytic);
  };
  const double coarse = err(0.8, 32);
  const double fine = err(0.4, 64);
  CHECK(fine < coarse);
}

TEST_CASE("helix centerline length") {
  const double R = 10.0, pitch = 8.0, turns = 2.0;
  const auto spec = helix_tube_spec(R, pitch, turns, 1.0, {64, 64, 64}, Vec3::Constant(0.5));
  const Phantom ph = generate_vessel_phantom(spec);
  const double analytic = helix_length(R, pitch, turns);
  CHECK(std::abs(polyline_length(ph.centerline) - analytic) / analytic < 0.005);
}

TEST_CASE("phantom error paths") {
  auto spec = straight_tube_spec(Vec3(1, 1, 1), Vec3(1, 1, 1), 2.0, {32, 32, 32}, Vec3::Constant(1.0));
  CHECK_THROWS_AS(generate_vessel_phantom(spec), Error);
  spec = straight_tube_spec(Vec3(-10, 0, 0), Vec3(100, 0, 0), 2.0, {32, 32, 32}, Vec3::Constant(1.0));
  try {
    generate_vessel_phantom(spec);
    FAIL("expected bounds error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Bounds);
  }
  spec = straight_tube_spec(Vec3(-10, 0, 0), Vec3(10, 0, 0), -1.0, {32, 32, 32}, Vec3::Constant(1.0));
  CHECK_THROWS_AS(generate_vessel_phantom(spec), Error);
}

TEST_CASE("stenosis dips the radius profile") {
  auto spec = straight_tube_spec(Vec3(-20, 0, 0), Vec3(20, 0, 0), 2.0, {96, 48, 48}, Vec3::Constant(0.5));
  spec.radius_profile = {{0.0, 2.0}, {0.4, 2.0}, {0.5, 1.0}, {0.6, 2.0}, {1.0, 2.0}};
  CHECK(spec.radius_at(0.5) == doctest::Approx(1.0));
  CHECK(spec.radius_at(0.45) == doctest::Approx(1.5));
  const Phantom ph = generate_vessel_phantom(spec);
  // cross-section at the stenosis has fewer vessel voxels than at the ends
  auto slice_count = [&](int i) {
    int n = 0;
    for (int k = 0; k < 48; ++k)
      for (int j = 0; j < 48; ++j) n += ph.volume.at(i, j, k) == spec.vessel;
    return n;
  };
  CHECK(slice_count(48) < slice_count(20));
}

TEST_CASE("volume file round trip is bit exact") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  AttenuationVolume v({16, 16, 16}, Vec3(0.5, 0.75, 1.25), Vec3(-3, 2.5, 7));
  for (float& x : v.data()) x = u(rng);
  const fs::path p = scratch("random16.raw");
  save_volume(v, p);
  CHECK(bit_identical(load_volume(p), v));
  CHECK(bit_identical(load_volume(fs::path(p).replace_extension(".json")), v));
}

TEST_CASE("volume payload size mismatch") {
  AttenuationVolume v({8, 8, 8}, Vec3::Ones(), Vec3::Zero(), 1.0f);
  const fs::path p = scratch("mismatch.raw");
  save_volume(v, p);
  // overwrite the payload with 7^3 values
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    std::vector<float> small(7 * 7 * 7, 1.0f);
    out.write(reinterpret_cast<const char*>(small.data()), small.size() * sizeof(float));
  }
  try {
    load_volume(p);
    FAIL("expected size mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SizeMismatch);
  }
  {
    std::ofstream side(fs::path(p).replace_extension(".json"));
    side << "{ not json";
  }
  try {
    load_volume(p);
    FAIL("expected malformed header");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedFile);
  }
}

TEST_CASE("phantom volume survives a save/load cycle") {
  const auto spec = straight_tube_spec(Vec3(-8, -2, 1), Vec3(9, 3, -1), 1.5, {40, 40, 40}, Vec3::Constant(0.5));
  const Phantom ph = generate_vessel_phantom(spec);
  const fs::path p = scratch("phantom.raw");
  save_volume(ph.volume, p);
  CHECK(bit_identical(load_volume(p), ph.volume));
}

TEST_CASE("mesh files") {
  const fs::path cube = scratch("cube.obj");
  save_mesh(unit_cube(), cube);
  const SurfaceMesh m = load_mesh(cube, true);
  CHECK(m.vertices.size() == 8);
  CHECK(m.triangles.size() == 12);
  const MeshReport r = inspect(m);
  CHECK(r.closed);
  CHECK(r.consistently_oriented);
  CHECK(r.signed_volume == doctest::Approx(1.0));

  const fs::path bad = scratch("bad.obj");
  {
    std::ofstream out(bad);
    for (int i = 0; i < 8; ++i) out << "v 0 0 " << i << "\n";
    out << "f 1 2 99\n";
  }
  try {
    load_mesh(bad);
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
  }

  // open mesh is reported, and rejected when closure is required
  SurfaceMesh open = unit_cube();
  open.triangles.pop_back();
  CHECK_FALSE(inspect(open).closed);
  const fs::path openp = scratch("open.obj");
  save_mesh(open, openp);
  CHECK_NOTHROW(load_mesh(openp));
  try {
    load_mesh(openp, true);
    FAIL("expected closure error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotClosed);
  }

  // a flipped face is reported, not repaired
  SurfaceMesh flipped = unit_cube();
  std::swap(flipped.triangles[0][1], flipped.triangles[0][2]);
  CHECK_FALSE(inspect(flipped).consistently_oriented);
  const fs::path fp = scratch("flipped.obj");
  save_mesh(flipped, fp);
  CHECK_FALSE(inspect(load_mesh(fp)).consistently_oriented);

  // three faces on one edge
  SurfaceMesh fin = unit_cube();
  fin.vertices.emplace_back(0.5, -1, 0);
  fin.triangles.push_back({0, 1, 8});
  const fs::path finp = scratch("fin.obj");
  save_mesh(fin, finp);
  try {
    load_mesh(finp, true);
    FAIL("expected non-manifold error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonManifold);
  }
}

TEST_CASE("tet mesh files") {
  // regular tet with edge length a: V = a^3 / (6 sqrt 2)
  const double a = 2.0;
  TetMesh t;
  t.vertices = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  t.tets = {{0, 1, 2, 3}};
  const double edge = (t.vertices[0] - t.vertices[1]).norm();
  const fs::path p = scratch("regular.tet");
  save_tet_mesh(t, p);
  const TetMesh loaded = load_tet_mesh(p);
  REQUIRE(loaded.tets.size() == 1);
  const auto& q = loaded.tets[0];
  const double vol = std::abs(tet_volume(loaded.vertices[q[0]], loaded.vertices[q[1]], loaded.vertices[q[2]],
                                         loaded.vertices[q[3]]));
  CHECK(vol == doctest::Approx(std::pow(edge, 3) / (6.0 * std::sqrt(2.0))));
  CHECK(edge == doctest::Approx(a * std::sqrt(2.0)));

  const fs::path bad = scratch("bad.tet");
  {
    std::ofstream out(bad);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 1 2 9\n";
  }
  CHECK_THROWS_AS(load_tet_mesh(bad), Error);
}

TEST_CASE("tet mesh from mask tiles the occupied cubes") {
  std::vector<std::uint8_t> mask(4 * 3 * 2, 1);
  const TetMesh m = tet_mesh_from_mask(mask, {4, 3, 2}, 0.5);
  CHECK(m.tets.size() == 5 * 24);
  double total = 0.0;
  for (const auto& t : m.tets) {
    const double v = tet_volume(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]], m.vertices[t[3]]);
    CHECK(v > 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(24 * 0.125));
  CHECK(m.vertices.size() == 5 * 4 * 3);
}

TEST_CASE("icosphere and cube primitives") {
  const SurfaceMesh s = icosphere(10.0, 4);
  CHECK(s.triangles.size() == 5120);
  const MeshReport r = inspect(s);
  CHECK(r.closed);
  CHECK(r.consistently_oriented);
  CHECK(r.signed_volume > 0.0);
}
