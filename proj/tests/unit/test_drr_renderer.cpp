#include "cathlab/drr_renderer.hpp"
#include "cathlab/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace cathlab;
using namespace cathlab::drr;
using cathlab::geometry::CArmPose;
using cathlab::volume::AttenuationVolume;

namespace {

// Siddon's original formulation: collect every plane crossing, sort, and
// look up the voxel at each interval midpoint. Shares nothing with the
// incremental walk under test.
double siddon_oracle(const AttenuationVolume& vol, const Vec3& a, const Vec3& b) {
  const Vec3 lo = vol.lower_corner();
  const Vec3 d = b - a;
  std::vector<double> ts{0.0, 1.0};
  for (int ax = 0; ax < 3; ++ax) {
    if (d[ax] == 0.0) continue;
    for (int p = 0; p <= vol.dims()[ax]; ++p) {
      const double t = (lo[ax] + p * vol.spacing()[ax] - a[ax]) / d[ax];
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());
  double sum = 0.0;
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double dt = ts[i] - ts[i - 1];
    if (dt <= 0.0) continue;
    const Vec3 m = a + 0.5 * (ts[i] + ts[i - 1]) * d;
    int idx[3];
    bool inside = true;
    for (int ax = 0; ax < 3; ++ax) {
      idx[ax] = static_cast<int>(std::floor((m[ax] - lo[ax]) / vol.spacing()[ax]));
      inside = inside && idx[ax] >= 0 && idx[ax] < vol.dims()[ax];
    }
    if (inside) sum += vol.at(idx[0], idx[1], idx[2]) * dt;
  }
  return sum * d.norm();
}

AttenuationVolume random_volume(int n, unsigned seed, double empty_fraction = 0.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  AttenuationVolume v = AttenuationVolume::centered({n, n, n}, Vec3::Constant(1.0));
  for (float& x : v.data()) x = u(rng) < empty_fraction ? 0.0f : 0.02f * u(rng);
  return v;
}

CArmPose small_pose(int n, double alpha_deg = 0.0, double beta_deg = 0.0) {
  CArmPose p;
  p.n_u = p.n_v = n;
  p.fd_mm = 400.0 * n / 512.0;  // keeps the 0.55 mm pitch of the full detector
  p.alpha = deg2rad(alpha_deg);
  p.beta = deg2rad(beta_deg);
  return p;
}

double max_abs_diff(const Image2D& a, const Image2D& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  return m;
}

}  // namespace

TEST_CASE("uniform slab: central ray integrates rho times path length") {
  const AttenuationVolume cube = AttenuationVolume::centered({100, 100, 100}, Vec3::Ones(), 0.01f);
  // perpendicular ray through the cube center, from far outside
  CHECK(std::abs(cast_ray_integral(cube, Vec3(0, 800, 0), Vec3(0, -400, 0)) - 0.01f * 100.0) < 1e-6);
  // same through the renderer: a 3x3 detector puts pixel (1,1) on the central ray
  CArmPose p;
  p.n_u = p.n_v = 3;
  const Image2D img = render_drr(cube, p);
  CHECK(std::abs(img.at(1, 1) - 1.0) < 1e-6);
}

TEST_CASE("ray that misses the volume integrates to zero") {
  const AttenuationVolume cube = AttenuationVolume::centered({10, 10, 10}, Vec3::Ones(), 1.0f);
  CHECK(cast_ray_integral(cube, Vec3(100, 100, 0), Vec3(100, -100, 0)) == 0.0);
  CHECK(cast_ray_integral(cube, Vec3(0, 100, 0), Vec3(0, 50, 0)) == 0.0);  // stops short
}

TEST_CASE("two-voxel hand sum") {
  AttenuationVolume v({2, 1, 1}, Vec3::Ones(), Vec3::Zero(), std::vector<float>{1.0f, 2.0f});
  CHECK(cast_ray_integral(v, Vec3(-5, 0, 0), Vec3(5, 0, 0)) == doctest::Approx(3.0).epsilon(1e-15));
  // segment ending inside the second voxel: 1*1 + 2*0.25
  CHECK(cast_ray_integral(v, Vec3(-5, 0, 0), Vec3(0.75, 0, 0)) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("exact traversal matches the sorted-crossings oracle") {
  const AttenuationVolume v = random_volume(16, 3);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    const double oracle = siddon_oracle(v, a, b);
    CHECK(std::abs(cast_ray_integral(v, a, b) - oracle) <= 1e-9 * std::max(1.0, oracle));
    // reversing the ray leaves the integral unchanged
    CHECK(std::abs(cast_ray_integral(v, b, a) - oracle) <= 1e-9 * std::max(1.0, oracle));
  }
}

TEST_CASE("octree construction") {
  const AttenuationVolume zero = AttenuationVolume::centered({20, 20, 20}, Vec3::Ones());
  CHECK(build_octree(zero).root_skippable());

  AttenuationVolume one = zero;
  one.at(13, 2, 17) = 0.5f;
  const EmptySpaceOctree t = build_octree(one);
  CHECK_FALSE(t.root_skippable());
  // exactly one non-skippable node per level, on the chain above the voxel
  for (int l = 0; l < t.levels(); ++l) {
    const auto d = t.node_dims(l);
    int busy = 0;
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) busy += !t.skippable(l, i, j, k);
    CHECK(busy == 1);
    const int b = t.block(l);
    CHECK_FALSE(t.skippable(l, 13 / b, 2 / b, 17 / b));
  }

  // node max against brute force over the covered block
  const AttenuationVolume r = random_volume(40, 9, 0.5);
  const EmptySpaceOctree rt = build_octree(r);
  std::mt19937 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const int l = trial % rt.levels();
    const auto d = rt.node_dims(l);
    const int i = rng() % d[0], j = rng() % d[1], k = rng() % d[2];
    const int b = rt.block(l);
    float m = 0.0f;
    for (int z = k * b; z < std::min((k + 1) * b, 40); ++z)
      for (int y = j * b; y < std::min((j + 1) * b, 40); ++y)
        for (int x = i * b; x < std::min((i + 1) * b, 40); ++x) m = std::max(m, r.at(x, y, z));
    CHECK(rt.node_max(l, i, j, k) == m);
  }
  CHECK_THROWS_AS(build_octree(zero, -1.0f), Error);
}

TEST_CASE("empty volume renders to zeros") {
  const AttenuationVolume zero = AttenuationVolume::centered({32, 32, 32}, Vec3::Ones());
  const Image2D img = render_drr(zero, small_pose(32));
  CHECK(img.max() == 0.0);
  CHECK(img.width() == 32);
}

TEST_CASE("straight tube: bright band sits on the projected centerline") {
  const double z = 3.0;
  const auto spec = volume::straight_tube_spec(Vec3(-20, 0, z), Vec3(20, 0, z), 2.0, {128, 128, 128}, Vec3::Constant(0.5));
  const auto ph = volume::generate_vessel_phantom(spec);
  const CArmPose pose = small_pose(128);
  const Image2D img = render_drr(ph.volume, pose);
  const auto pm = geometry::projection_matrix(pose);
  for (int x = 40; x < 88; x += 4) {
    // intensity-weighted band center; the voxelized profile has a flat top
    double w = 0.0, wy = 0.0;
    for (int y = 0; y < img.height(); ++y) {
      w += img.at(x, y);
      wy += img.at(x, y) * (y + 0.5);
    }
    REQUIRE(w > 0.0);
    const Vec2 c = geometry::project_point(pm, Vec3(0, 0, z));
    CHECK(std::abs(wy / w - c.y()) <= 1.0);
  }
}

TEST_CASE("octree-accelerated rendering is exact") {
  const auto spec = volume::helix_tube_spec(10.0, 8.0, 1.5, 1.5, {64, 64, 64}, Vec3::Constant(0.5));
  const auto ph = volume::generate_vessel_phantom(spec);
  const EmptySpaceOctree t = build_octree(ph.volume);
  for (auto [a, b] : {std::pair{0.0, 0.0}, {34.3, 29.7}, {-30.2, 0.2}, {90.0, -20.0}, {-135.0, 45.0}}) {
    const CArmPose pose = small_pose(96, a, b);
    const Image2D naive = render_drr(ph.volume, pose);
    const Image2D fast = render_drr(ph.volume, pose, &t);
    CHECK(naive.max() > 0.0);
    CHECK(max_abs_diff(naive, fast) <= 1e-6);
  }
  const AttenuationVolume sparse = random_volume(48, 2, 0.97);
  const EmptySpaceOctree st = build_octree(sparse);
  const CArmPose pose = small_pose(64, 17.0, -11.0);
  CHECK(max_abs_diff(render_drr(sparse, pose), render_drr(sparse, pose, &st)) <= 1e-6);
  CHECK_THROWS_AS(render_drr(sparse, pose, &t), Error);
}

TEST_CASE("linearity and superposition") {
  const AttenuationVolume a = random_volume(64, 21), b = random_volume(64, 22);
  AttenuationVolume a2 = a, ab = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a2.data()[i] = 2.0f * a.data()[i];
    ab.data()[i] = a.data()[i] + b.data()[i];
  }
  const CArmPose pose = small_pose(48, 25.0, 10.0);
  const Image2D ia = render_drr(a, pose), ib = render_drr(b, pose);
  const Image2D ia2 = render_drr(a2, pose), iab = render_drr(ab, pose);
  double lin = 0.0, sup = 0.0;
  for (std::size_t i = 0; i < ia.size(); ++i) {
    if (ia.pixels()[i] > 0) lin = std::max(lin, std::abs(ia2.pixels()[i] - 2.0 * ia.pixels()[i]) / ia.pixels()[i]);
    sup = std::max(sup, std::abs(iab.pixels()[i] - ia.pixels()[i] - ib.pixels()[i]));
  }
  CHECK(lin <= 1e-9);
  CHECK(sup <= 1e-6);
}

TEST_CASE("image files") {
  const auto dir = std::filesystem::temp_directory_path() / "cathlab_test_drr";
  Image2D img(3, 2, std::vector<double>{0.0, 1.0, 2.0, 3.0, 4.0, 5.0});
  const auto bytes = encode_pgm16(img);
  const std::string header = "P5\n3 2\n65535\n";
  REQUIRE(bytes.size() == header.size() + 12);
  CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
  // 1/5 of full scale is 13107 = 0x3333, big-endian
  CHECK(bytes[header.size() + 2] == 0x33);
  CHECK(bytes[header.size() + 3] == 0x33);
  CHECK(bytes[header.size() + 10] == 0xFF);
  save_pgm16(img, dir / "a.pgm");
  const Image2D back = load_pgm(dir / "a.pgm");
  CHECK(back.at(2, 1) == 1.0);
  CHECK(back.at(1, 0) == doctest::Approx(0.2).epsilon(1e-4));

  save_image_raw(img, dir / "a.raw");
  const Image2D raw = load_image_raw(dir / "a.raw");
  CHECK(raw.pixels() == img.pixels());
  {
    std::ofstream out(dir / "bad.pgm", std::ios::binary);
    out << "P5\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(load_pgm(dir / "bad.pgm"), Error);
}
