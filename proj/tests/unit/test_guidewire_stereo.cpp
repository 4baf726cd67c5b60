#include <doctest.h>

#include "cathlab/carm_geometry.hpp"
#include "cathlab/drr_renderer.hpp"
#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"
#include "cathlab/volume_data.hpp"

#include <cmath>
#include <random>

using namespace cathlab;
using namespace cathlab::stereo;

namespace {

CameraModel simple_camera(double f = 1000.0) {
  CameraModel c;
  c.K << f, 0, 320, 0, f, 240, 0, 0, 1;
  return c;
}

// Looks along -x from (range, 0, range_z): 90 degrees from simple_camera.
CameraModel side_camera(double range, double z) {
  CameraModel c = simple_camera();
  c.R << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  c.t = -c.R * Vec3(range, 0, z);
  return c;
}

CameraModel carm_camera(double alpha_deg, double beta_deg) {
  geometry::CArmPose pose;
  pose.alpha = deg2rad(alpha_deg);
  pose.beta = deg2rad(beta_deg);
  return camera_from_carm(pose);
}

Polyline3 helix(int n, double radius = 10.0, double pitch = 20.0, double turns = 1.5) {
  Polyline3 out;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * kPi * turns * i / (n - 1);
    out.emplace_back(radius * std::cos(a), radius * std::sin(a), pitch * a / (2.0 * kPi) - 0.5 * pitch * turns);
  }
  return out;
}

Polyline2 project_all(const CameraModel& c, const Polyline3& pts) {
  Polyline2 out;
  for (const Vec3& p : pts) out.push_back(camera_project(c, p));
  return out;
}

double dist_to_polyline(const Vec3& x, const Polyline3& poly) {
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec3 ab = poly[i + 1] - poly[i];
    const double f = std::clamp((x - poly[i]).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (poly[i] + f * ab - x).norm());
  }
  return best;
}

BinaryImage blank_mask(int w, int h) { return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)}; }

void set(BinaryImage& m, int x, int y) { m.px[static_cast<std::size_t>(y) * m.width + x] = 1; }

}  // namespace

TEST_CASE("camera projection") {
  CameraModel c = simple_camera();
  c.validate();
  SUBCASE("optical axis maps to the principal point") {
    const Vec2 p = camera_project(c, Vec3(0, 0, 500));
    CHECK(p.x() == doctest::Approx(320));
    CHECK(p.y() == doctest::Approx(240));
  }
  SUBCASE("matrix oracle") {
    c.R = Eigen::AngleAxisd(0.3, Vec3(0, 1, 0)).toRotationMatrix();
    c.t = Vec3(5, -2, 40);
    const Vec3 x(10, 20, 300);
    const Vec3 cam = c.R * x + c.t;
    const Vec2 expect(1000 * cam.x() / cam.z() + 320, 1000 * cam.y() / cam.z() + 240);
    CHECK((camera_project(c, x) - expect).norm() < 1e-9);
  }
  SUBCASE("doubling the focal length doubles the offset") {
    const Vec3 x(10, 20, 300);
    const Vec2 pp(320, 240);
    const Vec2 d1 = camera_project(c, x) - pp;
    const Vec2 d2 = camera_project(simple_camera(2000.0), x) - pp;
    CHECK((d2 - 2.0 * d1).norm() < 1e-9);
  }
  SUBCASE("distortion in normalized coordinates") {
    c.D = {0.1, 0.0, 0.0, 0.0};
    // n = (0.1, 0.2): r^2 = 0.05, radial = 1.005.
    const Vec2 p = camera_project(c, Vec3(30, 60, 300));
    CHECK(p.x() == doctest::Approx(1000 * 0.1005 + 320).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(1000 * 0.201 + 240).epsilon(1e-12));
    c.D = {-0.2, 0.05, 0.001, -0.002};
    const Vec3 x(-40, 25, 250);
    CameraModel ideal = c;
    ideal.D = {0, 0, 0, 0};
    CHECK((undistort_pixel(c, camera_project(c, x)) - camera_project(ideal, x)).norm() < 1e-8);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(camera_project(c, Vec3(0, 0, -10)), Error);
    CameraModel bad = c;
    bad.K(0, 0) = -1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.R(0, 0) = 2;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("C-arm camera agrees with the projection matrix") {
  geometry::CArmPose pose;
  pose.alpha = deg2rad(-30);
  pose.beta = deg2rad(20);
  pose.table_mm = Vec3(3, -4, 5);
  const CameraModel cam = camera_from_carm(pose);
  cam.validate();
  const auto pm = geometry::projection_matrix(pose);
  for (const Vec3& x : {Vec3(0, 0, 0), Vec3(20, -10, 30), Vec3(-40, 25, -15)}) {
    // The matrix uses detector coordinates; image pixel centers sit half a pixel earlier.
    const Vec2 det = geometry::project_point(pm, x);
    CHECK((camera_project(cam, x) - (det - Vec2(0.5, 0.5))).norm() < 1e-9);
  }
}

TEST_CASE("fundamental matrix") {
  const CameraModel a = carm_camera(-45, 0), b = carm_camera(45, 10);
  const Mat3 F = fundamental_matrix(a, b);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-30, 30);
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(U(rng), U(rng), U(rng));
    const Vec2 p1 = camera_project(a, x), p2 = camera_project(b, x);
    const Vec3 l = F * Vec3(p1.x(), p1.y(), 1);
    CHECK(std::abs(l.dot(Vec3(p2.x(), p2.y(), 1))) / l.head<2>().norm() < 1e-6);
  }
}

TEST_CASE("triangulation") {
  const CameraModel c1 = simple_camera(), c2 = side_camera(300, 250);
  const Vec3 X(5, -3, 250);
  SUBCASE("noise-free round trip") {
    CHECK((triangulate(c1, c2, camera_project(c1, X), camera_project(c2, X)) - X).norm() < 1e-6);
    CHECK(ray_angle_deg(c1, c2, X) == doctest::Approx(90).epsilon(0.05));
  }
  SUBCASE("uniform half-pixel noise stays under 1 mm") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    const Vec2 p1 = camera_project(c1, X), p2 = camera_project(c2, X);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Vec2 n1(U(rng), U(rng)), n2(U(rng), U(rng));
      worst = std::max(worst, (triangulate(c1, c2, p1 + n1, p2 + n2) - X).norm());
    }
    CHECK(worst < 1.0);
  }
  SUBCASE("zero baseline") {
    CHECK_THROWS_AS(triangulate(c1, c1, Vec2(300, 200), Vec2(310, 200)), Error);
  }
}

TEST_CASE("match cost") {
  Image2D a(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) a.at(x, y) = std::sin(0.4 * x) + 0.3 * std::cos(0.7 * y);
  MatchParams p;
  const Vec2 c(16, 16);
  p.alpha = 1.0;
  CHECK(ncc(a, c, a, c, 11) == doctest::Approx(1.0));
  CHECK(match_cost(a, c, Vec2(1, 0), 0.0, a, c, Vec2(0, 1), 0.3, p) == doctest::Approx(1.0));
  CHECK(match_cost(a, c, Vec2(1, 0), 0.0, a, c, Vec2(1, 0), 0.0, p) == doctest::Approx(1.0));
  p.alpha = 0.0;
  CHECK(match_cost(a, c, Vec2(1, 0), 0.02, a, Vec2(5, 5), Vec2(2, 0), 0.02, p) == doctest::Approx(1.0));
  CHECK(structural_similarity(Vec2(1, 0), 0.0, Vec2(0, 1), 0.0, 0.05) == doctest::Approx(0.0));
  CHECK(structural_similarity(Vec2(1, 0), 0.0, Vec2(1, 0), 0.05, 0.05) == doctest::Approx(std::exp(-1.0)));

  // Flat patch: NCC undefined, the cost falls back to the structural term.
  const Image2D flat(32, 32, 0.7);
  CHECK_THROWS_AS(ncc(flat, c, a, c, 11), Error);
  p.alpha = 0.5;
  CHECK(match_cost(flat, c, Vec2(1, 0), 0.0, a, c, Vec2(1, 1), 0.0, p) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("skeleton and centerline") {
  SUBCASE("three-pixel bar thins to its middle row") {
    BinaryImage m = blank_mask(60, 20);
    for (int y = 9; y <= 11; ++y)
      for (int x = 10; x < 50; ++x) set(m, x, y);
    const BinaryImage s = thin(m);
    CHECK(s.count() > 30);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 60; ++x)
        if (s.at(x, y)) CHECK(std::abs(y - 10) <= 1);
    const Centerline2D c = extract_centerline(m);
    CHECK(c.length() > 36);
    for (const Vec2& q : c.dense) CHECK(std::abs(q.y() - 10) <= 1.0);
  }
  SUBCASE("curved band gets denser key points than a straight one") {
    BinaryImage arc = blank_mask(80, 80), bar = blank_mask(120, 20);
    const double r = 8.0;
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x) {
        const double d = std::hypot(x - 40.0, y - 40.0);
        if (std::abs(d - r) <= 1.5 && y >= 40) set(arc, x, y);  // half circle
      }
    const double len = kPi * r;
    for (int y = 9; y <= 11; ++y)
      for (int x = 10; x < 10 + static_cast<int>(len) + 1; ++x) set(bar, x, y);
    const Centerline2D ca = extract_centerline(arc), cb = extract_centerline(bar);
    CHECK(ca.size() / ca.length() > cb.size() / cb.length());

    // Straight polyline: spacing at the upper bound; circle of radius 20 px: 2/k = 40 -> 25.
    Polyline2 line{Vec2(0, 0), Vec2(100, 0)};
    const Centerline2D cl = centerline_from_polyline(line, 128, 128);
    CHECK(cl.size() == 5);
    Polyline2 tight;
    for (int i = 0; i <= 200; ++i) {
      const double a = kPi * i / 200;
      tight.emplace_back(40 + 5 * std::cos(a), 40 + 5 * std::sin(a));
    }
    const Centerline2D ct = centerline_from_polyline(tight, 128, 128);
    // k = 1/5 -> spacing 10 px along a 15.7 px arc.
    CHECK(ct.size() == 3);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(extract_centerline(blank_mask(20, 20)), Error);
    BinaryImage cross = blank_mask(61, 61);
    for (int i = 10; i <= 50; ++i) {
      set(cross, i, 30);
      set(cross, 30, i);
    }
    CHECK_THROWS_AS(extract_centerline(cross), Error);
  }
}

TEST_CASE("DP matching") {
  const CameraModel c1 = carm_camera(-45, 0), c2 = carm_camera(45, 0);
  SUBCASE("helix matches the forward-projection oracle") {
    const Polyline3 h = helix(4000);
    const Polyline2 q1 = project_all(c1, h), q2 = project_all(c2, h);
    const Centerline2D l1 = centerline_from_polyline(q1, 512, 512), l2 = centerline_from_polyline(q2, 512, 512);
    const MatchResult m = match_curves_dp(l1, l2, c1, c2, nullptr, nullptr);
    REQUIRE(m.matches.size() >= l1.size() * 9 / 10);
    int good = 0;
    for (const Match& mt : m.matches) {
      std::size_t best = 0;
      for (std::size_t i = 0; i < q1.size(); ++i)
        if ((q1[i] - mt.p1).squaredNorm() < (q1[best] - mt.p1).squaredNorm()) best = i;
      good += (q2[best] - mt.p2).norm() <= 1.0;
    }
    CHECK(good >= 0.95 * m.matches.size());
    for (std::size_t i = 1; i < m.matches.size(); ++i) {
      CHECK(m.matches[i].key > m.matches[i - 1].key);
      CHECK(m.matches[i].s2 >= m.matches[i - 1].s2);
    }
    CHECK_FALSE(m.reversed);

    // Reversing the second curve flips the chosen orientation, not the quality.
    Polyline2 r2(q2.rbegin(), q2.rend());
    const MatchResult mr = match_curves_dp(l1, centerline_from_polyline(r2, 512, 512), c1, c2, nullptr, nullptr);
    CHECK(mr.reversed);
    CHECK(mr.matches.size() == m.matches.size());
  }
  SUBCASE("single points on the epipolar correspondence") {
    const Vec3 x(4, -6, 9);
    const Centerline2D a = centerline_from_polyline({camera_project(c1, x)}, 512, 512);
    const Centerline2D b = centerline_from_polyline({camera_project(c2, x)}, 512, 512);
    const MatchResult m = match_curves_dp(a, b, c1, c2, nullptr, nullptr);
    REQUIRE(m.matches.size() == 1);
    CHECK((triangulate(c1, c2, m.matches[0].p1, m.matches[0].p2) - x).norm() < 1e-6);
  }
  SUBCASE("no epipolar candidates") {
    Polyline2 far1{Vec2(100, 100), Vec2(100, 140)}, far2{Vec2(300, 400), Vec2(300, 440)};
    CHECK_THROWS_AS(match_curves_dp(centerline_from_polyline(far1, 512, 512), centerline_from_polyline(far2, 512, 512),
                                    c1, c2, nullptr, nullptr),
                    Error);
  }
}

TEST_CASE("B-spline fitting") {
  SUBCASE("basis partitions unity and derivatives match differences") {
    const auto knots = clamped_uniform_knots(9);
    for (double u : {0.0, 0.13, 0.5, 0.77, 1.0}) {
      double s = 0;
      for (double b : bspline_basis(knots, 9, u)) s += b;
      CHECK(s == doctest::Approx(1.0));
    }
    const GuidewireCurve c(helix(9, 10, 20, 0.5));
    const double h = 1e-6;
    for (double u : {0.2, 0.45, 0.8}) {
      const Vec3 fd = (c.eval(u + h) - c.eval(u - h)) / (2 * h);
      CHECK((c.derivative(u) - fd).norm() < 1e-5 * fd.norm());
      const Vec3 fd2 = (c.derivative(u + h) - c.derivative(u - h)) / (2 * h);
      CHECK((c.derivative(u, 2) - fd2).norm() < 1e-4 * std::max(1.0, fd2.norm()));
    }
  }
  SUBCASE("straight segment is exact") {
    Polyline3 pts;
    for (int i = 0; i < 50; ++i) pts.push_back(Vec3(1, 2, 3) + (i / 49.0) * Vec3(30, -10, 5) + 0.003 * i * i * Vec3(30, -10, 5) / 49.0);
    const FitResult r = fit_bspline_ransac(pts);
    for (const Vec3& p : pts) CHECK(r.curve.closest(p).first < 1e-6);
    CHECK(r.max_inlier_distance < 1e-6);
  }
  SUBCASE("circular arc with 8 control points") {
    Polyline3 pts;
    const int n = 60;
    for (int i = 0; i < n; ++i) {
      const double a = 0.5 * kPi * i / (n - 1);
      pts.emplace_back(20 * std::cos(a), 20 * std::sin(a), 0.0);
    }
    FitParams p;
    p.n_ctrl = 8;
    const FitResult r = fit_bspline_ransac(pts, p);
    CHECK(r.curve.control().size() == 8);
    double worst = 0;
    for (const Vec3& q : r.curve.sample(400)) worst = std::max(worst, std::abs(q.head<2>().norm() - 20.0));
    CHECK(worst < 0.05);
  }
  SUBCASE("gross outliers are rejected") {
    const Polyline3 clean = helix(100, 15, 30, 0.6);
    Polyline3 pts = clean;
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    std::vector<int> bad;
    for (int i = 2; i < 100; i += 5) {
      Vec3 d(U(rng), U(rng), U(rng));
      pts[i] += (4.0 + 4.0 * std::abs(U(rng))) * d.normalized();
      bad.push_back(i);
    }
    const FitResult r = fit_bspline_ransac(pts);
    for (int i : bad) CHECK(r.inlier[i] == 0);
    int inl = 0;
    for (auto v : r.inlier) inl += v;
    CHECK(inl == 80);

    Polyline3 only;
    for (int i = 0; i < 100; ++i)
      if (std::find(bad.begin(), bad.end(), i) == bad.end()) only.push_back(clean[i]);
    const FitResult ref = fit_bspline_ransac(only);
    double worst = 0;
    for (double u = 0; u <= 1.0; u += 0.01) worst = std::max(worst, (r.curve.eval(u) - ref.curve.eval(u)).norm());
    CHECK(worst < 0.1);

    const FitResult again = fit_bspline_ransac(pts);
    for (std::size_t i = 0; i < r.curve.control().size(); ++i)
      CHECK(r.curve.control()[i] == again.curve.control()[i]);
  }
  SUBCASE("too few points") {
    CHECK_THROWS_AS(fit_bspline_ransac(helix(7)), Error);
  }
}

TEST_CASE("noise-free round trip through projection and matching") {
  const CameraModel c1 = carm_camera(-45, 0), c2 = carm_camera(45, 0);
  Polyline3 gen;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const double s = -1.0 + 2.0 * i / (n - 1);
    gen.emplace_back(8 * (1 - s * s) - 4, 3.2 * std::sin(kPi * s), 24 * s);
  }
  const Centerline2D l1 = centerline_from_polyline(project_all(c1, gen), 512, 512);
  const Centerline2D l2 = centerline_from_polyline(project_all(c2, gen), 512, 512);
  const Reconstruction rec = reconstruct_from_centerlines(l1, l2, c1, c2, nullptr, nullptr);
  CHECK_FALSE(rec.diag.degraded);
  double worst = 0;
  for (const Vec3& g : gen) worst = std::max(worst, rec.curve.closest(g).first);
  for (const Vec3& q : rec.curve.sample(300)) worst = std::max(worst, dist_to_polyline(q, gen));
  CHECK(worst < 0.1);
}

TEST_CASE("narrow baseline is flagged") {
  const CameraModel c1 = carm_camera(-2.5, 0), c2 = carm_camera(2.5, 0);
  Polyline3 gen;
  for (int i = 0; i < 100; ++i) {
    const double s = -1.0 + 2.0 * i / 99;
    gen.emplace_back(8 * (1 - s * s) - 4, 3 * std::sin(kPi * s), 24 * s);
  }
  const Reconstruction rec =
      reconstruct_from_centerlines(centerline_from_polyline(project_all(c1, gen), 512, 512),
                                   centerline_from_polyline(project_all(c2, gen), 512, 512), c1, c2, nullptr, nullptr);
  CHECK(rec.diag.degraded);
  CHECK(rec.diag.ray_angle_deg == doctest::Approx(5.0).epsilon(0.1));
  CHECK_FALSE(rec.diag.warnings.empty());
}

TEST_CASE("reconstruction from rendered tube") {
  volume::PhantomSpec spec;
  spec.dims = {128, 128, 128};
  spec.spacing_mm = Vec3::Constant(0.5);
  for (int i = 0; i < 9; ++i) {
    const double s = -1.0 + 2.0 * i / 8;
    spec.centerline_knots.emplace_back(8 * (1 - s * s) - 4, 3.2 * std::sin(kPi * s), 24 * s);
  }
  spec.radius_profile = {{0.0, 1.5}, {1.0, 1.5}};
  const auto ph = volume::generate_vessel_phantom(spec);
  geometry::CArmPose a, b;
  a.alpha = deg2rad(-45);
  b.alpha = deg2rad(45);
  const Image2D i1 = inverted(drr::render_drr(ph.volume, a)), i2 = inverted(drr::render_drr(ph.volume, b));
  const Reconstruction rec = reconstruct_guidewire(i1, i2, camera_from_carm(a), camera_from_carm(b));
  double sum = 0;
  const Polyline3 s = rec.curve.sample(200);
  for (const Vec3& q : s) sum += dist_to_polyline(q, ph.centerline);
  MESSAGE("mean distance to centerline " << sum / s.size() << " mm, points " << rec.points.size());
  CHECK(sum / s.size() < 0.5);
  double truth = 0;
  for (std::size_t i = 1; i < ph.centerline.size(); ++i) truth += (ph.centerline[i] - ph.centerline[i - 1]).norm();
  CHECK(std::abs(rec.curve.length() - truth) < 0.05 * truth);

  CHECK_THROWS_AS(reconstruct_guidewire(Image2D(64, 64, 1.0), Image2D(64, 64, 1.0), camera_from_carm(a),
                                        camera_from_carm(b)),
                  Error);
}
