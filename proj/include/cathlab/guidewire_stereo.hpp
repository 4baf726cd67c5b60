#pragma once

#include "cathlab/carm_geometry.hpp"
#include "cathlab/image.hpp"
#include "cathlab/image_enhance.hpp"
#include "cathlab/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cathlab::stereo {

// Pinhole camera with radial (k1, k2) and tangential (p1, p2) distortion in
// normalized coordinates. Extrinsics map world to camera: x_c = R x + t.
struct CameraModel {
  Mat3 K = Mat3::Identity();
  std::array<double, 4> D{0.0, 0.0, 0.0, 0.0};
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  void validate() const;
  Vec3 center() const { return -R.transpose() * t; }
  Mat34 projection() const;  // K [R | t], distortion not included
  bool distorted() const { return D != std::array<double, 4>{0.0, 0.0, 0.0, 0.0}; }
};

struct Rig {
  CameraModel left, right;
};

// Throws DegenerateProjection for points on or behind the camera plane.
Vec2 camera_project(const CameraModel& cam, const Vec3& x);
// Removes lens distortion from a pixel (iterative inversion).
Vec2 undistort_pixel(const CameraModel& cam, const Vec2& px);
// The distortion-free camera equivalent to a C-arm pose.
CameraModel camera_from_carm(const geometry::CArmPose& pose);
// x2' F x1 = 0 for undistorted pixels.
Mat3 fundamental_matrix(const CameraModel& c1, const CameraModel& c2);

using enhance::vesselness;

struct BinaryImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> px;

  std::uint8_t at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

BinaryImage threshold(const Image2D& img, double level);
BinaryImage largest_component(const BinaryImage& mask);
// Zhang-Suen thinning to a one-pixel-wide 8-connected skeleton.
BinaryImage thin(const BinaryImage& mask);
// Longest geodesic path through a skeleton, as pixel centers. Throws
// InvalidArgument when it covers less than `dominance` of the skeleton.
Polyline2 longest_path(const BinaryImage& skeleton, double dominance = 0.7);

struct CenterlineParams {
  double min_spacing = 3.0;   // key-point spacing bounds, px
  double max_spacing = 25.0;
  double spacing_gain = 2.0;  // spacing = gain / curvature
  double dense_step = 1.0;    // px between dense samples
};

// Dense curve plus curvature-adaptive key points, in pixel coordinates.
struct Centerline2D {
  Polyline2 dense;
  std::vector<double> arclength;
  Polyline2 tangents;           // unit, per dense sample
  std::vector<double> curvature;
  std::vector<int> keys;        // indices into dense
  int width = 0, height = 0;

  double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
  Vec2 point_at(double s) const;
  std::size_t size() const { return keys.size(); }
};

// Resamples an ordered polyline and places key points.
Centerline2D centerline_from_polyline(const Polyline2& pts, int width, int height, const CenterlineParams& p = {});

struct ExtractionParams {
  CenterlineParams centerline;
  double end_level = 0.5;     // extend ends while intensity exceeds this fraction of the ridge contrast
  double smooth_per_ctrl = 6; // path pixels per smoothing control point
};

// Mask -> largest component -> skeleton -> longest path -> tangent
// extension -> B-spline smoothing -> key points. `intensity` (bright
// vessel) guides the end extension when given.
Centerline2D extract_centerline(const BinaryImage& mask, const Image2D* intensity = nullptr,
                                const ExtractionParams& p = {});

// ---- matching ----

struct MatchParams {
  double alpha = 0.5;        // weight of NCC against structural similarity
  double lambda = 1.0;       // continuity weight
  double band_px = 2.0;      // epipolar band half width
  int window = 11;           // NCC patch size
  double kappa0 = 0.05;      // curvature scale of the structural term, 1/px
  // Continuity term: (delta disparity / (scale + slope * key separation))^2.
  double disparity_scale = 5.0;  // px
  double disparity_slope = 0.5;
  double skip_cost = 3.0;    // cost of leaving a key point unmatched; above the largest 1 - C
};

double ncc(const Image2D& a, const Vec2& pa, const Image2D& b, const Vec2& pb, int window);
// cos(tangent angle difference) * exp(-|curvature difference| / kappa0).
double structural_similarity(const Vec2& t1, double k1, const Vec2& t2, double k2, double kappa0);
// alpha NCC + (1 - alpha) S_struct; falls back to S_struct alone on flat patches.
double match_cost(const Image2D& img1, const Vec2& p1, const Vec2& t1, double k1, const Image2D& img2, const Vec2& p2,
                  const Vec2& t2, double k2, const MatchParams& p);

struct Match {
  int key = 0;       // index into c1.keys
  double s1 = 0.0;   // arc length on c1
  double s2 = 0.0;   // arc length on c2 in the matched orientation
  Vec2 p1, p2;       // distortion-free pixels
  double similarity = 0.0;
};

struct MatchResult {
  std::vector<Match> matches;
  bool reversed = false;  // c2 was traversed end to start
  double energy = 0.0;
};

// DP over key points of c1 against epipolar crossings of c2. Images may be
// null, in which case only the structural term is used.
MatchResult match_curves_dp(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                            const CameraModel& cam2, const Image2D* img1, const Image2D* img2,
                            const MatchParams& p = {});

struct Correspondence {
  Vec2 p1, p2;
};
// Dense correspondences along c1 between the matched anchors.
std::vector<Correspondence> densify(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                                    const CameraModel& cam2, const MatchResult& m, double band_px = 2.0);

// Linear (DLT) triangulation from distortion-free pixels.
Vec3 triangulate(const CameraModel& c1, const CameraModel& c2, const Vec2& p1, const Vec2& p2);
// Angle between the two viewing rays at x, degrees.
double ray_angle_deg(const CameraModel& c1, const CameraModel& c2, const Vec3& x);

// ---- B-spline ----

class GuidewireCurve {
 public:
  GuidewireCurve() = default;
  // Clamped uniform cubic with the given control points.
  explicit GuidewireCurve(Polyline3 control);
  GuidewireCurve(Polyline3 control, std::vector<double> knots);

  const Polyline3& control() const { return ctrl_; }
  const std::vector<double>& knots() const { return knots_; }
  Vec3 eval(double u) const;
  Vec3 derivative(double u, int order = 1) const;
  Polyline3 sample(int n) const;
  // Distance from x to the curve and the parameter of the closest point.
  std::pair<double, double> closest(const Vec3& x) const;
  double length(int samples = 2000) const;

 private:
  Polyline3 ctrl_;
  std::vector<double> knots_;
};

std::vector<double> clamped_uniform_knots(int n_ctrl);
// Cubic basis values N_{i,3}(u) for all control points.
std::vector<double> bspline_basis(const std::vector<double>& knots, int n_ctrl, double u);

struct FitParams {
  int n_ctrl = 0;               // 0: max(8, points / 10)
  double smoothness = 1e-4;     // second-difference penalty weight (dimensionless)
  int ransac_iterations = 100;
  double inlier_floor_mm = 0.5; // minimum rejection threshold
  double sigma_k = 3.0;         // reject beyond sigma_k * robust sigma
  unsigned seed = 7;
};

struct FitResult {
  GuidewireCurve curve;
  std::vector<std::uint8_t> inlier;
  double max_inlier_distance = 0.0;
  double rms = 0.0;
};

// Least squares with chord-length parameters over ordered points.
GuidewireCurve fit_bspline(const Polyline3& points, int n_ctrl, double smoothness);
FitResult fit_bspline_ransac(const Polyline3& points, const FitParams& p = {});

// ---- pipeline ----

struct StereoParams {
  bool invert = true;               // inputs show the wire dark on bright
  std::vector<double> sigmas{1.0, 2.0, 3.0};
  double frangi_beta = 0.5;
  double frangi_c = 0.0;            // 0: half the maximum Hessian norm
  ExtractionParams extraction;
  MatchParams matching;
  FitParams fit;
  double degraded_angle_deg = 15.0;
};

struct StereoDiagnostics {
  std::size_t mask_pixels1 = 0, mask_pixels2 = 0;
  std::size_t keys1 = 0, keys2 = 0;
  std::size_t matches = 0, dense_points = 0, inliers = 0;
  double ray_angle_deg = 0.0;
  bool degraded = false;
  double max_inlier_distance = 0.0;
  std::vector<std::string> warnings;
};

struct Reconstruction {
  GuidewireCurve curve;
  Polyline3 points;
  Centerline2D c1, c2;
  StereoDiagnostics diag;
};

Reconstruction reconstruct_guidewire(const Image2D& img1, const Image2D& img2, const CameraModel& cam1,
                                     const CameraModel& cam2, const StereoParams& p = {});
// Same from already extracted centerlines (no images: structural matching only).
Reconstruction reconstruct_from_centerlines(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                                            const CameraModel& cam2, const Image2D* img1, const Image2D* img2,
                                            const StereoParams& p = {});

// Pixels within `radius` of a polyline.
BinaryImage rasterize(const Polyline2& pts, int width, int height, double radius);

}  // namespace cathlab::stereo
