#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"

#include <algorithm>
#include <cstdio>

namespace cathlab::stereo {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

Reconstruction reconstruct_from_centerlines(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                                            const CameraModel& cam2, const Image2D* img1, const Image2D* img2,
                                            const StereoParams& p) {
  Reconstruction rec;
  rec.c1 = c1;
  rec.c2 = c2;
  rec.diag.keys1 = c1.size();
  rec.diag.keys2 = c2.size();

  const MatchResult m = match_curves_dp(c1, c2, cam1, cam2, img1, img2, p.matching);
  rec.diag.matches = m.matches.size();
  const auto corr = densify(c1, c2, cam1, cam2, m, p.matching.band_px);
  rec.diag.dense_points = corr.size();
  for (const auto& c : corr) rec.points.push_back(triangulate(cam1, cam2, c.p1, c.p2));

  std::vector<double> angles;
  for (const Vec3& x : rec.points) angles.push_back(ray_angle_deg(cam1, cam2, x));
  rec.diag.ray_angle_deg = median(angles);
  if (rec.diag.ray_angle_deg < p.degraded_angle_deg) {
    rec.diag.degraded = true;
    char buf[160];
    std::snprintf(buf, sizeof buf, "triangulation is poorly conditioned: rays meet at %.1f deg (< %.1f deg)",
                  rec.diag.ray_angle_deg, p.degraded_angle_deg);
    rec.diag.warnings.emplace_back(buf);
  }

  const FitResult fit = fit_bspline_ransac(rec.points, p.fit);
  rec.curve = fit.curve;
  rec.diag.inliers = static_cast<std::size_t>(std::count(fit.inlier.begin(), fit.inlier.end(), 1));
  rec.diag.max_inlier_distance = fit.max_inlier_distance;
  return rec;
}

Reconstruction reconstruct_guidewire(const Image2D& img1, const Image2D& img2, const CameraModel& cam1,
                                     const CameraModel& cam2, const StereoParams& p) {
  if (img1.empty() || img2.empty()) fail(ErrorCode::InvalidArgument, "reconstruct_guidewire: empty image");
  auto prepare = [&](const Image2D& img, BinaryImage& mask) {
    Image2D work = p.invert ? inverted(img) : img;
    const Image2D v = enhance::vesselness_multiscale(work, p.sigmas, p.frangi_beta, p.frangi_c);
    if (v.max() <= 0.0) fail(ErrorCode::InsufficientData, "reconstruct_guidewire: no tubular structure found");
    mask = threshold(v, enhance::otsu_threshold(v));
    return work;
  };
  BinaryImage m1, m2;
  const Image2D w1 = prepare(img1, m1), w2 = prepare(img2, m2);
  const Centerline2D c1 = extract_centerline(m1, &w1, p.extraction);
  const Centerline2D c2 = extract_centerline(m2, &w2, p.extraction);
  Reconstruction rec = reconstruct_from_centerlines(c1, c2, cam1, cam2, &w1, &w2, p);
  rec.diag.mask_pixels1 = m1.count();
  rec.diag.mask_pixels2 = m2.count();
  return rec;
}

}  // namespace cathlab::stereo
