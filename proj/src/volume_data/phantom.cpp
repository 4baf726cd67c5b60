#include "cathlab/error.hpp"
#include "cathlab/volume_data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cathlab::volume {

CenterlineCurve::CenterlineCurve(Polyline3 knots) : knots_(std::move(knots)) {}

Vec3 CenterlineCurve::eval(double s) const {
  require(knots_.size() >= 2, ErrorCode::Bounds, "centerline needs at least two knots");
  const int nseg = static_cast<int>(segments());
  s = std::clamp(s, 0.0, static_cast<double>(nseg));
  int i = std::min(static_cast<int>(std::floor(s)), nseg - 1);
  const double t = s - i;
  const int n = static_cast<int>(knots_.size());
  auto knot = [&](int idx) -> Vec3 {
    if (idx < 0) return 2.0 * knots_[0] - knots_[1];
    if (idx >= n) return 2.0 * knots_[n - 1] - knots_[n - 2];
    return knots_[idx];
  };
  const Vec3 p0 = knot(i - 1), p1 = knot(i), p2 = knot(i + 1), p3 = knot(i + 2);
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

Polyline3 CenterlineCurve::sample(double max_step) const {
  require(max_step > 0.0, ErrorCode::InvalidArgument, "sample step must be > 0");
  require(knots_.size() >= 2, ErrorCode::Bounds, "centerline needs at least two knots");
  Polyline3 out;
  out.push_back(eval(0.0));
  for (std::size_t seg = 0; seg < segments(); ++seg) {
    // estimate the segment length, then refine until every step fits
    double approx = 0.0;
    Vec3 prev = eval(static_cast<double>(seg));
    for (int k = 1; k <= 16; ++k) {
      const Vec3 p = eval(seg + k / 16.0);
      approx += (p - prev).norm();
      prev = p;
    }
    int n = std::max(1, static_cast<int>(std::ceil(1.05 * approx / max_step)));
    Polyline3 pts;
    for (;;) {
      pts.clear();
      bool ok = true;
      Vec3 last = out.back();
      for (int k = 1; k <= n; ++k) {
        const Vec3 p = eval(seg + static_cast<double>(k) / n);
        if ((p - last).norm() > max_step) ok = false;
        pts.push_back(p);
        last = p;
      }
      if (ok) break;
      n *= 2;
    }
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

double polyline_length(const Polyline3& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

void PhantomSpec::validate() const {
  require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, ErrorCode::InvalidArgument, "phantom dims must be >= 1");
  require((spacing_mm.array() > 0.0).all(), ErrorCode::InvalidArgument, "phantom spacing must be > 0");
  require(centerline_knots.size() >= 2, ErrorCode::Bounds, "phantom centerline needs at least two knots");
  require(!radius_profile.empty(), ErrorCode::InvalidArgument, "radius profile is empty");
  for (const auto& [s, r] : radius_profile)
    require(r > 0.0 && std::isfinite(r), ErrorCode::InvalidArgument, "phantom radii must be > 0");
  require(std::isfinite(background) && background >= 0.0f && std::isfinite(vessel) && vessel >= 0.0f,
          ErrorCode::InvalidArgument, "phantom attenuations must be finite and >= 0");
}

double PhantomSpec::radius_at(double s_frac) const {
  if (radius_profile.size() == 1 || s_frac <= radius_profile.front().first) return radius_profile.front().second;
  if (s_frac >= radius_profile.back().first) return radius_profile.back().second;
  for (std::size_t i = 1; i < radius_profile.size(); ++i) {
    const auto& [s1, r1] = radius_profile[i];
    if (s_frac <= s1) {
      const auto& [s0, r0] = radius_profile[i - 1];
      const double w = s1 > s0 ? (s_frac - s0) / (s1 - s0) : 1.0;
      return r0 + w * (r1 - r0);
    }
  }
  return radius_profile.back().second;
}

Phantom generate_vessel_phantom(const PhantomSpec& spec) {
  spec.validate();
  AttenuationVolume vol = spec.has_origin
                              ? AttenuationVolume(spec.dims, spec.spacing_mm, spec.origin_mm, spec.background)
                              : AttenuationVolume::centered(spec.dims, spec.spacing_mm, spec.background);
  const double step = spec.spacing_mm.minCoeff() / 4.0;
  const Polyline3 samples = CenterlineCurve(spec.centerline_knots).sample(step);
  const double length = polyline_length(samples);
  require(length > 0.0, ErrorCode::Bounds, "phantom centerline has zero length");

  const Vec3 lo = vol.lower_corner(), hi = vol.upper_corner();
  for (const Vec3& p : samples)
    require((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(), ErrorCode::Bounds,
            "phantom centerline leaves the volume");

  Phantom out;
  out.centerline = samples;
  out.radii.resize(samples.size());
  {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i > 0) s += (samples[i] - samples[i - 1]).norm();
      out.radii[i] = spec.radius_at(s / length);
    }
  }

  const auto& dims = vol.dims();
  const Vec3& sp = vol.spacing();
  const std::size_t nseg = samples.size() - 1;
  // flat end caps: nothing beyond the planes through the curve's end points
  const Vec3 head = samples.front(), head_dir = (samples[1] - samples[0]).normalized();
  const Vec3 tail = samples.back(), tail_dir = (samples[nseg] - samples[nseg - 1]).normalized();
  for (std::size_t seg = 0; seg < nseg; ++seg) {
    const Vec3& a = samples[seg];
    const Vec3& b = samples[seg + 1];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) continue;
    const double rmax = std::max(out.radii[seg], out.radii[seg + 1]);
    const Vec3 bmin = a.cwiseMin(b) - Vec3::Constant(rmax);
    const Vec3 bmax = a.cwiseMax(b) + Vec3::Constant(rmax);
    int i0[3], i1[3];
    for (int ax = 0; ax < 3; ++ax) {
      i0[ax] = std::max(0, static_cast<int>(std::floor((bmin[ax] - vol.origin()[ax]) / sp[ax])));
      i1[ax] = std::min(dims[ax] - 1, static_cast<int>(std::ceil((bmax[ax] - vol.origin()[ax]) / sp[ax])));
    }
    for (int k = i0[2]; k <= i1[2]; ++k)
      for (int j = i0[1]; j <= i1[1]; ++j)
        for (int i = i0[0]; i <= i1[0]; ++i) {
          float& v = vol.at(i, j, k);
          if (v == spec.vessel) continue;
          const Vec3 p = vol.voxel_center(i, j, k);
          if ((p - head).dot(head_dir) < 0.0 || (p - tail).dot(tail_dir) > 0.0) continue;
          const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
          const double r = out.radii[seg] + t * (out.radii[seg + 1] - out.radii[seg]);
          if ((p - (a + t * ab)).squaredNorm() <= r * r) v = spec.vessel;
        }
  }
  out.volume = std::move(vol);

  // surface stations roughly every half voxel
  Polyline3 stations;
  std::vector<double> station_radii;
  const double station_step = 0.5 * spec.spacing_mm.minCoeff();
  double since = station_step;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i > 0) since += (samples[i] - samples[i - 1]).norm();
    if (since >= station_step || i + 1 == samples.size()) {
      if (i + 1 == samples.size() && !stations.empty() && (samples[i] - stations.back()).norm() < 1e-9) break;
      stations.push_back(samples[i]);
      station_radii.push_back(out.radii[i]);
      since = 0.0;
    }
  }
  out.surface = tube_surface(stations, station_radii);
  return out;
}

PhantomSpec straight_tube_spec(const Vec3& a, const Vec3& b, double radius_mm, std::array<int, 3> dims,
                               Vec3 spacing_mm) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing_mm = spacing_mm;
  spec.centerline_knots = {a, b};
  spec.radius_profile = {{0.0, radius_mm}, {1.0, radius_mm}};
  return spec;
}

PhantomSpec helix_tube_spec(double helix_radius, double pitch, double turns, double tube_radius,
                            std::array<int, 3> dims, Vec3 spacing_mm) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing_mm = spacing_mm;
  const int n = std::max(8, static_cast<int>(std::ceil(turns * 72.0)));
  const double total_angle = 2.0 * kPi * turns;
  const double height = pitch * turns;
  for (int i = 0; i <= n; ++i) {
    const double th = total_angle * i / n;
    spec.centerline_knots.emplace_back(helix_radius * std::cos(th), helix_radius * std::sin(th),
                                       -0.5 * height + pitch * th / (2.0 * kPi));
  }
  spec.radius_profile = {{0.0, tube_radius}, {1.0, tube_radius}};
  return spec;
}

double helix_length(double helix_radius, double pitch, double turns) {
  return turns * std::hypot(2.0 * kPi * helix_radius, pitch);
}

}  // namespace cathlab::volume
