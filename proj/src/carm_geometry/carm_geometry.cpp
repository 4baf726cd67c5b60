#include "cathlab/carm_geometry.hpp"

#include "cathlab/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>

namespace cathlab::geometry {

void CArmPose::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, "CArmPose: " + what); };
  if (!std::isfinite(alpha) || !std::isfinite(beta)) bad("angles must be finite");
  if (!(std::abs(beta) < kPi / 2)) bad("|beta| must be < 90 degrees");
  if (!(spd_mm > 0.0)) bad("spd_mm must be > 0");
  if (!(sid_mm > spd_mm)) bad("sid_mm must exceed spd_mm");
  if (!(fd_mm > 0.0)) bad("fd_mm must be > 0");
  if (n_u < 2 || n_v < 2) bad("detector must be at least 2x2 pixels");
  if (!table_mm.allFinite()) bad("table translation must be finite");
}

bool CArmPose::valid() const noexcept {
  try {
    validate();
    return true;
  } catch (const Error&) {
    return false;
  }
}

double CArmPose::pitch_u() const { return fd_mm / (std::sqrt(2.0) * n_u); }
double CArmPose::pitch_v() const { return fd_mm / (std::sqrt(2.0) * n_v); }

Vec3 neutral_view() { return Vec3(0.0, -1.0, 0.0); }

Mat3 rotation_primary(double alpha) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  Mat3 r;
  r << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

Mat3 skew(const Vec3& u) {
  Mat3 k;
  k << 0.0, -u.z(), u.y(),
       u.z(), 0.0, -u.x(),
       -u.y(), u.x(), 0.0;
  return k;
}

Mat3 rotation_secondary(double beta, double alpha) {
  const Vec3 u = rotation_primary(alpha) * Vec3(-1.0, 0.0, 0.0);
  const double c = std::cos(beta);
  return c * Mat3::Identity() + (1.0 - c) * (u * u.transpose()) + std::sin(beta) * skew(u);
}

Vec3 direction_from_angles(double alpha, double beta) {
  return rotation_secondary(beta, alpha) * rotation_primary(alpha) * neutral_view();
}

std::pair<double, double> angles_from_direction(const Vec3& v) {
  require(v.allFinite(), ErrorCode::InvalidArgument, "direction must be finite");
  const double n = v.norm();
  require(n > 0.0, ErrorCode::InvalidArgument, "direction must be non-zero");
  const Vec3 d = v / n;
  if (std::abs(d.z()) >= 1.0 || (d.x() == 0.0 && d.y() == 0.0))
    fail(ErrorCode::DegeneratePose, "view direction is vertical; primary angle undefined");
  // tan(alpha) = -v_x / v_y, resolved over the full circle. On v_y = 0 this
  // gives +pi/2 for v_x > 0 and -pi/2 for v_x < 0.
  double alpha = std::atan2(d.x(), -d.y());
  if (alpha <= -kPi) alpha += 2.0 * kPi;
  const double beta = std::asin(d.z());
  return {alpha, beta};
}

Mat3 detector_frame(double alpha, double beta) {
  const Mat3 m = rotation_secondary(beta, alpha) * rotation_primary(alpha);
  Mat3 f;
  f.col(0) = m * Vec3(-1.0, 0.0, 0.0);
  f.col(1) = m * Vec3(0.0, 0.0, -1.0);
  f.col(2) = m * neutral_view();
  return f;
}

ProjectionMatrix::ProjectionMatrix(const Mat34& p) : p_(p) {}

ProjectionMatrix projection_matrix(const CArmPose& pose) {
  pose.validate();
  Mat3 k = Mat3::Identity();
  k(0, 0) = pose.sid_mm / pose.pitch_u();
  k(1, 1) = pose.sid_mm / pose.pitch_v();
  k(0, 2) = 0.5 * pose.n_u;
  k(1, 2) = 0.5 * pose.n_v;
  const Mat3 r = detector_frame(pose.alpha, pose.beta).transpose();
  Mat34 ext;
  ext.leftCols<3>() = r;
  ext.col(3) = -r * pose.table_mm + Vec3(0.0, 0.0, pose.spd_mm);
  return ProjectionMatrix(k * ext);
}

Vec2 project_point(const ProjectionMatrix& pm, const Vec3& x) {
  const Vec3 h = pm.matrix() * x.homogeneous();
  const double scale = pm.matrix().block<1, 3>(2, 0).norm();
  if (!(std::abs(h.z()) > 1e-12 * std::max(1.0, scale)))
    fail(ErrorCode::DegenerateProjection, "point lies on the source plane");
  return h.head<2>() / h.z();
}

DetectorGeometry detector_geometry(const CArmPose& pose) {
  pose.validate();
  const Mat3 f = detector_frame(pose.alpha, pose.beta);
  DetectorGeometry g;
  g.e_u = f.col(0);
  g.e_v = f.col(1);
  g.view = f.col(2);
  g.source = pose.table_mm - pose.spd_mm * g.view;
  g.center = g.source + pose.sid_mm * g.view;
  g.pitch_u = pose.pitch_u();
  g.pitch_v = pose.pitch_v();
  g.n_u = pose.n_u;
  g.n_v = pose.n_v;
  return g;
}

}  // namespace cathlab::geometry
