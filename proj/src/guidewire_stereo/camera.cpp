#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"

#include <algorithm>
#include <cmath>

namespace cathlab::stereo {

void CameraModel::validate() const {
  if (!K.allFinite() || !R.allFinite() || !t.allFinite()) fail(ErrorCode::InvalidArgument, "camera: non-finite entries");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0)
    fail(ErrorCode::InvalidArgument, "camera: K must be upper triangular with K(2,2) = 1");
  if (K(0, 0) <= 0.0 || K(1, 1) <= 0.0) fail(ErrorCode::InvalidArgument, "camera: focal lengths must be positive");
  if ((R.transpose() * R - Mat3::Identity()).norm() > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6)
    fail(ErrorCode::InvalidArgument, "camera: R must be a rotation");
}

Mat34 CameraModel::projection() const {
  Mat34 rt;
  rt.leftCols<3>() = R;
  rt.col(3) = t;
  return K * rt;
}

namespace {

Vec2 distort_normalized(const std::array<double, 4>& d, const Vec2& n) {
  const double x = n.x(), y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d[0] * r2 + d[1] * r2 * r2;
  return {x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x),
          y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y};
}

}  // namespace

Vec2 camera_project(const CameraModel& cam, const Vec3& x) {
  const Vec3 c = cam.R * x + cam.t;
  if (c.z() <= 0.0) fail(ErrorCode::DegenerateProjection, "camera_project: point is not in front of the camera");
  const Vec2 d = distort_normalized(cam.D, Vec2(c.x() / c.z(), c.y() / c.z()));
  const Vec3 p = cam.K * Vec3(d.x(), d.y(), 1.0);
  return {p.x(), p.y()};
}

Vec2 undistort_pixel(const CameraModel& cam, const Vec2& px) {
  if (!cam.distorted()) return px;
  const Vec3 nd = cam.K.inverse() * Vec3(px.x(), px.y(), 1.0);
  const Vec2 target(nd.x(), nd.y());
  Vec2 n = target;
  // Newton on distort(n) = target with a numeric Jacobian.
  for (int it = 0; it < 50; ++it) {
    const Vec2 r = distort_normalized(cam.D, n) - target;
    if (r.norm() < 1e-15) break;
    Eigen::Matrix2d J;
    const double h = 1e-7;
    for (int k = 0; k < 2; ++k) {
      Vec2 e = n;
      e[k] += h;
      J.col(k) = (distort_normalized(cam.D, e) - distort_normalized(cam.D, n)) / h;
    }
    n -= J.partialPivLu().solve(r);
  }
  const Vec3 p = cam.K * Vec3(n.x(), n.y(), 1.0);
  return {p.x(), p.y()};
}

CameraModel camera_from_carm(const geometry::CArmPose& pose) {
  pose.validate();
  CameraModel cam;
  // Image pixel x covers detector u in [x, x + 1), so centers sit half a
  // pixel before the detector coordinate.
  cam.K << pose.sid_mm / pose.pitch_u(), 0.0, 0.5 * pose.n_u - 0.5, 0.0, pose.sid_mm / pose.pitch_v(),
      0.5 * pose.n_v - 0.5, 0.0, 0.0, 1.0;
  cam.R = geometry::detector_frame(pose.alpha, pose.beta).transpose();
  cam.t = -cam.R * pose.table_mm + Vec3(0.0, 0.0, pose.spd_mm);
  return cam;
}

Mat3 fundamental_matrix(const CameraModel& c1, const CameraModel& c2) {
  const Mat3 r = c2.R * c1.R.transpose();
  const Vec3 t = c2.t - r * c1.t;
  Mat3 tx;
  tx << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  return c2.K.inverse().transpose() * tx * r * c1.K.inverse();
}

Vec3 triangulate(const CameraModel& c1, const CameraModel& c2, const Vec2& p1, const Vec2& p2) {
  const Vec3 o1 = c1.center(), o2 = c2.center();
  const double scale = std::max({1.0, o1.norm(), o2.norm()});
  if ((o1 - o2).norm() <= 1e-9 * scale) fail(ErrorCode::DegeneratePose, "triangulate: camera centers coincide");
  const Vec3 d1 = (c1.R.transpose() * c1.K.inverse() * Vec3(p1.x(), p1.y(), 1.0)).normalized();
  const Vec3 d2 = (c2.R.transpose() * c2.K.inverse() * Vec3(p2.x(), p2.y(), 1.0)).normalized();
  if (d1.cross(d2).norm() < 1e-12) fail(ErrorCode::DegeneratePose, "triangulate: viewing rays are parallel");

  const Mat34 P1 = c1.projection(), P2 = c2.projection();
  // Rows scaled by the projective depth of the current estimate, so the
  // algebraic residual approaches the reprojection error.
  double w1 = 1.0 / P1.row(2).head<3>().norm(), w2 = 1.0 / P2.row(2).head<3>().norm();
  Eigen::Vector4d X;
  for (int it = 0; it < 4; ++it) {
    Eigen::Matrix4d A;
    A.row(0) = w1 * (p1.x() * P1.row(2) - P1.row(0));
    A.row(1) = w1 * (p1.y() * P1.row(2) - P1.row(1));
    A.row(2) = w2 * (p2.x() * P2.row(2) - P2.row(0));
    A.row(3) = w2 * (p2.y() * P2.row(2) - P2.row(1));
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
    X = svd.matrixV().col(3);
    if (std::abs(X[3]) < 1e-14 * X.head<3>().norm())
      fail(ErrorCode::DegeneratePose, "triangulate: solution lies at infinity");
    X /= X[3];
    const double z1 = P1.row(2).dot(X), z2 = P2.row(2).dot(X);
    if (z1 <= 0.0 || z2 <= 0.0) break;
    w1 = 1.0 / z1;
    w2 = 1.0 / z2;
  }
  return X.head<3>();
}

double ray_angle_deg(const CameraModel& c1, const CameraModel& c2, const Vec3& x) {
  const Vec3 a = (x - c1.center()).normalized(), b = (x - c2.center()).normalized();
  return rad2deg(std::acos(std::clamp(a.dot(b), -1.0, 1.0)));
}

}  // namespace cathlab::stereo
