#pragma once

// C-arm angular model and projection geometry.
//
// World frame: patient LPS (x toward patient left, y posterior, z superior),
// origin at the isocenter. The view direction v points from the source
// through the isocenter to the detector. In the neutral pose (alpha = beta
// = 0) the detector is anterior, so v = (0, -1, 0). Positive alpha is LAO
// (detector swings toward +x), positive beta is CRAN (detector tilts toward
// +z), and v_z = sin(beta).

#include "cathlab/types.hpp"

#include <utility>

namespace cathlab::geometry {

struct CArmPose {
  double alpha = 0.0;   // primary angle, radians (+LAO / -RAO)
  double beta = 0.0;    // secondary angle, radians (+CRAN / -CAUD)
  double sid_mm = 1200.0;
  double spd_mm = 800.0;
  double fd_mm = 400.0;  // detector diagonal
  int n_u = 512;
  int n_v = 512;
  Vec3 table_mm = Vec3::Zero();

  // Throws ErrorCode::InvalidArgument naming the first violated invariant.
  void validate() const;
  bool valid() const noexcept;

  // Detector pixel pitch. The detector is FD on the diagonal, so a square
  // panel has side FD/sqrt(2).
  double pitch_u() const;
  double pitch_v() const;
};

// Returns the neutral view direction (0, -1, 0).
Vec3 neutral_view();

Mat3 rotation_primary(double alpha);
Mat3 skew(const Vec3& u);
// Rodrigues rotation by beta about u = R_alpha * (-1, 0, 0).
Mat3 rotation_secondary(double beta, double alpha);

// v(alpha, beta) = R_beta R_alpha v0 with v0 the neutral view direction.
Vec3 direction_from_angles(double alpha, double beta);

// Inverse of direction_from_angles; alpha in (-pi, pi]. Throws
// DegeneratePose when |v_z| == 1 (azimuth undefined).
std::pair<double, double> angles_from_direction(const Vec3& v);

// Orthonormal detector frame for a pose: columns (e_u, e_v, view).
// e_u is the column direction and e_v the row direction of the image.
Mat3 detector_frame(double alpha, double beta);

class ProjectionMatrix {
 public:
  ProjectionMatrix() = default;
  explicit ProjectionMatrix(const Mat34& p);

  const Mat34& matrix() const { return p_; }
  ProjectionMatrix scaled(double s) const { return ProjectionMatrix(p_ * s); }

 private:
  Mat34 p_ = Mat34::Zero();
};

// P = K [R | -R t + (0, 0, SPD)] where R = detector_frame^T and
// K = [[f_u, 0, n_u/2], [0, f_v, n_v/2], [0, 0, 1]], f = SID / pitch.
// The isocenter with zero table offset maps to (n_u/2, n_v/2).
ProjectionMatrix projection_matrix(const CArmPose& pose);

// Dehomogenized P * (x, 1). Throws DegenerateProjection when the point lies
// on the source plane.
Vec2 project_point(const ProjectionMatrix& pm, const Vec3& x);

// Source position and detector geometry in world coordinates.
struct DetectorGeometry {
  Vec3 source;
  Vec3 center;  // detector center
  Vec3 e_u;
  Vec3 e_v;
  Vec3 view;
  double pitch_u;
  double pitch_v;
  int n_u;
  int n_v;

  // World position of continuous detector coordinate (u, v); pixel index i
  // covers [i, i+1) so its center is u = i + 0.5.
  Vec3 point(double u, double v) const {
    return center + (u - 0.5 * n_u) * pitch_u * e_u + (v - 0.5 * n_v) * pitch_v * e_v;
  }
};

DetectorGeometry detector_geometry(const CArmPose& pose);

}  // namespace cathlab::geometry
