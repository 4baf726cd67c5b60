#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace cathlab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

using Polyline2 = std::vector<Vec2, Eigen::aligned_allocator<Vec2>>;
using Polyline3 = std::vector<Vec3, Eigen::aligned_allocator<Vec3>>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace cathlab
