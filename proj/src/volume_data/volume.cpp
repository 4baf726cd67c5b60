#include "cathlab/error.hpp"
#include "cathlab/volume_data.hpp"

#include <cmath>
#include <string>

namespace cathlab::volume {

namespace {

std::size_t voxel_count(const std::array<int, 3>& dims) {
  require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, ErrorCode::InvalidArgument,
          "volume dims must be >= 1");
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
}

}  // namespace

AttenuationVolume::AttenuationVolume(std::array<int, 3> dims, Vec3 spacing_mm, Vec3 origin_mm, float fill)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm), data_(voxel_count(dims), fill) {
  require((spacing_.array() > 0.0).all(), ErrorCode::InvalidArgument, "volume spacing must be > 0");
}

AttenuationVolume::AttenuationVolume(std::array<int, 3> dims, Vec3 spacing_mm, Vec3 origin_mm,
                                     std::vector<float> data)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm), data_(std::move(data)) {
  require((spacing_.array() > 0.0).all(), ErrorCode::InvalidArgument, "volume spacing must be > 0");
  require(data_.size() == voxel_count(dims_), ErrorCode::SizeMismatch,
          "volume data length " + std::to_string(data_.size()) + " does not match dims");
}

AttenuationVolume AttenuationVolume::centered(std::array<int, 3> dims, Vec3 spacing_mm, float fill) {
  const Vec3 n(dims[0], dims[1], dims[2]);
  const Vec3 origin = -0.5 * (n - Vec3::Ones()).cwiseProduct(spacing_mm);
  return AttenuationVolume(dims, spacing_mm, origin, fill);
}

Vec3 AttenuationVolume::voxel_center(int i, int j, int k) const {
  return origin_ + Vec3(i, j, k).cwiseProduct(spacing_);
}

Vec3 AttenuationVolume::lower_corner() const { return origin_ - 0.5 * spacing_; }

Vec3 AttenuationVolume::upper_corner() const {
  return origin_ + (Vec3(dims_[0], dims_[1], dims_[2]) - Vec3::Constant(0.5)).cwiseProduct(spacing_);
}

void AttenuationVolume::validate() const {
  require(data_.size() == voxel_count(dims_), ErrorCode::SizeMismatch, "volume data length mismatch");
  require((spacing_.array() > 0.0).all(), ErrorCode::InvalidArgument, "volume spacing must be > 0");
  for (float v : data_)
    require(std::isfinite(v) && v >= 0.0f, ErrorCode::InvalidArgument,
            "attenuation values must be finite and >= 0");
}

bool AttenuationVolume::same_grid(const AttenuationVolume& other) const {
  return dims_ == other.dims_ && spacing_ == other.spacing_ && origin_ == other.origin_;
}

}  // namespace cathlab::volume
