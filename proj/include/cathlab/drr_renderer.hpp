#pragma once

// Ray-cast digitally reconstructed radiographs.
//
// Every pixel is the exact line integral of attenuation along the segment
// from the source to the pixel center on the detector: the sum over
// traversed voxels of rho times intersection length. The traversal is the
// incremental Amanatides-Woo walk; boundary crossings are recomputed from
// the voxel index at each step so that the accelerated walk visits the
// same crossings and produces bitwise identical sums.

#include "cathlab/carm_geometry.hpp"
#include "cathlab/image.hpp"
#include "cathlab/volume_data.hpp"

#include <array>
#include <vector>

namespace cathlab::drr {

using volume::AttenuationVolume;

// Max pyramid over the voxel grid. Level 0 nodes are 8^3 voxel blocks;
// each level up doubles the block edge until a single root remains.
class EmptySpaceOctree {
 public:
  static constexpr int kLeafShift = 3;  // 8 voxels

  EmptySpaceOctree() = default;

  int levels() const { return static_cast<int>(levels_.size()); }
  std::array<int, 3> node_dims(int level) const { return levels_[level].dims; }
  // Edge length in voxels of a node at this level.
  int block(int level) const { return 1 << (kLeafShift + level); }
  float node_max(int level, int i, int j, int k) const;
  bool skippable(int level, int i, int j, int k) const { return node_max(level, i, j, k) <= threshold_; }
  bool root_skippable() const { return skippable(levels() - 1, 0, 0, 0); }
  float threshold() const { return threshold_; }
  const std::array<int, 3>& volume_dims() const { return vol_dims_; }

 private:
  friend EmptySpaceOctree build_octree(const AttenuationVolume&, float);
  struct Level {
    std::array<int, 3> dims;
    std::vector<float> max;
  };
  std::vector<Level> levels_;
  std::array<int, 3> vol_dims_{0, 0, 0};
  float threshold_ = 0.0f;
};

// Nodes whose max <= threshold are skipped. With threshold 0 (the default)
// on non-negative data the skipped voxels are exactly zero.
EmptySpaceOctree build_octree(const AttenuationVolume& vol, float empty_threshold = 0.0f);

// Line integral from a to b; 0 if the segment misses the volume.
double cast_ray_integral(const AttenuationVolume& vol, const Vec3& a, const Vec3& b,
                         const EmptySpaceOctree* accel = nullptr);

// n_u x n_v image, pixel (x, y) integrating toward detector point (x+0.5, y+0.5).
// Parallel over 32x32 tiles.
Image2D render_drr(const AttenuationVolume& vol, const geometry::CArmPose& pose,
                   const EmptySpaceOctree* accel = nullptr);

}  // namespace cathlab::drr
