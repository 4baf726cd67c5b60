#include "cathlab/drr_renderer.hpp"

#include "cathlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cathlab::drr {

float EmptySpaceOctree::node_max(int level, int i, int j, int k) const {
  const Level& l = levels_[level];
  return l.max[static_cast<std::size_t>(i) + static_cast<std::size_t>(l.dims[0]) * (j + static_cast<std::size_t>(l.dims[1]) * k)];
}

EmptySpaceOctree build_octree(const AttenuationVolume& vol, float empty_threshold) {
  require(empty_threshold >= 0.0f, ErrorCode::InvalidArgument, "octree threshold must be >= 0");
  require(vol.size() > 0, ErrorCode::InvalidArgument, "cannot build an octree over an empty volume");
  EmptySpaceOctree t;
  t.threshold_ = empty_threshold;
  t.vol_dims_ = vol.dims();
  const auto& n = vol.dims();

  EmptySpaceOctree::Level leaf;
  for (int a = 0; a < 3; ++a) leaf.dims[a] = (n[a] + 7) >> EmptySpaceOctree::kLeafShift;
  leaf.max.assign(static_cast<std::size_t>(leaf.dims[0]) * leaf.dims[1] * leaf.dims[2], 0.0f);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        float& m = leaf.max[static_cast<std::size_t>(i >> 3) +
                            static_cast<std::size_t>(leaf.dims[0]) * ((j >> 3) + static_cast<std::size_t>(leaf.dims[1]) * (k >> 3))];
        m = std::max(m, vol.at(i, j, k));
      }
  t.levels_.push_back(std::move(leaf));

  while (t.levels_.back().dims != std::array<int, 3>{1, 1, 1}) {
    const auto& c = t.levels_.back();
    EmptySpaceOctree::Level up;
    for (int a = 0; a < 3; ++a) up.dims[a] = (c.dims[a] + 1) / 2;
    up.max.assign(static_cast<std::size_t>(up.dims[0]) * up.dims[1] * up.dims[2], 0.0f);
    for (int k = 0; k < c.dims[2]; ++k)
      for (int j = 0; j < c.dims[1]; ++j)
        for (int i = 0; i < c.dims[0]; ++i) {
          float& m = up.max[static_cast<std::size_t>(i / 2) +
                            static_cast<std::size_t>(up.dims[0]) * (j / 2 + static_cast<std::size_t>(up.dims[1]) * (k / 2))];
          m = std::max(m, c.max[static_cast<std::size_t>(i) + static_cast<std::size_t>(c.dims[0]) * (j + static_cast<std::size_t>(c.dims[1]) * k)]);
        }
    t.levels_.push_back(std::move(up));
  }
  return t;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Walk {
  double g0[3];
  double inv[3];
  int step[3];
  int n[3];

  // Parameter at which the ray leaves voxel i along axis ax.
  double exit_t(int ax, int i) const {
    if (step[ax] == 0) return kInf;
    return (static_cast<double>(step[ax] > 0 ? i + 1 : i) - g0[ax]) * inv[ax];
  }
};

}  // namespace

double cast_ray_integral(const AttenuationVolume& vol, const Vec3& a, const Vec3& b, const EmptySpaceOctree* accel) {
  const Vec3 lower = vol.lower_corner();
  const Vec3& sp = vol.spacing();
  const Vec3 seg = b - a;
  const double length = seg.norm();
  if (length == 0.0 || vol.size() == 0) return 0.0;

  // grid coordinates: voxel i spans [i, i+1)
  Walk w;
  double t_enter = 0.0, t_exit = 1.0;
  for (int ax = 0; ax < 3; ++ax) {
    w.n[ax] = vol.dims()[ax];
    w.g0[ax] = (a[ax] - lower[ax]) / sp[ax];
    const double d = seg[ax] / sp[ax];
    if (d == 0.0) {
      if (w.g0[ax] < 0.0 || w.g0[ax] > w.n[ax]) return 0.0;
      w.inv[ax] = kInf;
      w.step[ax] = 0;
      continue;
    }
    w.inv[ax] = 1.0 / d;
    w.step[ax] = d > 0 ? 1 : -1;
    double t0 = (0.0 - w.g0[ax]) * w.inv[ax];
    double t1 = (static_cast<double>(w.n[ax]) - w.g0[ax]) * w.inv[ax];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (!(t_enter < t_exit)) return 0.0;

  int idx[3];
  double tn[3];
  for (int ax = 0; ax < 3; ++ax) {
    const double g = w.step[ax] == 0 ? w.g0[ax] : w.g0[ax] + t_enter / w.inv[ax];
    idx[ax] = std::clamp(static_cast<int>(std::floor(g)), 0, w.n[ax] - 1);
    tn[ax] = w.exit_t(ax, idx[ax]);
  }

  const float* data = vol.data().data();
  const std::size_t sy = static_cast<std::size_t>(w.n[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(w.n[1]);
  const int top = accel ? accel->levels() - 1 : -1;
  double t_cur = t_enter;
  double sum = 0.0;

  for (;;) {
    if (accel && accel->skippable(0, idx[0] >> 3, idx[1] >> 3, idx[2] >> 3)) {
      int level = 0;
      while (level < top) {
        const int s = EmptySpaceOctree::kLeafShift + level + 1;
        if (!accel->skippable(level + 1, idx[0] >> s, idx[1] >> s, idx[2] >> s)) break;
        ++level;
      }
      const int s = EmptySpaceOctree::kLeafShift + level;
      int lo[3], hi[3];
      double tb[3];
      for (int ax = 0; ax < 3; ++ax) {
        lo[ax] = (idx[ax] >> s) << s;
        hi[ax] = std::min(lo[ax] + (1 << s), w.n[ax]);
        tb[ax] = w.step[ax] > 0 ? w.exit_t(ax, hi[ax] - 1) : w.exit_t(ax, lo[ax]);
      }
      int ax = 0;
      if (tb[1] < tb[ax]) ax = 1;
      if (tb[2] < tb[ax]) ax = 2;
      const double ta = tb[ax];
      if (ta >= t_exit) break;
      // replay the crossings inside the node so the walk state matches a voxel-by-voxel traversal
      for (int o = 0; o < 3; ++o) {
        if (o == ax) continue;
        while (tn[o] < ta) {
          idx[o] += w.step[o];
          tn[o] = w.exit_t(o, idx[o]);
        }
      }
      idx[ax] = w.step[ax] > 0 ? hi[ax] : lo[ax] - 1;
      if (idx[ax] < 0 || idx[ax] >= w.n[ax]) break;
      tn[ax] = w.exit_t(ax, idx[ax]);
      t_cur = std::max(t_cur, ta);
      continue;
    }

    int ax = 0;
    if (tn[1] < tn[ax]) ax = 1;
    if (tn[2] < tn[ax]) ax = 2;
    const double te = std::min(tn[ax], t_exit);
    if (te > t_cur) {
      sum += static_cast<double>(data[idx[0] + sy * idx[1] + sz * idx[2]]) * (te - t_cur);
      t_cur = te;
    }
    if (tn[ax] >= t_exit) break;
    idx[ax] += w.step[ax];
    if (idx[ax] < 0 || idx[ax] >= w.n[ax]) break;
    tn[ax] = w.exit_t(ax, idx[ax]);
  }
  return sum * length;
}

Image2D render_drr(const AttenuationVolume& vol, const geometry::CArmPose& pose, const EmptySpaceOctree* accel) {
  pose.validate();
  if (accel)
    require(accel->volume_dims() == vol.dims(), ErrorCode::SizeMismatch, "octree was built for a different volume");
  const geometry::DetectorGeometry g = geometry::detector_geometry(pose);
  Image2D img(pose.n_u, pose.n_v);
  constexpr int kTile = 32;
  const int tiles_u = (pose.n_u + kTile - 1) / kTile;
  const int tiles_v = (pose.n_v + kTile - 1) / kTile;
  const int n_tiles = tiles_u * tiles_v;

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_tiles; ++t) {
    const int u0 = (t % tiles_u) * kTile, v0 = (t / tiles_u) * kTile;
    const int u1 = std::min(u0 + kTile, pose.n_u), v1 = std::min(v0 + kTile, pose.n_v);
    for (int y = v0; y < v1; ++y)
      for (int x = u0; x < u1; ++x)
        img.at(x, y) = cast_ray_integral(vol, g.source, g.point(x + 0.5, y + 0.5), accel);
  }
  return img;
}

}  // namespace cathlab::drr
