#include "cathlab/consistency_metrics.hpp"
#include "cathlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cathlab::metrics {

namespace {

double path_length(const Polyline3& pts) {
  double l = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) l += (pts[i] - pts[i - 1]).norm();
  return l;
}

double pct(double x) { return std::clamp(x * 100.0, 0.0, 100.0); }

void check_pair(const Polyline3& p, const Polyline3& q) {
  require(!p.empty() && !q.empty(), ErrorCode::InsufficientData, "trajectory is empty");
  require(p.size() == q.size(), ErrorCode::SizeMismatch, "trajectories need equal point counts");
}

}  // namespace

void VesselDescriptor::validate() const {
  require(length > 0.0, ErrorCode::Undefined, "vessel length must be positive");
  require(!diameters.empty(), ErrorCode::InvalidArgument, "vessel needs at least one diameter sample");
  for (double d : diameters) require(d > 0.0, ErrorCode::Undefined, "vessel diameters must be positive");
  require(tortuosity > 0.0, ErrorCode::Undefined, "vessel tortuosity must be positive");
}

VesselDescriptor describe_vessel(const Polyline3& c, std::vector<double> diameters, std::optional<double> bif) {
  require(c.size() >= 2, ErrorCode::InsufficientData, "centerline needs at least 2 points");
  VesselDescriptor d;
  d.length = path_length(c);
  const double chord = (c.back() - c.front()).norm();
  require(chord > 0.0, ErrorCode::Undefined, "closed centerline has no chord");
  d.tortuosity = d.length / chord;
  d.diameters = std::move(diameters);
  d.bifurcation_deg = bif;
  return d;
}

double bifurcation_angle_deg(const Polyline3& a, const Polyline3& b, double distal) {
  require(a.size() >= 2 && b.size() >= 2, ErrorCode::InsufficientData, "branches need at least 2 points");
  require(distal > 0.0, ErrorCode::InvalidArgument, "distal distance must be positive");
  auto point_at = [&](const Polyline3& br) {
    double acc = 0.0;
    for (std::size_t i = 1; i < br.size(); ++i) {
      const double seg = (br[i] - br[i - 1]).norm();
      if (acc + seg >= distal) return Vec3(br[i - 1] + (br[i] - br[i - 1]) * ((distal - acc) / seg));
      acc += seg;
    }
    return br.back();
  };
  const Vec3 da = point_at(a) - a.front(), db = point_at(b) - b.front();
  require(da.norm() > 0.0 && db.norm() > 0.0, ErrorCode::Undefined, "degenerate branch direction");
  const double c = std::clamp(da.normalized().dot(db.normalized()), -1.0, 1.0);
  return rad2deg(std::acos(c));
}

Morphology morphological_consistency(const VesselDescriptor& v, const VesselDescriptor& r) {
  v.validate();
  r.validate();
  require(v.diameters.size() == r.diameters.size(), ErrorCode::SizeMismatch,
          "diameter station counts differ; resample first");
  Morphology m;
  m.c_l = pct(1.0 - std::abs(v.length - r.length) / r.length);
  double dev = 0.0;
  for (std::size_t i = 0; i < r.diameters.size(); ++i)
    dev += std::abs(v.diameters[i] - r.diameters[i]) / r.diameters[i];
  m.c_d = pct(1.0 - dev / static_cast<double>(r.diameters.size()));
  m.c_t = pct(1.0 - std::abs(v.tortuosity - r.tortuosity) / r.tortuosity);
  require(v.bifurcation_deg.has_value() == r.bifurcation_deg.has_value(), ErrorCode::InvalidArgument,
          "bifurcation angle given for only one vessel");
  m.c_theta = v.bifurcation_deg ? pct(1.0 - std::abs(*v.bifurcation_deg - *r.bifurcation_deg) / 180.0) : 100.0;
  m.overall = 0.3 * m.c_l + 0.3 * m.c_d + 0.2 * m.c_t + 0.2 * m.c_theta;
  return m;
}

double dice(const Mask& x, const Mask& y) {
  require(x.size() == y.size(), ErrorCode::SizeMismatch, "masks differ in size");
  std::size_t nx = 0, ny = 0, both = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] != 0;
    ny += y[i] != 0;
    both += x[i] != 0 && y[i] != 0;
  }
  require(nx + ny > 0, ErrorCode::Undefined, "Dice undefined for two empty masks");
  return 2.0 * static_cast<double>(both) / static_cast<double>(nx + ny);
}

Polyline3 lift(const Polyline2& pts) {
  Polyline3 out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.emplace_back(p.x(), p.y(), 0.0);
  return out;
}

Polyline3 resample(const Polyline3& pts, int n) {
  require(!pts.empty(), ErrorCode::InsufficientData, "cannot resample an empty curve");
  require(n >= 1, ErrorCode::InvalidArgument, "resample count must be positive");
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = s.back();
  Polyline3 out;
  out.reserve(static_cast<std::size_t>(n));
  if (n == 1 || total == 0.0) {
    out.assign(static_cast<std::size_t>(n), pts.front());
    return out;
  }
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    const double target = total * i / (n - 1);
    while (k + 2 < pts.size() && s[k + 1] < target) ++k;
    const double seg = s[k + 1] - s[k];
    const double w = seg > 0.0 ? std::clamp((target - s[k]) / seg, 0.0, 1.0) : 0.0;
    out.push_back(i + 1 == n ? pts.back() : Vec3(pts[k] + w * (pts[k + 1] - pts[k])));
  }
  return out;
}

double mean_trajectory_error(const Polyline3& p, const Polyline3& q) {
  check_pair(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]).norm();
  return s / static_cast<double>(p.size());
}

double max_error_pct(const Polyline3& p, const Polyline3& q, double length) {
  check_pair(p, q);
  require(length > 0.0, ErrorCode::InvalidArgument, "guidewire length must be positive");
  double m = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, (p[i] - q[i]).norm());
  return m / length * 100.0;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  for (const auto& row : cost) require(static_cast<int>(row.size()) == n, ErrorCode::SizeMismatch, "cost matrix must be square");
  // shortest augmenting path with row/column potentials, 1-based work arrays
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assign[p[j] - 1] = j - 1;
  return assign;
}

double wasserstein(const Polyline3& p, const Polyline3& q) {
  check_pair(p, q);
  require(p.size() <= 256, ErrorCode::InvalidArgument, "Wasserstein limited to 256 points; resample first");
  const std::size_t n = p.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i][j] = (p[i] - q[j]).norm();
  const auto a = hungarian(cost);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += cost[i][static_cast<std::size_t>(a[i])];
  return s / static_cast<double>(n);
}

TrajectoryMetrics trajectory_metrics(const Polyline3& p, const Polyline3& q, int n, std::optional<double> length,
                                     const Mask* x, const Mask* y) {
  const Polyline3 rp = resample(p, n), rq = resample(q, n);
  TrajectoryMetrics m;
  m.mte = mean_trajectory_error(rp, rq);
  m.w1 = wasserstein(rp, rq);
  m.me_pct = max_error_pct(rp, rq, length.value_or(path_length(q)));
  if (x && y) m.dsc = dice(*x, *y);
  return m;
}

}  // namespace cathlab::metrics
