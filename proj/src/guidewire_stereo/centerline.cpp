#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace cathlab::stereo {

namespace {

constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

void require_shape(const BinaryImage& m) {
  if (m.width < 1 || m.height < 1 || m.px.size() != static_cast<std::size_t>(m.width) * m.height)
    fail(ErrorCode::SizeMismatch, "binary image size does not match its dimensions");
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

std::size_t BinaryImage::count() const {
  return static_cast<std::size_t>(std::count_if(px.begin(), px.end(), [](std::uint8_t v) { return v != 0; }));
}

BinaryImage threshold(const Image2D& img, double level) {
  BinaryImage m{img.width(), img.height(), std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) m.px[i] = img.pixels()[i] > level;
  return m;
}

BinaryImage largest_component(const BinaryImage& mask) {
  require_shape(mask);
  const int w = mask.width, h = mask.height;
  std::vector<int> label(mask.px.size(), -1);
  int best = -1;
  std::size_t best_size = 0;
  std::vector<int> stack;
  int next = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.px[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int x = p % w, y = p / w;
      for (int k = 0; k < 8; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int q = ny * w + nx;
        if (mask.px[q] && label[q] < 0) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  BinaryImage out{w, h, std::vector<std::uint8_t>(mask.px.size(), 0)};
  for (std::size_t i = 0; i < label.size(); ++i) out.px[i] = best >= 0 && label[i] == best;
  return out;
}

BinaryImage thin(const BinaryImage& mask) {
  require_shape(mask);
  const int w = mask.width, h = mask.height;
  BinaryImage img = mask;
  auto get = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return img.px[static_cast<std::size_t>(y) * w + x] != 0;
  };
  std::vector<int> del;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      del.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!get(x, y)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {get(x, y - 1), get(x + 1, y - 1), get(x + 1, y), get(x + 1, y + 1),
                            get(x, y + 1), get(x - 1, y + 1), get(x - 1, y), get(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            a += p[k] == 0 && p[(k + 1) % 8] == 1;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0) {
            if (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0) continue;
          }
          del.push_back(y * w + x);
        }
      }
      for (int i : del) img.px[i] = 0;
      changed = changed || !del.empty();
    }
  }
  return img;
}

Polyline2 longest_path(const BinaryImage& skeleton, double dominance) {
  require_shape(skeleton);
  const int w = skeleton.width, h = skeleton.height;
  std::vector<int> nodes;
  for (int i = 0; i < w * h; ++i)
    if (skeleton.px[i]) nodes.push_back(i);
  if (nodes.empty()) fail(ErrorCode::InsufficientData, "longest_path: empty skeleton");

  std::vector<double> dist(static_cast<std::size_t>(w) * h);
  std::vector<int> prev(dist.size());
  auto dijkstra = [&](int src) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(prev.begin(), prev.end(), -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    int far = src;
    while (!pq.empty()) {
      const auto [d, p] = pq.top();
      pq.pop();
      if (d > dist[p]) continue;
      if (d > dist[far]) far = p;
      const int x = p % w, y = p / w;
      for (int k = 0; k < 8; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int q = ny * w + nx;
        if (!skeleton.px[q]) continue;
        const double nd = d + ((k % 2) ? std::sqrt(2.0) : 1.0);
        if (nd < dist[q]) {
          dist[q] = nd;
          prev[q] = p;
          pq.emplace(nd, q);
        }
      }
    }
    return far;
  };
  const int a = dijkstra(nodes.front());
  const int b = dijkstra(a);
  Polyline2 path;
  for (int p = b; p >= 0; p = prev[p]) path.emplace_back(p % w, p / w);
  std::reverse(path.begin(), path.end());
  if (static_cast<double>(path.size()) < dominance * static_cast<double>(nodes.size()))
    fail(ErrorCode::InvalidArgument, "extract_centerline: branching skeleton without a dominant path (" +
                                         std::to_string(path.size()) + " of " + std::to_string(nodes.size()) +
                                         " pixels)");
  return path;
}

Vec2 Centerline2D::point_at(double s) const {
  if (dense.empty()) fail(ErrorCode::InvalidArgument, "Centerline2D: empty");
  if (dense.size() == 1 || s <= 0.0) return dense.front();
  if (s >= arclength.back()) return dense.back();
  const auto it = std::upper_bound(arclength.begin(), arclength.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - arclength.begin());
  const double f = (s - arclength[i - 1]) / std::max(arclength[i] - arclength[i - 1], 1e-300);
  return dense[i - 1] + f * (dense[i] - dense[i - 1]);
}

Centerline2D centerline_from_polyline(const Polyline2& pts, int width, int height, const CenterlineParams& p) {
  if (pts.empty()) fail(ErrorCode::InsufficientData, "centerline: no points");
  if (p.min_spacing <= 0.0 || p.max_spacing < p.min_spacing || p.spacing_gain <= 0.0 || p.dense_step <= 0.0)
    fail(ErrorCode::InvalidArgument, "centerline: bad spacing parameters");
  Polyline2 clean{pts.front()};
  for (std::size_t i = 1; i < pts.size(); ++i)
    if ((pts[i] - clean.back()).norm() > 1e-9) clean.push_back(pts[i]);

  Centerline2D c;
  c.width = width;
  c.height = height;
  if (clean.size() == 1) {
    c.dense = clean;
    c.arclength = {0.0};
    c.tangents = {Vec2(1.0, 0.0)};
    c.curvature = {0.0};
    c.keys = {0};
    return c;
  }

  std::vector<double> s(clean.size(), 0.0);
  for (std::size_t i = 1; i < clean.size(); ++i) s[i] = s[i - 1] + (clean[i] - clean[i - 1]).norm();
  const double L = s.back();
  const int n = std::max(2, static_cast<int>(std::ceil(L / p.dense_step)) + 1);
  std::size_t seg = 0;
  for (int k = 0; k < n; ++k) {
    const double sk = L * k / (n - 1);
    while (seg + 2 < clean.size() && s[seg + 1] < sk) ++seg;
    const double f = std::clamp((sk - s[seg]) / std::max(s[seg + 1] - s[seg], 1e-300), 0.0, 1.0);
    c.dense.push_back(clean[seg] + f * (clean[seg + 1] - clean[seg]));
    c.arclength.push_back(sk);
  }

  const int m = static_cast<int>(c.dense.size());
  for (int i = 0; i < m; ++i) {
    const int a = std::max(0, i - 1), b = std::min(m - 1, i + 1);
    c.tangents.push_back((c.dense[b] - c.dense[a]).normalized());
  }
  const int win = 3;
  for (int i = 0; i < m; ++i) {
    const int a = std::max(0, i - win), b = std::min(m - 1, i + win);
    const Vec2 ta = c.tangents[a], tb = c.tangents[b];
    const double turn = std::atan2(ta.x() * tb.y() - ta.y() * tb.x(), ta.dot(tb));
    const double ds = c.arclength[b] - c.arclength[a];
    c.curvature.push_back(ds > 0.0 ? std::abs(turn) / ds : 0.0);
  }

  c.keys.push_back(0);
  double next = 0.0;
  int i = 0;
  while (true) {
    const double k = c.curvature[i];
    const double step = std::clamp(k > 0.0 ? p.spacing_gain / k : p.max_spacing, p.min_spacing, p.max_spacing);
    next += step;
    if (next >= L) break;
    i = static_cast<int>(std::lower_bound(c.arclength.begin(), c.arclength.end(), next) - c.arclength.begin());
    i = std::min(i, m - 1);
    if (i > c.keys.back()) c.keys.push_back(i);
  }
  if (c.keys.back() != m - 1) {
    if (c.keys.size() > 1 && L - c.arclength[c.keys.back()] < 0.5 * p.min_spacing) c.keys.back() = m - 1;
    else c.keys.push_back(m - 1);
  }
  return c;
}

namespace {

// Steps from the end along the outward tangent while the pixel stays inside.
Polyline2 extend_end(const Vec2& end, const Vec2& dir, const BinaryImage& mask, const Image2D* intensity,
                     double level, double max_len) {
  Polyline2 out;
  const double step = 0.25;
  for (double d = step; d <= max_len; d += step) {
    const Vec2 q = end + d * dir;
    if (q.x() < 0.0 || q.y() < 0.0 || q.x() > mask.width - 1 || q.y() > mask.height - 1) break;
    bool inside;
    if (intensity) {
      inside = intensity->bilinear(q.x(), q.y()) >= level;
    } else {
      inside = mask.at(static_cast<int>(std::lround(q.x())), static_cast<int>(std::lround(q.y()))) != 0;
    }
    if (!inside) break;
    out.push_back(q);
  }
  return out;
}

}  // namespace

Centerline2D extract_centerline(const BinaryImage& mask, const Image2D* intensity, const ExtractionParams& p) {
  require_shape(mask);
  if (mask.count() == 0) fail(ErrorCode::InsufficientData, "extract_centerline: empty mask");
  if (intensity && (intensity->width() != mask.width || intensity->height() != mask.height))
    fail(ErrorCode::SizeMismatch, "extract_centerline: intensity image shape differs from the mask");
  const BinaryImage comp = largest_component(mask);
  const BinaryImage skel = thin(comp);
  const Polyline2 path = longest_path(skel);
  if (path.size() < 8) return centerline_from_polyline(path, mask.width, mask.height, p.centerline);

  Polyline3 lifted;
  for (const Vec2& q : path) lifted.emplace_back(q.x(), q.y(), 0.0);
  const int n_ctrl = std::max(4, static_cast<int>(path.size() / std::max(1.0, p.smooth_per_ctrl)));
  const GuidewireCurve spline = fit_bspline(lifted, n_ctrl, 1e-4);
  const int n_dense = std::max(2, static_cast<int>(path.size()) * 2);
  Polyline2 smooth;
  for (const Vec3& q : spline.sample(n_dense)) smooth.emplace_back(q.x(), q.y());

  double level = 0.0;
  if (intensity) {
    std::vector<double> ridge;
    for (const Vec2& q : smooth) ridge.push_back(intensity->bilinear(q.x(), q.y()));
    const double bg = median(intensity->pixels());
    level = bg + p.end_level * (median(ridge) - bg);
  }
  const double max_len = 0.25 * std::max(mask.width, mask.height);
  auto end_dir = [&](bool head) {
    const Vec3 d = spline.derivative(head ? 0.0 : 1.0);
    Vec2 t(d.x(), d.y());
    if (t.norm() == 0.0) t = head ? Vec2(smooth[0] - smooth[1]) : Vec2(smooth.back() - smooth[smooth.size() - 2]);
    t.normalize();
    return head ? Vec2(-t) : t;
  };
  const Polyline2 head = extend_end(smooth.front(), end_dir(true), comp, intensity, level, max_len);
  const Polyline2 tail = extend_end(smooth.back(), end_dir(false), comp, intensity, level, max_len);

  Polyline2 all(head.rbegin(), head.rend());
  all.insert(all.end(), smooth.begin(), smooth.end());
  all.insert(all.end(), tail.begin(), tail.end());
  return centerline_from_polyline(all, mask.width, mask.height, p.centerline);
}

BinaryImage rasterize(const Polyline2& pts, int width, int height, double radius) {
  if (width < 1 || height < 1) fail(ErrorCode::InvalidArgument, "rasterize: image size must be positive");
  if (radius < 0.0) fail(ErrorCode::InvalidArgument, "rasterize: radius must be >= 0");
  BinaryImage m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  auto stamp_segment = [&](const Vec2& a, const Vec2& b) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + radius)));
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q(x, y);
        const double f = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        if ((a + f * ab - q).norm() <= radius) m.px[static_cast<std::size_t>(y) * width + x] = 1;
      }
  };
  if (pts.size() == 1) stamp_segment(pts[0], pts[0]);
  for (std::size_t i = 1; i < pts.size(); ++i) stamp_segment(pts[i - 1], pts[i]);
  return m;
}

}  // namespace cathlab::stereo
