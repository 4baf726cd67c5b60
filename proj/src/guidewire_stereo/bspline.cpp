#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cathlab::stereo {

namespace {

constexpr int kDegree = 3;

// Knot span index with t[k] <= u < t[k+1], clamped so u = 1 falls in the last span.
int find_span(const std::vector<double>& t, int n_ctrl, int degree, double u) {
  if (u >= t[n_ctrl]) return n_ctrl - 1;
  if (u <= t[degree]) return degree;
  auto it = std::upper_bound(t.begin() + degree, t.begin() + n_ctrl + 1, u);
  return static_cast<int>(it - t.begin()) - 1;
}

// Nonzero basis functions N_{span-degree..span} at u.
void basis_funs(const std::vector<double>& t, int span, int degree, double u, double* N) {
  double left[8], right[8];
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = u - t[span + 1 - j];
    right[j] = t[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double den = right[r + 1] + left[j - r];
      const double tmp = den == 0.0 ? 0.0 : N[r] / den;
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
}

Vec3 de_boor(const Polyline3& ctrl, const std::vector<double>& t, int degree, double u) {
  const int n = static_cast<int>(ctrl.size());
  if (degree < 0) return Vec3::Zero();
  const int span = find_span(t, n, degree, u);
  double N[8];
  basis_funs(t, span, degree, u, N);
  Vec3 p = Vec3::Zero();
  for (int j = 0; j <= degree; ++j) p += N[j] * ctrl[span - degree + j];
  return p;
}

std::vector<double> chord_params(const Polyline3& pts) {
  std::vector<double> u(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) u[i] = u[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = u.back();
  if (total <= 0.0) fail(ErrorCode::InvalidArgument, "fit_bspline: points are all coincident");
  for (double& v : u) v /= total;
  return u;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Distance to the curve, measuring points past either end against the
// tangent extension so a short sample does not reject the true ends.
double extended_distance(const GuidewireCurve& c, const Vec3& x) {
  const auto [d, u] = c.closest(x);
  if (u > 0.0 && u < 1.0) return d;
  const Vec3 end = c.eval(u);
  Vec3 t = c.derivative(u);
  if (t.norm() == 0.0) return d;
  t.normalize();
  if (u == 0.0) t = -t;
  const double along = (x - end).dot(t);
  if (along <= 0.0) return d;
  return (x - end - along * t).norm();
}

}  // namespace

std::vector<double> clamped_uniform_knots(int n_ctrl) {
  if (n_ctrl < kDegree + 1) fail(ErrorCode::InvalidArgument, "B-spline needs at least 4 control points");
  std::vector<double> t(static_cast<std::size_t>(n_ctrl + kDegree + 1));
  const int spans = n_ctrl - kDegree;
  for (int i = 0; i < static_cast<int>(t.size()); ++i) {
    if (i <= kDegree) t[i] = 0.0;
    else if (i >= n_ctrl) t[i] = 1.0;
    else t[i] = static_cast<double>(i - kDegree) / spans;
  }
  return t;
}

std::vector<double> bspline_basis(const std::vector<double>& knots, int n_ctrl, double u) {
  if (static_cast<int>(knots.size()) != n_ctrl + kDegree + 1) fail(ErrorCode::SizeMismatch, "bspline_basis: knot count");
  std::vector<double> out(static_cast<std::size_t>(n_ctrl), 0.0);
  const int span = find_span(knots, n_ctrl, kDegree, std::clamp(u, 0.0, 1.0));
  double N[8];
  basis_funs(knots, span, kDegree, std::clamp(u, 0.0, 1.0), N);
  for (int j = 0; j <= kDegree; ++j) out[span - kDegree + j] = N[j];
  return out;
}

GuidewireCurve::GuidewireCurve(Polyline3 control)
    : ctrl_(std::move(control)), knots_(clamped_uniform_knots(static_cast<int>(ctrl_.size()))) {}

GuidewireCurve::GuidewireCurve(Polyline3 control, std::vector<double> knots)
    : ctrl_(std::move(control)), knots_(std::move(knots)) {
  const int n = static_cast<int>(ctrl_.size());
  if (n < kDegree + 1) fail(ErrorCode::InvalidArgument, "GuidewireCurve: at least 4 control points");
  if (static_cast<int>(knots_.size()) != n + kDegree + 1)
    fail(ErrorCode::SizeMismatch, "GuidewireCurve: expected " + std::to_string(n + kDegree + 1) + " knots");
  if (!std::is_sorted(knots_.begin(), knots_.end())) fail(ErrorCode::InvalidArgument, "GuidewireCurve: knots decrease");
}

Vec3 GuidewireCurve::eval(double u) const {
  if (ctrl_.empty()) fail(ErrorCode::InvalidArgument, "GuidewireCurve: empty curve");
  return de_boor(ctrl_, knots_, kDegree, std::clamp(u, 0.0, 1.0));
}

Vec3 GuidewireCurve::derivative(double u, int order) const {
  if (ctrl_.empty()) fail(ErrorCode::InvalidArgument, "GuidewireCurve: empty curve");
  if (order < 0) fail(ErrorCode::InvalidArgument, "derivative order must be >= 0");
  if (order > kDegree) return Vec3::Zero();
  Polyline3 q = ctrl_;
  std::vector<double> t = knots_;
  int p = kDegree;
  for (int k = 0; k < order; ++k) {
    Polyline3 d(q.size() - 1);
    for (std::size_t i = 0; i + 1 < q.size(); ++i) {
      const double den = t[i + p + 1] - t[i + 1];
      d[i] = den > 0.0 ? Vec3(p * (q[i + 1] - q[i]) / den) : Vec3::Zero();
    }
    q = std::move(d);
    t = std::vector<double>(t.begin() + 1, t.end() - 1);
    --p;
  }
  return de_boor(q, t, p, std::clamp(u, 0.0, 1.0));
}

Polyline3 GuidewireCurve::sample(int n) const {
  if (n < 2) fail(ErrorCode::InvalidArgument, "GuidewireCurve::sample: n >= 2");
  Polyline3 out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = eval(static_cast<double>(i) / (n - 1));
  return out;
}

double GuidewireCurve::length(int samples) const {
  const Polyline3 s = sample(samples);
  double len = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) len += (s[i] - s[i - 1]).norm();
  return len;
}

std::pair<double, double> GuidewireCurve::closest(const Vec3& x) const {
  const int spans = std::max(1, static_cast<int>(ctrl_.size()) - kDegree);
  const int n = std::max(200, 64 * spans);
  const Polyline3 s = sample(n + 1);
  double best = std::numeric_limits<double>::infinity(), best_u = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 ab = s[i + 1] - s[i];
    const double len2 = ab.squaredNorm();
    const double f = len2 > 0.0 ? std::clamp((x - s[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (s[i] + f * ab - x).squaredNorm();
    if (d < best) {
      best = d;
      best_u = (i + f) / n;
    }
  }
  double u = best_u;
  for (int it = 0; it < 8; ++it) {
    const Vec3 r = eval(u) - x;
    const Vec3 d1 = derivative(u, 1), d2 = derivative(u, 2);
    const double g = d1.dot(r);
    const double h = d2.dot(r) + d1.squaredNorm();
    if (h <= 0.0) break;
    const double next = std::clamp(u - g / h, 0.0, 1.0);
    if (std::abs(next - u) < 1e-14) break;
    u = next;
  }
  const double d = (eval(u) - x).norm();
  if (d * d <= best) return {d, u};
  return {std::sqrt(best), best_u};
}

GuidewireCurve fit_bspline(const Polyline3& points, int n_ctrl, double smoothness) {
  if (n_ctrl < kDegree + 1) fail(ErrorCode::InvalidArgument, "fit_bspline: at least 4 control points");
  if (points.size() < 2) fail(ErrorCode::InsufficientData, "fit_bspline: need at least 2 points");
  if (smoothness < 0.0) fail(ErrorCode::InvalidArgument, "fit_bspline: smoothness must be >= 0");
  const auto u = chord_params(points);
  const auto knots = clamped_uniform_knots(n_ctrl);
  const int m = static_cast<int>(points.size());

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n_ctrl);
  Eigen::MatrixXd P(m, 3);
  for (int i = 0; i < m; ++i) {
    const int span = find_span(knots, n_ctrl, kDegree, u[i]);
    double N[8];
    basis_funs(knots, span, kDegree, u[i], N);
    for (int j = 0; j <= kDegree; ++j) A(i, span - kDegree + j) = N[j];
    P.row(i) = points[i].transpose();
  }

  // Second divided differences over the Greville abscissae vanish for
  // control polygons of linear functions, so lines stay exact.
  std::vector<double> g(static_cast<std::size_t>(n_ctrl));
  for (int i = 0; i < n_ctrl; ++i) g[i] = (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0;
  const double h = 1.0 / (n_ctrl - kDegree);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(std::max(0, n_ctrl - 2), n_ctrl);
  for (int i = 1; i + 1 < n_ctrl; ++i) {
    const double a = 2.0 / ((g[i] - g[i - 1]) * (g[i + 1] - g[i - 1]));
    const double c = 2.0 / ((g[i + 1] - g[i]) * (g[i + 1] - g[i - 1]));
    D(i - 1, i - 1) = a * h * h;
    D(i - 1, i + 1) = c * h * h;
    D(i - 1, i) = -(a + c) * h * h;
  }
  const Eigen::MatrixXd N = A.transpose() * A + smoothness * m * D.transpose() * D;
  const Eigen::MatrixXd rhs = A.transpose() * P;
  Eigen::MatrixXd Q = N.ldlt().solve(rhs);
  if (!Q.allFinite() || (N * Q - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm()))
    Q = N.completeOrthogonalDecomposition().solve(rhs);

  Polyline3 ctrl(static_cast<std::size_t>(n_ctrl));
  for (int i = 0; i < n_ctrl; ++i) ctrl[i] = Q.row(i).transpose();
  return GuidewireCurve(std::move(ctrl), knots);
}

FitResult fit_bspline_ransac(const Polyline3& points, const FitParams& p) {
  const int n = static_cast<int>(points.size());
  if (n < 8) fail(ErrorCode::InsufficientData, "fit_bspline_ransac: need at least 8 points");
  if (p.ransac_iterations < 1 || p.sigma_k <= 0.0 || p.inlier_floor_mm < 0.0)
    fail(ErrorCode::InvalidArgument, "fit_bspline_ransac: bad parameters");
  const int n_ctrl = p.n_ctrl > 0 ? p.n_ctrl : std::max(8, n / 10);
  const int subset = std::min(n, n_ctrl + 2);

  auto residuals = [&](const GuidewireCurve& c) {
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[i] = extended_distance(c, points[i]);
    return r;
  };
  auto fit_subset = [&](const std::vector<int>& idx) {
    Polyline3 sub;
    sub.reserve(idx.size());
    for (int i : idx) sub.push_back(points[i]);
    return fit_bspline(sub, std::min(n_ctrl, std::max(4, static_cast<int>(sub.size()))), p.smoothness);
  };

  // Stratified minimal samples: one random point per equal slice keeps the
  // subset spread along the curve.
  std::mt19937 rng(p.seed);
  std::vector<int> best_idx;
  double best_cost = std::numeric_limits<double>::infinity();
  const double thr0 = std::max(p.inlier_floor_mm, 1e-9);
  for (int it = 0; it < p.ransac_iterations; ++it) {
    std::vector<int> idx(static_cast<std::size_t>(subset));
    for (int k = 0; k < subset; ++k) {
      const int lo = static_cast<int>(static_cast<long long>(k) * n / subset);
      const int hi = static_cast<int>(static_cast<long long>(k + 1) * n / subset) - 1;
      idx[k] = std::uniform_int_distribution<int>(lo, std::max(lo, hi))(rng);
    }
    GuidewireCurve c;
    try {
      c = fit_subset(idx);
    } catch (const Error&) {
      continue;
    }
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = extended_distance(c, points[i]);
      cost += std::min(r * r, thr0 * thr0);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best_idx = idx;
    }
  }
  if (best_idx.empty()) fail(ErrorCode::InsufficientData, "fit_bspline_ransac: no valid sample");

  auto r = residuals(fit_subset(best_idx));
  double thr = std::max(p.inlier_floor_mm, p.sigma_k * 1.4826 * median(r));
  std::vector<std::uint8_t> inlier(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) inlier[i] = r[i] <= thr;

  GuidewireCurve curve;
  for (int round = 0; round < 20; ++round) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (inlier[i]) idx.push_back(i);
    if (static_cast<int>(idx.size()) < 8)
      fail(ErrorCode::InsufficientData, "fit_bspline_ransac: fewer than 8 inliers");
    Polyline3 sub;
    for (int i : idx) sub.push_back(points[i]);
    curve = fit_bspline(sub, std::min(n_ctrl, static_cast<int>(sub.size())), p.smoothness);
    r = residuals(curve);
    std::vector<double> ri;
    for (int i : idx) ri.push_back(r[i]);
    thr = std::max(p.inlier_floor_mm, p.sigma_k * 1.4826 * median(ri));
    std::vector<std::uint8_t> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) next[i] = r[i] <= thr;
    if (next == inlier) break;
    inlier = std::move(next);
  }

  for (int i = 0; i < n; ++i)
    if (inlier[i]) r[i] = curve.closest(points[i]).first;
  FitResult out;
  out.curve = curve;
  out.inlier = inlier;
  double ss = 0.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (!inlier[i]) continue;
    out.max_inlier_distance = std::max(out.max_inlier_distance, r[i]);
    ss += r[i] * r[i];
    ++k;
  }
  if (k < 8) fail(ErrorCode::InsufficientData, "fit_bspline_ransac: fewer than 8 inliers");
  out.rms = std::sqrt(ss / k);
  return out;
}

}  // namespace cathlab::stereo
