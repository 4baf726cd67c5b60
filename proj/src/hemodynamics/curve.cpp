#include "cathlab/error.hpp"
#include "cathlab/hemodynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace cathlab::hemo {

double mesh_volume(const volume::SurfaceMesh& mesh) {
  volume::validate_indices(mesh);
  const volume::MeshReport r = volume::inspect(mesh);
  require(r.closed, ErrorCode::NotClosed, "mesh volume needs a closed surface");
  require(r.consistently_oriented, ErrorCode::Orientation, "mesh faces are not consistently oriented");
  require(r.signed_volume > 0.0, ErrorCode::Orientation, "mesh is inward oriented (negative volume)");
  return r.signed_volume / 1000.0;
}

VolumeTimeCurve::VolumeTimeCurve(std::vector<double> times, std::vector<double> volumes, std::optional<double> cycle_s,
                                 SplineEnds ends)
    : t_(std::move(times)), v_(std::move(volumes)), ends_(ends) {
  require(t_.size() == v_.size(), ErrorCode::SizeMismatch, "times and volumes differ in length");
  require(t_.size() >= 4, ErrorCode::InsufficientData, "volume curve needs at least 4 samples");
  for (std::size_t i = 0; i < t_.size(); ++i) {
    require(std::isfinite(t_[i]) && std::isfinite(v_[i]), ErrorCode::InvalidArgument, "non-finite curve sample");
    if (i > 0) require(t_[i] > t_[i - 1], ErrorCode::InvalidArgument, "curve times must be strictly increasing");
  }
  cycle_ = cycle_s.value_or(t_.back() - t_.front());
  require(cycle_ > 0.0, ErrorCode::InvalidArgument, "cycle duration must be positive");

  const std::size_t n = t_.size();
  auto h = [&](std::size_t i) { return t_[i + 1] - t_[i]; };
  auto secant = [&](std::size_t i) { return (v_[i + 1] - v_[i]) / h(i); };
  m_.assign(n, 0.0);

  if (ends_ == SplineEnds::Periodic) {
    const double scale = std::max(1.0, std::abs(v_.front()));
    require(std::abs(v_.back() - v_.front()) <= 1e-9 * scale, ErrorCode::InvalidArgument,
            "periodic spline needs equal first and last samples");
    // unknowns m_0 .. m_{n-2}; m_{n-1} = m_0 and interval n-2 precedes interval 0
    const auto k = static_cast<Eigen::Index>(n - 1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd b(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const std::size_t prev = i == 0 ? n - 2 : static_cast<std::size_t>(i) - 1;
      const std::size_t cur = static_cast<std::size_t>(i);
      a(i, (i + k - 1) % k) += h(prev);
      a(i, i) += 2.0 * (h(prev) + h(cur));
      a(i, (i + 1) % k) += h(cur);
      b(i) = 6.0 * (secant(cur) - secant(prev));
    }
    const Eigen::VectorXd m = a.partialPivLu().solve(b);
    for (Eigen::Index i = 0; i < k; ++i) m_[static_cast<std::size_t>(i)] = m(i);
    m_[n - 1] = m_[0];
    return;
  }

  // natural: m_0 = m_{n-1} = 0, tridiagonal system for the interior
  std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    diag[i] = 2.0 * (h(i - 1) + h(i));
    upper[i] = h(i);
    rhs[i] = 6.0 * (secant(i) - secant(i - 1));
  }
  // Thomas sweep; the sub-diagonal entry of row i is h_{i-1}
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double w = h(i - 1) / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
    if (i == 1) break;
  }
}

std::size_t VolumeTimeCurve::interval(double t) const {
  require(!t_.empty(), ErrorCode::InvalidArgument, "empty curve");
  require(t >= t_.front() - 1e-12 && t <= t_.back() + 1e-12, ErrorCode::Bounds, "time outside the curve domain");
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - t_.begin());
  return std::clamp<std::size_t>(k == 0 ? 0 : k - 1, 0, t_.size() - 2);
}

double VolumeTimeCurve::value(double t) const {
  const std::size_t i = interval(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
  return v_[i] + b * (v_[i + 1] - v_[i]) + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double VolumeTimeCurve::slope(double t) const {
  const std::size_t i = interval(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
  return (v_[i + 1] - v_[i]) / h - (3.0 * a * a - 1.0) * h / 6.0 * m_[i] + (3.0 * b * b - 1.0) * h / 6.0 * m_[i + 1];
}

double VolumeTimeCurve::curvature(double t) const {
  const std::size_t i = interval(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h;
  return a * m_[i] + (1.0 - a) * m_[i + 1];
}

double VolumeTimeCurve::wrap(double t) const {
  double r = std::fmod(t - t0(), cycle_);
  if (r < 0.0) r += cycle_;
  return std::min(t0() + r, t1());
}

VolumeTimeCurve build_curve(const std::vector<double>& times, const std::vector<double>& volumes, SplineEnds ends) {
  return VolumeTimeCurve(times, volumes, std::nullopt, ends);
}

namespace {

// argmin of f on [a, b] by dense scan followed by golden-section refinement
double minimize(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  double best_t = a, best = f(a);
  const double step = (b - a) / n;
  for (int i = 1; i <= n; ++i) {
    const double t = a + i * step;
    const double v = f(t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  double lo = std::max(a, best_t - step), hi = std::min(b, best_t + step);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  const double t = 0.5 * (lo + hi);
  return f(t) <= best ? t : best_t;
}

}  // namespace

Extrema edv_esv(const VolumeTimeCurve& c) {
  Extrema e;
  e.t_edv = minimize([&](double t) { return -c.value(t); }, c.t0(), c.t1());
  e.t_esv = minimize([&](double t) { return c.value(t); }, c.t0(), c.t1());
  e.edv = c.value(e.t_edv);
  e.esv = c.value(e.t_esv);
  return e;
}

StrokeOutput stroke_cardiac_output(double edv, double esv, double hr_bpm) {
  require(edv > esv && esv > 0.0, ErrorCode::InvalidArgument, "need EDV > ESV > 0");
  require(hr_bpm > 0.0, ErrorCode::InvalidArgument, "heart rate must be positive");
  StrokeOutput s;
  s.sv_ml = edv - esv;
  s.co_l_min = s.sv_ml * hr_bpm / 1000.0;
  s.ef_pct = s.sv_ml / edv * 100.0;
  return s;
}

namespace {

void check_window(const VolumeTimeCurve& c, double t_avo, double t_avc) {
  require(t_avo < t_avc, ErrorCode::InvalidArgument, "ejection window needs t_avo < t_avc");
  require(t_avo >= c.t0() && t_avc <= c.t1(), ErrorCode::Bounds, "ejection window outside the curve domain");
}

}  // namespace

std::vector<Sample> flow_rate(const VolumeTimeCurve& c, double t_avo, double t_avc, int n) {
  check_window(c, t_avo, t_avc);
  require(n >= 2, ErrorCode::InvalidArgument, "flow sampling needs at least 2 points");
  std::vector<Sample> q(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = i + 1 == n ? t_avc : t_avo + (t_avc - t_avo) * i / (n - 1);
    q[static_cast<std::size_t>(i)] = {t, -c.slope(t)};
  }
  return q;
}

PeakRates peak_rates(const VolumeTimeCurve& c, double t_avo, double t_avc) {
  check_window(c, t_avo, t_avc);
  PeakRates r;
  r.t_per = minimize([&](double t) { return c.slope(t); }, t_avo, t_avc);
  r.per = c.slope(r.t_per);
  // diastole runs from valve closure around to the next opening
  const double t_end = t_avo + c.cycle();
  const double u = minimize([&](double t) { return -c.slope(c.wrap(t)); }, t_avc, t_end);
  r.t_pfr = c.wrap(u);
  r.pfr = c.slope(r.t_pfr);
  return r;
}

EjectionWindow ejection_window(const VolumeTimeCurve& c, double frac) {
  require(frac > 0.0 && frac < 1.0, ErrorCode::InvalidArgument, "event fraction must be in (0, 1)");
  const double t_per = minimize([&](double t) { return c.slope(t); }, c.t0(), c.t1());
  const double per = c.slope(t_per);
  require(per < 0.0, ErrorCode::Undefined, "curve never decreases; no ejection phase");
  const double level = frac * per;  // negative
  const double step = (c.t1() - c.t0()) / 4000.0;
  auto crossing = [&](double dir) {
    double inside = t_per;
    for (;;) {
      const double next = std::clamp(inside + dir * step, c.t0(), c.t1());
      if (next == inside) return inside;
      if (c.slope(next) >= level) {
        double a = inside, b = next;  // a below level, b above
        for (int i = 0; i < 60; ++i) {
          const double m = 0.5 * (a + b);
          (c.slope(m) < level ? a : b) = m;
        }
        return 0.5 * (a + b);
      }
      inside = next;
    }
  };
  return {crossing(-1.0), crossing(1.0)};
}

std::vector<Sample> diastolic_flow(const VolumeTimeCurve& c, double t_avo, double t_avc, int n) {
  check_window(c, t_avo, t_avc);
  require(n >= 2, ErrorCode::InvalidArgument, "flow sampling needs at least 2 points");
  const double t_end = t_avo + c.cycle();
  std::vector<Sample> q(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = t_avc + (t_end - t_avc) * i / (n - 1);
    q[static_cast<std::size_t>(i)] = {t, -c.slope(c.wrap(t))};
  }
  return q;
}

Regurgitation regurgitant_volume(const std::vector<Sample>& q, double sv_ml) {
  require(q.size() >= 2, ErrorCode::InsufficientData, "diastolic flow window is empty");
  double rv = 0.0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    const double dt = q[i].t - q[i - 1].t;
    require(dt > 0.0, ErrorCode::InvalidArgument, "flow samples must be time ordered");
    rv += 0.5 * dt * (std::max(0.0, q[i].value) + std::max(0.0, q[i - 1].value));
  }
  return {rv, sv_ml - rv};
}

double effective_orifice_area(const Polyline3& loop) {
  require(loop.size() >= 3, ErrorCode::InvalidArgument, "orifice loop needs at least 3 points");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : loop) centroid += p;
  centroid /= static_cast<double>(loop.size());
  Eigen::MatrixXd a(static_cast<Eigen::Index>(loop.size()), 3);
  for (std::size_t i = 0; i < loop.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = (loop[i] - centroid).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Vec3 e1 = svd.matrixV().col(0), e2 = svd.matrixV().col(1);
  Polyline2 q;
  for (const Vec3& p : loop) q.emplace_back((p - centroid).dot(e1), (p - centroid).dot(e2));

  const std::size_t n = q.size();
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // neighbours share a vertex
      const Vec2 &p1 = q[i], &p2 = q[(i + 1) % n], &p3 = q[j], &p4 = q[(j + 1) % n];
      const double d1 = cross(p3, p4, p1), d2 = cross(p3, p4, p2), d3 = cross(p1, p2, p3), d4 = cross(p1, p2, p4);
      require(!(d1 * d2 < 0.0 && d3 * d4 < 0.0), ErrorCode::InvalidArgument, "orifice loop self-intersects");
    }
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += q[i].x() * q[(i + 1) % n].y() - q[(i + 1) % n].x() * q[i].y();
  const double area = 0.5 * std::abs(s);
  require(area > 0.0, ErrorCode::InvalidArgument, "orifice loop encloses no area");
  return area / 100.0;
}

double aortic_distension(const AreaProfile& a, double z1, double z2) {
  const auto& z = a.z_cm;
  require(z.size() >= 2 && a.area_sys_cm2.size() == z.size() && a.area_dia_cm2.size() == z.size(),
          ErrorCode::SizeMismatch, "area profile arrays must share the z grid");
  for (std::size_t i = 1; i < z.size(); ++i)
    require(z[i] > z[i - 1], ErrorCode::InvalidArgument, "z grid must be strictly increasing");
  require(z1 < z2, ErrorCode::InvalidArgument, "need z1 < z2");
  require(z.front() <= z1 && z.back() >= z2, ErrorCode::Bounds, "z grid does not cover [z1, z2]");
  auto diff_at = [&](double x) {
    const std::size_t k = std::min<std::size_t>(
        z.size() - 2, static_cast<std::size_t>(std::upper_bound(z.begin(), z.end(), x) - z.begin()) - 1);
    const double w = (x - z[k]) / (z[k + 1] - z[k]);
    const double d0 = a.area_sys_cm2[k] - a.area_dia_cm2[k], d1 = a.area_sys_cm2[k + 1] - a.area_dia_cm2[k + 1];
    return (1.0 - w) * d0 + w * d1;
  };
  // trapezoid on the grid nodes inside (z1, z2) plus the two end points
  std::vector<double> xs{z1};
  for (double x : z)
    if (x > z1 && x < z2) xs.push_back(x);
  xs.push_back(z2);
  double dv = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) dv += 0.5 * (xs[i] - xs[i - 1]) * (diff_at(xs[i]) + diff_at(xs[i - 1]));
  return dv;
}

HemodynamicsReport analyze(const VolumeTimeCurve& c, double hr_bpm, const ReportOptions& opt) {
  HemodynamicsReport r;
  const Extrema e = edv_esv(c);
  const StrokeOutput s = stroke_cardiac_output(e.edv, e.esv, hr_bpm);
  EjectionWindow w;
  if (!opt.t_avo || !opt.t_avc) w = ejection_window(c, opt.event_frac);
  if (opt.t_avo) w.t_avo = *opt.t_avo;
  if (opt.t_avc) w.t_avc = *opt.t_avc;
  const PeakRates pr = peak_rates(c, w.t_avo, w.t_avc);
  const Regurgitation rg = regurgitant_volume(diastolic_flow(c, w.t_avo, w.t_avc), s.sv_ml);
  r.edv_ml = e.edv;
  r.esv_ml = e.esv;
  r.t_edv_s = e.t_edv;
  r.t_esv_s = e.t_esv;
  r.sv_ml = s.sv_ml;
  r.ef_pct = s.ef_pct;
  r.co_l_min = s.co_l_min;
  r.per_ml_s = pr.per;
  r.t_per_s = pr.t_per;
  r.pfr_ml_s = pr.pfr;
  r.t_pfr_s = pr.t_pfr;
  r.t_avo_s = w.t_avo;
  r.t_avc_s = w.t_avc;
  r.rv_ml = rg.rv_ml;
  r.sv_eff_ml = rg.sv_eff_ml;
  r.mean_hr_bpm = hr_bpm;
  return r;
}

HemodynamicsReport summary_report(double edv, double esv, double hr_bpm) {
  const StrokeOutput s = stroke_cardiac_output(edv, esv, hr_bpm);
  HemodynamicsReport r;
  r.edv_ml = edv;
  r.esv_ml = esv;
  r.sv_ml = s.sv_ml;
  r.ef_pct = s.ef_pct;
  r.co_l_min = s.co_l_min;
  r.sv_eff_ml = s.sv_ml;
  r.mean_hr_bpm = hr_bpm;
  return r;
}

}  // namespace cathlab::hemo
