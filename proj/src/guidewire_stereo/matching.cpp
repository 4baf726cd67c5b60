#include "cathlab/error.hpp"
#include "cathlab/guidewire_stereo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cathlab::stereo {

double ncc(const Image2D& a, const Vec2& pa, const Image2D& b, const Vec2& pb, int window) {
  if (window < 1 || window % 2 == 0) fail(ErrorCode::InvalidArgument, "ncc: window must be a positive odd size");
  const int r = window / 2;
  const int n = window * window;
  std::vector<double> va(static_cast<std::size_t>(n)), vb(static_cast<std::size_t>(n));
  int k = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx, ++k) {
      va[k] = a.bilinear(pa.x() + dx, pa.y() + dy);
      vb[k] = b.bilinear(pb.x() + dx, pb.y() + dy);
    }
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < n; ++i) {
    ma += va[i];
    mb += vb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int i = 0; i < n; ++i) {
    sab += (va[i] - ma) * (vb[i] - mb);
    saa += (va[i] - ma) * (va[i] - ma);
    sbb += (vb[i] - mb) * (vb[i] - mb);
  }
  const double scale = std::max({std::abs(ma), std::abs(mb), 1e-300});
  if (saa <= 1e-24 * n * scale * scale || sbb <= 1e-24 * n * scale * scale)
    fail(ErrorCode::Undefined, "ncc: zero-variance patch");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double structural_similarity(const Vec2& t1, double k1, const Vec2& t2, double k2, double kappa0) {
  if (kappa0 <= 0.0) fail(ErrorCode::InvalidArgument, "structural_similarity: kappa0 must be positive");
  const double n = t1.norm() * t2.norm();
  const double cos_t = n > 0.0 ? std::clamp(t1.dot(t2) / n, -1.0, 1.0) : 0.0;
  return cos_t * std::exp(-std::abs(k1 - k2) / kappa0);
}

double match_cost(const Image2D& img1, const Vec2& p1, const Vec2& t1, double k1, const Image2D& img2, const Vec2& p2,
                  const Vec2& t2, double k2, const MatchParams& p) {
  if (p.alpha < 0.0 || p.alpha > 1.0) fail(ErrorCode::InvalidArgument, "match_cost: alpha must lie in [0, 1]");
  const double s = structural_similarity(t1, k1, t2, k2, p.kappa0);
  if (p.alpha == 0.0) return s;
  try {
    return p.alpha * ncc(img1, p1, img2, p2, p.window) + (1.0 - p.alpha) * s;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Undefined) throw;
    return s;
  }
}

namespace {

struct Candidate {
  double s2 = 0.0;  // arc length on c2, original direction
  Vec2 p2;          // distortion-free pixel
  Vec2 raw;         // pixel in the source image
  Vec2 tangent;
  double curvature = 0.0;
};

Polyline2 undistorted(const Centerline2D& c, const CameraModel& cam) {
  if (!cam.distorted()) return c.dense;
  Polyline2 out;
  out.reserve(c.dense.size());
  for (const Vec2& q : c.dense) out.push_back(undistort_pixel(cam, q));
  return out;
}

Vec3 epipolar_line(const Mat3& F, const Vec2& x1) {
  Vec3 l = F * Vec3(x1.x(), x1.y(), 1.0);
  const double n = l.head<2>().norm();
  if (n == 0.0) return Vec3::Zero();
  return l / n;
}

Candidate interpolate(const Centerline2D& c2, const Polyline2& und, int j, double f) {
  Candidate cd;
  const int k = std::min(j + 1, static_cast<int>(und.size()) - 1);
  cd.s2 = c2.arclength[j] + f * (c2.arclength[k] - c2.arclength[j]);
  cd.p2 = und[j] + f * (und[k] - und[j]);
  cd.raw = c2.dense[j] + f * (c2.dense[k] - c2.dense[j]);
  cd.tangent = c2.tangents[f < 0.5 ? j : k];
  cd.curvature = c2.curvature[j] + f * (c2.curvature[k] - c2.curvature[j]);
  return cd;
}

// Epipolar crossings of c2: exact sign changes, or the closest sample of
// a run that stays within the band without crossing.
std::vector<Candidate> crossings(const Vec3& l, const Centerline2D& c2, const Polyline2& und, double band) {
  std::vector<Candidate> out;
  if (l.head<2>().norm() == 0.0) return out;
  const int n = static_cast<int>(und.size());
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) d[j] = l.x() * und[j].x() + l.y() * und[j].y() + l.z();
  if (n == 1) {
    if (std::abs(d[0]) <= band) out.push_back(interpolate(c2, und, 0, 0.0));
    return out;
  }
  int j = 0;
  while (j < n) {
    if (std::abs(d[j]) > band) {
      if (j + 1 < n && d[j] * d[j + 1] < 0.0) {
        out.push_back(interpolate(c2, und, j, d[j] / (d[j] - d[j + 1])));
      }
      ++j;
      continue;
    }
    int e = j;
    while (e + 1 < n && std::abs(d[e + 1]) <= band) ++e;
    bool crossed = false;
    for (int k = std::max(0, j - 1); k <= std::min(e, n - 2); ++k) {
      if (d[k] == 0.0 || (d[k] * d[k + 1] < 0.0)) {
        out.push_back(interpolate(c2, und, k, d[k] == 0.0 ? 0.0 : d[k] / (d[k] - d[k + 1])));
        crossed = true;
      }
    }
    if (e == n - 1 && d[e] == 0.0 && !crossed) {
      out.push_back(interpolate(c2, und, e, 0.0));
      crossed = true;
    }
    if (!crossed) {
      int best = j;
      for (int k = j; k <= e; ++k)
        if (std::abs(d[k]) < std::abs(d[best])) best = k;
      out.push_back(interpolate(c2, und, best, 0.0));
    }
    j = e + 1;
  }
  // Crossings found from both the band scan and the boundary check may repeat.
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.s2 < b.s2; });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Candidate& a, const Candidate& b) { return std::abs(a.s2 - b.s2) < 1e-9; }),
            out.end());
  return out;
}

struct Oriented {
  double s2;
  Vec2 tangent;
};

Oriented orient(const Candidate& c, double L2, bool reversed) {
  return reversed ? Oriented{L2 - c.s2, -c.tangent} : Oriented{c.s2, c.tangent};
}

}  // namespace

MatchResult match_curves_dp(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                            const CameraModel& cam2, const Image2D* img1, const Image2D* img2, const MatchParams& p) {
  if (c1.keys.empty() || c2.dense.empty()) fail(ErrorCode::InsufficientData, "match_curves_dp: empty centerline");
  if (p.band_px <= 0.0 || p.lambda < 0.0 || p.disparity_scale <= 0.0)
    fail(ErrorCode::InvalidArgument, "match_curves_dp: bad parameters");
  cam1.validate();
  cam2.validate();
  const bool use_images = img1 && img2 && !img1->empty() && !img2->empty();
  const Mat3 F = fundamental_matrix(cam1, cam2);
  const Polyline2 u1 = undistorted(c1, cam1), u2 = undistorted(c2, cam2);

  const int K = static_cast<int>(c1.keys.size());
  std::vector<std::vector<Candidate>> cand(static_cast<std::size_t>(K));
  int without = 0;
  for (int i = 0; i < K; ++i) {
    cand[i] = crossings(epipolar_line(F, u1[c1.keys[i]]), c2, u2, p.band_px);
    without += cand[i].empty();
  }
  if (2 * without > K)
    fail(ErrorCode::MatchingFailure, "match_curves_dp: " + std::to_string(without) + " of " + std::to_string(K) +
                                         " key points have no epipolar candidate");

  const double L1 = c1.length(), L2 = c2.length();
  const double ratio = (L1 > 0.0 && L2 > 0.0) ? L1 / L2 : 1.0;

  // Similarity per candidate for both orientations (the tangent flips).
  auto similarity = [&](int i, const Candidate& cd, bool reversed) {
    const int k = c1.keys[i];
    const Vec2 t2 = reversed ? Vec2(-cd.tangent) : cd.tangent;
    if (!use_images) return structural_similarity(c1.tangents[k], c1.curvature[k], t2, cd.curvature, p.kappa0);
    return match_cost(*img1, c1.dense[k], c1.tangents[k], c1.curvature[k], *img2, cd.raw, t2, cd.curvature, p);
  };

  auto solve = [&](bool reversed) {
    // State: key i matched to candidate r. cost[i][r] includes skips before i.
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(K)), sim(static_cast<std::size_t>(K));
    std::vector<std::vector<std::pair<int, int>>> back(static_cast<std::size_t>(K));
    const double inf = std::numeric_limits<double>::infinity();
    double best = K * p.skip_cost;  // everything skipped
    std::pair<int, int> best_state{-1, -1};
    for (int i = 0; i < K; ++i) {
      const std::size_t R = cand[i].size();
      cost[i].assign(R, inf);
      sim[i].resize(R);
      back[i].assign(R, {-1, -1});
      const double s1 = c1.arclength[c1.keys[i]];
      for (std::size_t r = 0; r < R; ++r) {
        sim[i][r] = similarity(i, cand[i][r], reversed);
        const double unary = 1.0 - sim[i][r];
        const Oriented o = orient(cand[i][r], L2, reversed);
        const double d = o.s2 * ratio - s1;
        double c = i * p.skip_cost + unary;
        std::pair<int, int> from{-1, -1};
        for (int j = 0; j < i; ++j) {
          const double s1j = c1.arclength[c1.keys[j]];
          for (std::size_t q = 0; q < cand[j].size(); ++q) {
            if (!std::isfinite(cost[j][q])) continue;
            const Oriented oj = orient(cand[j][q], L2, reversed);
            if (oj.s2 > o.s2 + 1e-9) continue;
            const double dj = oj.s2 * ratio - s1j;
            const double jump = (d - dj) / (p.disparity_scale + p.disparity_slope * (s1 - s1j));
            const double total = cost[j][q] + (i - j - 1) * p.skip_cost + unary + p.lambda * jump * jump;
            if (total < c) {
              c = total;
              from = {j, static_cast<int>(q)};
            }
          }
        }
        cost[i][r] = c;
        back[i][r] = from;
        const double closed = c + (K - 1 - i) * p.skip_cost;
        if (closed < best) {
          best = closed;
          best_state = {i, static_cast<int>(r)};
        }
      }
    }
    MatchResult res;
    res.reversed = reversed;
    res.energy = best;
    for (auto st = best_state; st.first >= 0; st = back[st.first][st.second]) {
      const Candidate& cd = cand[st.first][st.second];
      Match m;
      m.key = st.first;
      m.s1 = c1.arclength[c1.keys[st.first]];
      m.s2 = orient(cd, L2, reversed).s2;
      m.p1 = u1[c1.keys[st.first]];
      m.p2 = cd.p2;
      m.similarity = sim[st.first][st.second];
      res.matches.push_back(m);
    }
    std::reverse(res.matches.begin(), res.matches.end());
    return res;
  };

  MatchResult fwd = solve(false);
  if (c2.dense.size() < 2) return fwd;
  MatchResult rev = solve(true);
  return rev.energy < fwd.energy ? rev : fwd;
}

std::vector<Correspondence> densify(const Centerline2D& c1, const Centerline2D& c2, const CameraModel& cam1,
                                    const CameraModel& cam2, const MatchResult& m, double band_px) {
  if (m.matches.empty()) return {};
  const Mat3 F = fundamental_matrix(cam1, cam2);
  const Polyline2 u1 = undistorted(c1, cam1), u2 = undistorted(c2, cam2);
  const double L1 = c1.length(), L2 = c2.length();
  const double ratio = L1 > 0.0 ? L2 / L1 : 1.0;
  const auto& a = m.matches;

  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < c1.dense.size(); ++i) {
    const double s1 = c1.arclength[i];
    double guess, window;
    if (s1 <= a.front().s1) {
      guess = a.front().s2 + (s1 - a.front().s1) * ratio;
      window = 3.0 + 0.5 * std::abs(s1 - a.front().s1) * ratio;
    } else if (s1 >= a.back().s1) {
      guess = a.back().s2 + (s1 - a.back().s1) * ratio;
      window = 3.0 + 0.5 * std::abs(s1 - a.back().s1) * ratio;
    } else {
      std::size_t k = 1;
      while (a[k].s1 < s1) ++k;
      const double f = (s1 - a[k - 1].s1) / std::max(a[k].s1 - a[k - 1].s1, 1e-300);
      guess = a[k - 1].s2 + f * (a[k].s2 - a[k - 1].s2);
      window = 3.0 + 0.5 * std::abs(a[k].s2 - a[k - 1].s2);
    }
    const auto cands = crossings(epipolar_line(F, u1[i]), c2, u2, band_px);
    const Candidate* best = nullptr;
    double best_off = window;
    for (const Candidate& cd : cands) {
      const double s2 = orient(cd, L2, m.reversed).s2;
      const double off = std::abs(s2 - guess);
      if (off <= best_off) {
        best_off = off;
        best = &cd;
      }
    }
    if (best) out.push_back({u1[i], best->p2});
  }
  return out;
}

}  // namespace cathlab::stereo
