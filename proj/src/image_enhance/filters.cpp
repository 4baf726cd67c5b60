#include "cathlab/error.hpp"
#include "cathlab/image_enhance.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cathlab::enhance {

namespace {

int radius_for(double sigma) { return std::max(1, static_cast<int>(std::ceil(4.0 * sigma))); }

// Correlate rows with kx, then columns with ky.
Image2D separable(const Image2D& img, const std::vector<double>& kx, const std::vector<double>& ky) {
  const int w = img.width(), h = img.height();
  const int rx = static_cast<int>(kx.size()) / 2, ry = static_cast<int>(ky.size()) / 2;
  Image2D tmp(w, h), out(w, h);
#pragma omp parallel for
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = -rx; j <= rx; ++j) s += kx[j + rx] * img.clamped(x + j, y);
      tmp.at(x, y) = s;
    }
#pragma omp parallel for
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = -ry; j <= ry; ++j) s += ky[j + ry] * tmp.clamped(x, y + j);
      out.at(x, y) = s;
    }
  return out;
}

struct Kernels {
  std::vector<double> g, d1, d2;
};

Kernels gaussian_kernels(double sigma) {
  const int r = radius_for(sigma);
  Kernels k;
  k.g.resize(2 * r + 1);
  k.d1.resize(2 * r + 1);
  k.d2.resize(2 * r + 1);
  double sum = 0.0;
  for (int j = -r; j <= r; ++j) sum += k.g[j + r] = std::exp(-0.5 * j * j / (sigma * sigma));
  for (double& v : k.g) v /= sum;
  // derivative kernels normalized on discrete ramps / parabolas so that
  // sum j d1(j) = 1 and sum j^2 d2(j) = 2 with sum d2 = 0
  double m1 = 0.0, mean2 = 0.0;
  for (int j = -r; j <= r; ++j) {
    k.d1[j + r] = j * k.g[j + r];
    m1 += j * k.d1[j + r];
    k.d2[j + r] = (j * j / (sigma * sigma) - 1.0) * k.g[j + r];
    mean2 += k.d2[j + r];
  }
  mean2 /= k.d2.size();
  double m2 = 0.0;
  for (int j = -r; j <= r; ++j) {
    k.d1[j + r] /= m1;
    k.d2[j + r] -= mean2;
    m2 += j * j * k.d2[j + r];
  }
  for (double& v : k.d2) v *= 2.0 / m2;
  return k;
}

}  // namespace

Image2D gaussian_blur(const Image2D& img, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "gaussian sigma must be > 0");
  const Kernels k = gaussian_kernels(sigma);
  return separable(img, k.g, k.g);
}

Hessian hessian(const Image2D& img, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "hessian sigma must be > 0");
  const Kernels k = gaussian_kernels(sigma);
  Hessian h{separable(img, k.d2, k.g), separable(img, k.d1, k.d1), separable(img, k.g, k.d2)};
  const double s2 = sigma * sigma;
  for (Image2D* m : {&h.xx, &h.xy, &h.yy})
    for (double& v : m->pixels()) v *= s2;
  return h;
}

Image2D convolve(const Image2D& img, const std::vector<double>& kernel, int radius) {
  const int n = 2 * radius + 1;
  require(radius >= 0 && kernel.size() == static_cast<std::size_t>(n) * n, ErrorCode::SizeMismatch,
          "kernel size does not match radius");
  const int w = img.width(), h = img.height();
  Image2D out(w, h);
#pragma omp parallel for
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = -radius; j <= radius; ++j)
        for (int i = -radius; i <= radius; ++i) s += kernel[(j + radius) * n + (i + radius)] * img.clamped(x + i, y + j);
      out.at(x, y) = s;
    }
  return out;
}

Image2D vesselness(const Image2D& img, double sigma, double beta, double c) {
  require(beta > 0.0, ErrorCode::InvalidArgument, "vesselness beta must be > 0");
  const Hessian h = hessian(img, sigma);
  const std::size_t n = img.size();
  std::vector<double> l1(n), l2(n);
  double s_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = h.xx.pixels()[i], b = h.xy.pixels()[i], d = h.yy.pixels()[i];
    const double mid = 0.5 * (a + d);
    const double rad = std::hypot(0.5 * (a - d), b);
    double e1 = mid - rad, e2 = mid + rad;
    if (std::abs(e1) > std::abs(e2)) std::swap(e1, e2);
    l1[i] = e1;
    l2[i] = e2;
    s_max = std::max(s_max, std::hypot(e1, e2));
  }
  Image2D out(img.width(), img.height());
  // curvature at round-off level means a flat image
  const double scale = std::max(std::abs(img.max()), std::abs(img.min()));
  if (s_max <= 1e-10 * std::max(scale, 1e-300)) return out;
  if (c <= 0.0) c = 0.5 * s_max;
  for (std::size_t i = 0; i < n; ++i) {
    if (l2[i] >= 0.0) continue;
    const double rb = l1[i] / l2[i];
    const double s2 = l1[i] * l1[i] + l2[i] * l2[i];
    out.pixels()[i] = std::exp(-rb * rb / (2.0 * beta * beta)) * (1.0 - std::exp(-s2 / (2.0 * c * c)));
  }
  return out;
}

Image2D vesselness_multiscale(const Image2D& img, const std::vector<double>& sigmas, double beta, double c) {
  require(!sigmas.empty(), ErrorCode::InvalidArgument, "vesselness needs at least one scale");
  Image2D out(img.width(), img.height());
  for (double s : sigmas) {
    const Image2D v = vesselness(img, s, beta, c);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = std::max(out.pixels()[i], v.pixels()[i]);
  }
  return out;
}

double otsu_threshold(const Image2D& img) {
  require(!img.empty(), ErrorCode::InvalidArgument, "otsu on empty image");
  const double lo = img.min(), hi = img.max();
  if (!(hi > lo)) return lo;
  std::array<double, 256> hist{};
  for (double p : img.pixels()) hist[std::min(255, static_cast<int>((p - lo) / (hi - lo) * 256.0))] += 1.0;
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_b = 0;
  for (int b = 0; b < 256; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_b = b;
    }
  }
  // upper edge of the last background bin
  return lo + (best_b + 1) * (hi - lo) / 256.0;
}

Image2D vessel_probability(const Image2D& img, const std::vector<double>& sigmas) {
  const Image2D v = vesselness_multiscale(img, sigmas);
  Image2D out(img.width(), img.height());
  if (!(v.max() > 0.0)) return out;
  const double t = otsu_threshold(v);
  for (std::size_t i = 0; i < v.size(); ++i) out.pixels()[i] = v.pixels()[i] >= t ? 1.0 : 0.0;
  return out;
}

}  // namespace cathlab::enhance
