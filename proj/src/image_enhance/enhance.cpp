#include "cathlab/error.hpp"
#include "cathlab/image_enhance.hpp"
#include "cathlab/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cathlab::enhance {

void EnhanceParams::validate() const {
  require(clahe_clip > 0.0 && clahe_clip <= 1.0, ErrorCode::InvalidArgument, "clahe clip must be in (0, 1]");
  require(clahe_grid >= 1, ErrorCode::InvalidArgument, "clahe grid must be >= 1");
  for (double s : log_sigmas) require(s > 0.0, ErrorCode::InvalidArgument, "LoG sigmas must be > 0");
  for (double s : vesselness_sigmas) require(s > 0.0, ErrorCode::InvalidArgument, "vesselness sigmas must be > 0");
  require(vessel_gain > 0.0 && background_gain > 0.0, ErrorCode::InvalidArgument, "contrast gains must be > 0");
  require(log_weight >= 0.0, ErrorCode::InvalidArgument, "LoG weight must be >= 0");
}

Image2D clahe(const Image2D& img, double clip, int tile_w, int tile_h) {
  require(!img.empty(), ErrorCode::InvalidArgument, "clahe on empty image");
  require(clip > 0.0 && clip <= 1.0, ErrorCode::InvalidArgument, "clahe clip must be in (0, 1]");
  require(tile_w >= 1 && tile_h >= 1, ErrorCode::InvalidArgument, "clahe tile must be >= 1 px");
  require(tile_w <= img.width() && tile_h <= img.height(), ErrorCode::InvalidArgument,
          "clahe tile larger than the image");
  constexpr int kBins = 256;
  const int w = img.width(), h = img.height();
  const Image2D n = normalized(img);
  auto bin_of = [&](double v) { return std::min(kBins - 1, static_cast<int>(v * kBins)); };

  const int nx = (w + tile_w - 1) / tile_w, ny = (h + tile_h - 1) / tile_h;
  std::vector<std::array<double, kBins>> maps(static_cast<std::size_t>(nx) * ny);
  std::vector<double> cx(nx), cy(ny);
  for (int tx = 0; tx < nx; ++tx) cx[tx] = 0.5 * (tx * tile_w + std::min((tx + 1) * tile_w, w)) - 0.5;
  for (int ty = 0; ty < ny; ++ty) cy[ty] = 0.5 * (ty * tile_h + std::min((ty + 1) * tile_h, h)) - 0.5;

  for (int ty = 0; ty < ny; ++ty)
    for (int tx = 0; tx < nx; ++tx) {
      std::array<double, kBins> hist{};
      const int x1 = std::min((tx + 1) * tile_w, w), y1 = std::min((ty + 1) * tile_h, h);
      for (int y = ty * tile_h; y < y1; ++y)
        for (int x = tx * tile_w; x < x1; ++x) hist[bin_of(n.at(x, y))] += 1.0;
      const double count = static_cast<double>((x1 - tx * tile_w) * (y1 - ty * tile_h));
      const double limit = std::max(1.0, clip * count);
      double excess = 0.0;
      for (double& c : hist)
        if (c > limit) {
          excess += c - limit;
          c = limit;
        }
      auto& map = maps[static_cast<std::size_t>(ty) * nx + tx];
      double cdf = 0.0;
      for (int b = 0; b < kBins; ++b) {
        cdf += hist[b] + excess / kBins;
        map[b] = cdf / count;
      }
    }

  // bracketing tile centers and the blend weight along one axis
  auto locate = [](const std::vector<double>& c, double p, int& i0, double& t) {
    const int m = static_cast<int>(c.size());
    i0 = 0;
    while (i0 + 1 < m - 1 && p > c[i0 + 1]) ++i0;
    if (m == 1) {
      t = 0.0;
      return;
    }
    t = std::clamp((p - c[i0]) / (c[i0 + 1] - c[i0]), 0.0, 1.0);
  };

  Image2D out(w, h);
#pragma omp parallel for
  for (int y = 0; y < h; ++y) {
    int j0;
    double ty;
    locate(cy, y, j0, ty);
    const int j1 = std::min(j0 + 1, ny - 1);
    for (int x = 0; x < w; ++x) {
      int i0;
      double tx;
      locate(cx, x, i0, tx);
      const int i1 = std::min(i0 + 1, nx - 1);
      const int b = bin_of(n.at(x, y));
      const double a00 = maps[static_cast<std::size_t>(j0) * nx + i0][b];
      const double a01 = maps[static_cast<std::size_t>(j0) * nx + i1][b];
      const double a10 = maps[static_cast<std::size_t>(j1) * nx + i0][b];
      const double a11 = maps[static_cast<std::size_t>(j1) * nx + i1][b];
      out.at(x, y) = std::clamp((1 - ty) * ((1 - tx) * a00 + tx * a01) + ty * ((1 - tx) * a10 + tx * a11), 0.0, 1.0);
    }
  }
  return out;
}

double log_value(double x, double y, double sigma) {
  const double r2 = (x * x + y * y) / (2.0 * sigma * sigma);
  return -1.0 / (kPi * std::pow(sigma, 4)) * (1.0 - r2) * std::exp(-r2);
}

std::vector<double> log_kernel(double sigma, int* radius, bool remove_dc) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "LoG sigma must be > 0");
  const int r = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const int n = 2 * r + 1;
  std::vector<double> k(static_cast<std::size_t>(n) * n);
  double sum = 0.0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) sum += k[(j + r) * n + (i + r)] = log_value(i, j, sigma);
  if (remove_dc)
    for (double& v : k) v -= sum / k.size();
  if (radius) *radius = r;
  return k;
}

Image2D log_filter(const Image2D& img, double sigma, bool negate) {
  int r = 0;
  std::vector<double> k = log_kernel(sigma, &r, true);
  if (negate)
    for (double& v : k) v = -v;
  return convolve(img, k, r);
}

Image2D vessel_contrast(const Image2D& img, const Image2D& vessel_prob, const EnhanceParams& params) {
  params.validate();
  require(img.same_shape(vessel_prob), ErrorCode::SizeMismatch, "vessel probability map has different dims");
  Image2D out(img.width(), img.height());
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double p = vessel_prob.pixels()[i];
    require(p >= 0.0 && p <= 1.0, ErrorCode::InvalidArgument, "vessel probability outside [0, 1]");
    const double g = p >= params.vessel_threshold ? params.vessel_gain : params.background_gain;
    out.pixels()[i] = g * img.pixels()[i];
    in_sum += img.pixels()[i];
    out_sum += out.pixels()[i];
  }
  const double beta = params.vessel_offset ? *params.vessel_offset
                                           : (img.empty() ? 0.0 : (in_sum - out_sum) / static_cast<double>(img.size()));
  if (beta != 0.0)
    for (double& v : out.pixels()) v += beta;
  return out;
}

EnhanceResult enhance_pipeline(const Image2D& img, const Image2D& vessel_prob, const EnhanceParams& params) {
  params.validate();
  require(!img.empty(), ErrorCode::InvalidArgument, "enhance on empty image");
  const Image2D n = normalized(img);
  const int tw = std::max(1, (img.width() + params.clahe_grid - 1) / params.clahe_grid);
  const int th = std::max(1, (img.height() + params.clahe_grid - 1) / params.clahe_grid);
  Image2D fused = clahe(n, params.clahe_clip, tw, th);

  Image2D edge(img.width(), img.height());
  for (double s : params.log_sigmas) {
    const Image2D r = log_filter(fused, s, params.log_negate);
    for (std::size_t i = 0; i < edge.size(); ++i) edge.pixels()[i] = std::max(edge.pixels()[i], std::abs(r.pixels()[i]));
  }
  for (std::size_t i = 0; i < fused.size(); ++i) fused.pixels()[i] += params.log_weight * edge.pixels()[i];

  EnhanceResult res;
  res.vessel_prob = vessel_prob.empty() ? vessel_probability(n, params.vesselness_sigmas) : vessel_prob;
  res.image = normalized(vessel_contrast(fused, res.vessel_prob, params));
  return res;
}

double cnr(const Image2D& img, const Mask& fg, const Mask& bg) {
  require(fg.size() == img.size() && bg.size() == img.size(), ErrorCode::SizeMismatch, "mask dims differ from image");
  double sf = 0.0, sb = 0.0, sbb = 0.0;
  std::size_t nf = 0, nb = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.pixels()[i];
    if (fg[i]) {
      sf += v;
      ++nf;
    }
    if (bg[i]) {
      sb += v;
      ++nb;
    }
  }
  require(nf > 0 && nb > 0, ErrorCode::InvalidArgument, "CNR masks must be nonempty");
  const double mf = sf / nf, mb = sb / nb;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (bg[i]) sbb += (img.pixels()[i] - mb) * (img.pixels()[i] - mb);
  const double sd = std::sqrt(sbb / nb);
  require(sd > 0.0, ErrorCode::Undefined, "CNR undefined: background has zero variance");
  return std::abs(mf - mb) / sd;
}

double fwhm(const std::vector<double>& profile) {
  require(profile.size() >= 3, ErrorCode::InvalidArgument, "FWHM needs at least 3 samples");
  const auto peak_it = std::max_element(profile.begin(), profile.end());
  const std::size_t peak = static_cast<std::size_t>(peak_it - profile.begin());
  const double base = *std::min_element(profile.begin(), profile.end());
  const double half = base + 0.5 * (*peak_it - base);
  require(*peak_it > base, ErrorCode::Undefined, "FWHM undefined for a flat profile");
  std::size_t l = peak;
  while (l > 0 && profile[l - 1] > half) --l;
  std::size_t r = peak;
  while (r + 1 < profile.size() && profile[r + 1] > half) ++r;
  require(l > 0 && r + 1 < profile.size(), ErrorCode::Undefined, "profile has no half-maximum crossing on both sides");
  // crossings between l-1 and l, and between r and r+1
  const double xl = (l - 1) + (half - profile[l - 1]) / (profile[l] - profile[l - 1]);
  const double xr = r + (profile[r] - half) / (profile[r] - profile[r + 1]);
  return xr - xl;
}

double edge_fwhm(const std::vector<double>& profile) {
  require(profile.size() >= 4, ErrorCode::InvalidArgument, "edge profile too short");
  std::vector<double> d(profile.size() - 1);
  for (std::size_t i = 0; i + 1 < profile.size(); ++i) d[i] = std::abs(profile[i + 1] - profile[i]);
  return fwhm(d);
}

}  // namespace cathlab::enhance
