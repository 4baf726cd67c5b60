#pragma once

// DRR enhancement: CLAHE, multi-scale LoG edge emphasis, vessel-selective
// piecewise-linear contrast, and the CNR / FWHM measures used to judge it.
// Also hosts the Hessian filters shared with the guidewire pipeline.

#include "cathlab/image.hpp"

#include <optional>
#include <vector>

namespace cathlab::enhance {

struct EnhanceParams {
  double clahe_clip = 0.03;      // fraction of tile pixels allowed per histogram bin
  int clahe_grid = 8;            // tiles per image side
  std::vector<double> log_sigmas{0.8, 1.2, 1.6};
  double log_weight = 0.5;
  bool log_negate = false;  // flip the kernel sign (response polarity only)
  std::vector<double> vesselness_sigmas{1.0, 2.0, 3.0};
  double vessel_gain = 1.4;
  double background_gain = 0.9;
  double vessel_threshold = 0.5;  // probability at which the vessel branch applies
  std::optional<double> vessel_offset;  // unset: chosen to keep the global mean

  void validate() const;
};

// --- Separable Gaussian filtering (clamp-to-edge borders) ---
Image2D gaussian_blur(const Image2D& img, double sigma);

struct Hessian {
  Image2D xx, xy, yy;
};
// Scale-normalized (sigma^2) Hessian of the Gaussian-smoothed image.
Hessian hessian(const Image2D& img, double sigma);

// Generic 2D correlation with an odd square kernel, clamp-to-edge borders.
Image2D convolve(const Image2D& img, const std::vector<double>& kernel, int radius);

// --- CLAHE ---
// Tile size in pixels. Histograms use 256 bins over the min-max normalized
// image; counts above clip * tile_pixels are redistributed uniformly and
// neighbouring tile mappings are blended bilinearly. Output lies in [0, 1].
Image2D clahe(const Image2D& img, double clip, int tile_w, int tile_h);

// --- LoG ---
// LoG(x, y) = -1/(pi s^4) [1 - r^2/(2 s^2)] exp(-r^2/(2 s^2)), sampled on a
// (2R+1)^2 grid with R = ceil(4 s). `remove_dc` subtracts the kernel mean so
// flat regions respond with exactly zero.
std::vector<double> log_kernel(double sigma, int* radius = nullptr, bool remove_dc = false);
double log_value(double x, double y, double sigma);
Image2D log_filter(const Image2D& img, double sigma, bool negate = false);

// --- Vessel-selective contrast ---
Image2D vessel_contrast(const Image2D& img, const Image2D& vessel_prob, const EnhanceParams& params);

// --- Vesselness (bright tubes on a dark background) ---
// Per pixel: eigenvalues ordered |l1| <= |l2|; V = 0 if l2 > 0, else
// exp(-Rb^2 / 2 beta^2) (1 - exp(-S^2 / 2 c^2)) with Rb = l1/l2 and
// S = sqrt(l1^2 + l2^2). c <= 0 selects half the maximum S over the image.
Image2D vesselness(const Image2D& img, double sigma, double beta = 0.5, double c = 0.0);
// Maximum response over scales.
Image2D vesselness_multiscale(const Image2D& img, const std::vector<double>& sigmas, double beta = 0.5,
                              double c = 0.0);

// Otsu's threshold over a 256-bin histogram of the image range.
double otsu_threshold(const Image2D& img);
// Binary vessel map from vesselness thresholded at Otsu's level.
Image2D vessel_probability(const Image2D& img, const std::vector<double>& sigmas);

// --- Pipeline ---
struct EnhanceResult {
  Image2D image;  // in [0, 1]
  Image2D vessel_prob;
};
// normalize -> CLAHE -> + w * max_sigma |LoG| -> vessel contrast -> normalize.
// An empty vessel_prob is derived with vessel_probability().
EnhanceResult enhance_pipeline(const Image2D& img, const Image2D& vessel_prob, const EnhanceParams& params);

// --- Measures ---
using Mask = std::vector<unsigned char>;
// |mean_fg - mean_bg| / std_bg (population std). Throws Undefined when std_bg = 0.
double cnr(const Image2D& img, const Mask& fg, const Mask& bg);
// Width at half height between the profile minimum and its peak, with
// linear interpolation at the two crossings.
double fwhm(const std::vector<double>& profile);
// FWHM of |d profile / dx|; an edge-sharpness measure.
double edge_fwhm(const std::vector<double>& profile);

}  // namespace cathlab::enhance
