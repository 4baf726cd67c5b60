#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace cathlab {

// Row-major scalar image; x is the column (detector u), y the row (v).
class Image2D {
 public:
  Image2D() = default;
  Image2D(int width, int height, double fill = 0.0);
  Image2D(int width, int height, std::vector<double> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  // Clamp-to-edge access.
  double clamped(int x, int y) const;
  // Bilinear sample at continuous pixel coordinates (pixel centers at integers).
  double bilinear(double x, double y) const;

  const std::vector<double>& pixels() const { return pixels_; }
  std::vector<double>& pixels() { return pixels_; }

  double min() const;
  double max() const;
  double mean() const;
  bool same_shape(const Image2D& o) const { return width_ == o.width_ && height_ == o.height_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

// Linear rescale to [0, 1]; a constant image maps to all zeros.
Image2D normalized(const Image2D& img);
// max + min - x, which keeps the range and flips polarity.
Image2D inverted(const Image2D& img);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples) after min-max
// normalization. Returns the encoded bytes so callers can stream them.
std::vector<unsigned char> encode_pgm16(const Image2D& img);
void save_pgm16(const Image2D& img, const std::filesystem::path& path);
// Reads P5 with 8- or 16-bit samples; values are scaled to [0, 1].
Image2D load_pgm(const std::filesystem::path& path);

// Lossless pipeline format: raw little-endian float32 plus a JSON sidecar.
void save_image_raw(const Image2D& img, const std::filesystem::path& path);
Image2D load_image_raw(const std::filesystem::path& path);

}  // namespace cathlab
