#include "cathlab/image.hpp"

#include "cathlab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace cathlab {

namespace fs = std::filesystem;

Image2D::Image2D(int width, int height, double fill) : width_(width), height_(height) {
  require(width >= 0 && height >= 0, ErrorCode::InvalidArgument, "image dims must be >= 0");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image2D::Image2D(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  require(width >= 0 && height >= 0, ErrorCode::InvalidArgument, "image dims must be >= 0");
  require(pixels_.size() == static_cast<std::size_t>(width) * height, ErrorCode::SizeMismatch,
          "pixel count does not match image dims");
}

double Image2D::clamped(int x, int y) const {
  return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
}

double Image2D::bilinear(double x, double y) const {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double tx = x - fx, ty = y - fy;
  const double a = clamped(x0, y0), b = clamped(x0 + 1, y0);
  const double c = clamped(x0, y0 + 1), d = clamped(x0 + 1, y0 + 1);
  return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
}

double Image2D::min() const { return pixels_.empty() ? 0.0 : *std::min_element(pixels_.begin(), pixels_.end()); }
double Image2D::max() const { return pixels_.empty() ? 0.0 : *std::max_element(pixels_.begin(), pixels_.end()); }
double Image2D::mean() const {
  return pixels_.empty() ? 0.0 : std::accumulate(pixels_.begin(), pixels_.end(), 0.0) / pixels_.size();
}

Image2D normalized(const Image2D& img) {
  Image2D out(img.width(), img.height());
  const double lo = img.min(), hi = img.max();
  if (hi > lo)
    for (std::size_t i = 0; i < img.size(); ++i) out.pixels()[i] = (img.pixels()[i] - lo) / (hi - lo);
  return out;
}

Image2D inverted(const Image2D& img) {
  Image2D out = img;
  const double s = img.min() + img.max();
  for (double& p : out.pixels()) p = s - p;
  return out;
}

std::vector<unsigned char> encode_pgm16(const Image2D& img) {
  require(!img.empty(), ErrorCode::InvalidArgument, "cannot encode an empty image");
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n65535\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + 2 * img.size());
  const Image2D n = normalized(img);
  for (double p : n.pixels()) {
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(p, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  return out;
}

void save_pgm16(const Image2D& img, const fs::path& path) {
  const auto bytes = encode_pgm16(img);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

// Next header token, skipping whitespace and # comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image2D load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  if (pgm_token(in) != "P5") fail(ErrorCode::MalformedFile, path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(in));
    h = std::stoi(pgm_token(in));
    maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    fail(ErrorCode::MalformedFile, path.string() + ": bad PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) fail(ErrorCode::MalformedFile, path.string() + ": bad PGM header");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const int bps = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bps);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    fail(ErrorCode::SizeMismatch, path.string() + ": PGM payload shorter than header implies");
  Image2D img(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = bps == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.pixels()[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

void save_image_raw(const Image2D& img, const fs::path& path) {
  fs::path raw = path, side = path;
  if (path.extension() == ".json") raw.replace_extension(".raw");
  else side.replace_extension(".json");
  if (raw.has_parent_path()) fs::create_directories(raw.parent_path());
  nlohmann::json j{{"width", img.width()}, {"height", img.height()}, {"dtype", "float32"},
                   {"byte_order", "little"}, {"raw", raw.filename().string()}};
  {
    std::ofstream s(side);
    if (!s) fail(ErrorCode::Io, "cannot write " + side.string());
    s << j.dump(2) << '\n';
  }
  static_assert(std::endian::native == std::endian::little, "raw image writer assumes little-endian host");
  std::vector<float> f(img.pixels().begin(), img.pixels().end());
  std::ofstream out(raw, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
}

Image2D load_image_raw(const fs::path& path) {
  fs::path raw = path, side = path;
  if (path.extension() == ".json") raw.replace_extension(".raw");
  else side.replace_extension(".json");
  nlohmann::json j;
  int w = 0, h = 0;
  try {
    std::ifstream s(side);
    if (!s) fail(ErrorCode::Io, "cannot open " + side.string());
    s >> j;
    w = j.at("width").get<int>();
    h = j.at("height").get<int>();
    if (j.contains("raw")) raw = side.parent_path() / j["raw"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, "image sidecar " + side.string() + ": " + e.what());
  }
  if (w < 0 || h < 0) fail(ErrorCode::MalformedFile, "image sidecar: negative dims");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::ifstream in(raw, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorCode::Io, "cannot open " + raw.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != n * sizeof(float)) fail(ErrorCode::SizeMismatch, raw.string() + ": payload size does not match sidecar");
  in.seekg(0);
  std::vector<float> f(n);
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(bytes));
  return Image2D(w, h, std::vector<double>(f.begin(), f.end()));
}

}  // namespace cathlab
