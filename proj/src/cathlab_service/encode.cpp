#include "cathlab/service/encode.hpp"

#include "cathlab/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace cathlab::service {

namespace {

void put_u32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void chunk(Bytes& out, const char* type, const Bytes& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

Bytes encode_png_gray8(const Image2D& img) {
  require(!img.empty(), ErrorCode::InvalidArgument, "png: empty image");
  const int w = img.width(), h = img.height();
  const double lo = img.min(), hi = img.max();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  Bytes raw;
  raw.reserve(static_cast<std::size_t>(h) * (w + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < w; ++x)
      raw.push_back(static_cast<unsigned char>(std::clamp(std::lround((img.at(x, y) - lo) * scale), 0L, 255L)));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  Bytes z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    fail(ErrorCode::Io, "png: deflate failed");
  z.resize(zlen);

  Bytes out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  Bytes ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit gray, deflate, adaptive filtering, no interlace
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

Bytes encode_raw_f32(const Image2D& img) {
  static_assert(std::endian::native == std::endian::little, "raw encoder assumes a little-endian host");
  Bytes out(img.size() * sizeof(float));
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float f = static_cast<float>(img.pixels()[i]);
    std::memcpy(out.data() + i * sizeof(float), &f, sizeof(float));
  }
  return out;
}

FrameFormat parse_format(const std::string& s) {
  if (s == "png") return FrameFormat::Png;
  if (s == "raw") return FrameFormat::Raw;
  if (s == "pgm") return FrameFormat::Pgm;
  fail(ErrorCode::InvalidArgument, "unknown frame format '" + s + "' (png, raw, pgm)");
}

Bytes encode_frame(const Image2D& img, FrameFormat f) {
  switch (f) {
    case FrameFormat::Png: return encode_png_gray8(img);
    case FrameFormat::Raw: return encode_raw_f32(img);
    case FrameFormat::Pgm: return encode_pgm16(img);
  }
  fail(ErrorCode::InvalidArgument, "unknown frame format");
}

const char* mime_type(FrameFormat f) {
  switch (f) {
    case FrameFormat::Png: return "image/png";
    case FrameFormat::Raw: return "application/octet-stream";
    case FrameFormat::Pgm: return "image/x-portable-graymap";
  }
  return "application/octet-stream";
}

}  // namespace cathlab::service
