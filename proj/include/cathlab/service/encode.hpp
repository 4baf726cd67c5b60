#pragma once

// Byte encodings of rendered frames. The CLI writes the same bytes the
// HTTP service returns, so both go through these functions.

#include "cathlab/image.hpp"

#include <string>
#include <vector>

namespace cathlab::service {

using Bytes = std::vector<unsigned char>;

// 8-bit grayscale PNG of the min-max normalized image (constant images
// encode as black). Uncompressed-filter rows, zlib level 6.
Bytes encode_png_gray8(const Image2D& img);
// Little-endian float32 samples, row-major; matches save_image_raw.
Bytes encode_raw_f32(const Image2D& img);

enum class FrameFormat { Png, Raw, Pgm };
FrameFormat parse_format(const std::string& s);  // "png", "raw", "pgm"
Bytes encode_frame(const Image2D& img, FrameFormat f);
const char* mime_type(FrameFormat f);

}  // namespace cathlab::service
