#pragma once

#include <filesystem>

#include "blade/image.hpp"

namespace blade {

// File samples map linearly onto [0, peak]: a stored value s with maximum
// code `maxval` reads as s * peak / maxval. Export clamps to [0, peak] and
// quantizes to the requested bit depth; this is the only quantization step.

struct WriteOptions {
  int bit_depth = 8;  // 8 or 16
  double peak = 255.0;
};

/// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary
/// PGM/PPM. Color inputs are reduced to luma.
Image read_image(const std::filesystem::path& path, double peak = 255.0);
ColorImage read_color_image(const std::filesystem::path& path,
                            double peak = 255.0);

/// Format chosen by extension: .png, .pgm, .ppm (color only).
void write_image(const std::filesystem::path& path, const Image& img,
                 const WriteOptions& opts = {});
void write_color_image(const std::filesystem::path& path, const ColorImage& img,
                       const WriteOptions& opts = {});

}  // namespace blade
