#pragma once

#include <vector>

#include "blade/image.hpp"

namespace blade {

enum class Axis { x, y };
enum class Side { forward, backward };

/// u at (m, n) with replicate extension.
double sample_extended(const Image& img, int m, int n);

/// One-sided difference (D+ or D-) along `axis`, divided by dx. Differences
/// across the clamped border are zero.
Image finite_diff(const Image& img, Axis axis, Side side);

/// Centered 1-D Gaussian taps, radius ceil(4 sigma), normalized to sum 1.
/// sigma = 0 gives the single tap {1}.
std::vector<double> gaussian_taps(double sigma);

/// Separable Gaussian blur with replicate boundary. Throws on sigma < 0.
Image gaussian_convolve(const Image& img, double sigma);

/// Small 2-D kernel with odd dimensions and its origin at the center.
/// Taps are row-major: tap(dx, dy) for dx in [-rx, rx], dy in [-ry, ry].
struct Kernel {
  int width = 1;
  int height = 1;
  std::vector<double> taps{1.0};

  Kernel() = default;
  Kernel(int w, int h, std::vector<double> t);

  int rx() const { return width / 2; }
  int ry() const { return height / 2; }
  double operator()(int dx, int dy) const {
    return taps[static_cast<std::size_t>((dy + ry()) * width + (dx + rx()))];
  }
  double& operator()(int dx, int dy) {
    return taps[static_cast<std::size_t>((dy + ry()) * width + (dx + rx()))];
  }
  double sum() const;

  static Kernel delta();
  static Kernel gaussian(double sigma);
  /// k(-dx, -dy).
  Kernel reversed() const;
};

/// out(i) = sum_j k(j) img(i + j), replicate boundary.
Image correlate(const Image& img, const Kernel& k);
/// out(i) = sum_j k(j) img(i - j), replicate boundary.
Image convolve(const Image& img, const Kernel& k);
/// Full 2-D convolution of two kernels; support (w1+w2-1) x (h1+h2-1).
Kernel convolve(const Kernel& a, const Kernel& b);

/// Mean over factor x factor blocks. Dimensions must be divisible by factor.
Image downscale_area(const Image& img, int factor);

/// Value returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = 999.0;

/// 10 log10(peak^2 / MSE); kPsnrIdentical when MSE == 0.
double psnr(const Image& a, const Image& b, double peak = 255.0);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows with
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2. Images must be at least 11x11.
double mean_ssim(const Image& a, const Image& b, double peak = 255.0);

/// One of the 8 symmetries of the square: bit 0 flips x, bit 1 flips y,
/// bit 2 transposes (applied last).
Image dihedral(const Image& img, int k);

/// 0.299 R + 0.587 G + 0.114 B.
Image luma(const ColorImage& c);

}  // namespace blade
