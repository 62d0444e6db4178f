#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "blade/image.hpp"
#include "blade/net.hpp"

namespace testutil {

inline blade::Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0,
                                 double hi = 255.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  blade::Image img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = d(gen);
  return img;
}

// Smooth test image: a few low-frequency cosines around 128.
inline blade::Image smooth_image(int w, int h) {
  blade::Image img(w, h);
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      img(m, n) = 128.0 + 40.0 * std::cos(0.07 * m + 0.3) * std::sin(0.05 * n + 1.1) +
                  25.0 * std::cos(0.04 * (m + n));
    }
  }
  return img;
}

inline double max_abs_diff(const blade::Image& a, const blade::Image& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

inline void randomize_taps(blade::FilterBank& bank, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (double& t : bank.taps) t = d(gen);
}

// Flux banks G = c_k D+ u + small noise, c_k random per filter: random but
// dissipative, so long evolutions stay bounded.
inline void randomize_diffusive_flux(blade::FilterBank& bx, blade::FilterBank& by,
                                     std::uint64_t seed, double noise = 1e-3) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> c(0.05, 0.4);
  std::normal_distribution<double> e(0.0, noise);
  for (double& t : bx.taps) t = e(gen);
  for (double& t : by.taps) t = e(gen);
  for (int k = 0; k < bx.num_filters(); ++k) {
    const double cx = c(gen);
    const double cy = c(gen);
    bx.tap(k, 0, 0) -= cx;
    bx.tap(k, 1, 0) += cx;
    by.tap(k, 0, 0) -= cy;
    by.tap(k, 0, 1) += cy;
  }
}

}  // namespace testutil
