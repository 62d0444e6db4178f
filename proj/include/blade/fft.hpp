#pragma once

#include <complex>
#include <vector>

#include "blade/image.hpp"

namespace blade {

/// Complex spectrum of a width x height image, row-major, unnormalized
/// forward DFT: X[k,l] = sum x[m,n] exp(-2 pi i (k m / W + l n / H)).
struct Spectrum {
  int width = 0;
  int height = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& operator()(int k, int l) {
    return data[static_cast<std::size_t>(l) * width + k];
  }
  std::complex<double> operator()(int k, int l) const {
    return data[static_cast<std::size_t>(l) * width + k];
  }
};

Spectrum fft2(const Image& img);
/// Inverse DFT (with 1/(W H) normalization); the real part is returned.
Image ifft2(const Spectrum& spec, double dx = 1.0);

/// Symbol of the periodic 5-point Laplacian at frequency (k, l).
double laplacian_symbol(int k, int l, int width, int height, double dx);

}  // namespace blade
