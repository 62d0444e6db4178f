#include "blade/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

namespace blade {
namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void transform(std::vector<std::complex<double>>& data, int width, int height,
               int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(height, width, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

Spectrum fft2(const Image& img) {
  Spectrum s;
  s.width = img.width();
  s.height = img.height();
  s.data.assign(img.storage().begin(), img.storage().end());
  transform(s.data, s.width, s.height, FFTW_FORWARD);
  return s;
}

Image ifft2(const Spectrum& spec, double dx) {
  std::vector<std::complex<double>> buf = spec.data;
  transform(buf, spec.width, spec.height, FFTW_BACKWARD);
  Image out(spec.width, spec.height, 0.0, dx);
  const double norm = 1.0 / (static_cast<double>(spec.width) * spec.height);
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * norm;
  return out;
}

double laplacian_symbol(int k, int l, int width, int height, double dx) {
  const double cx = std::cos(2.0 * std::numbers::pi * k / width);
  const double cy = std::cos(2.0 * std::numbers::pi * l / height);
  return (2.0 * cx - 2.0 + 2.0 * cy - 2.0) / (dx * dx);
}

}  // namespace blade
