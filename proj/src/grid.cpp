#include "blade/grid.hpp"

#include <cmath>
#include <numeric>

namespace blade {

double sample_extended(const Image& img, int m, int n) {
  return img.at_clamped(m, n);
}

Image finite_diff(const Image& img, Axis axis, Side side) {
  const int w = img.width();
  const int h = img.height();
  const double inv_dx = 1.0 / img.dx();
  Image out(w, h, 0.0, img.dx());
  const int step = side == Side::forward ? 1 : -1;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double here = img(m, n);
      const double there = axis == Axis::x ? img.at_clamped(m + step, n)
                                           : img.at_clamped(m, n + step);
      out(m, n) = (side == Side::forward ? there - here : here - there) * inv_dx;
    }
  }
  return out;
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("gaussian sigma must be non-negative");
  }
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= total;
  return taps;
}

namespace {

// Separable correlation with a symmetric 1-D kernel, replicate boundary.
Image separable(const Image& img, const std::vector<double>& taps) {
  const int w = img.width();
  const int h = img.height();
  const int r = static_cast<int>(taps.size() / 2);
  Image tmp(w, h, 0.0, img.dx());
  Image out(w, h, 0.0, img.dx());
  std::vector<double> row(static_cast<std::size_t>(w + 2 * r));
  for (int n = 0; n < h; ++n) {
    for (int m = -r; m < w + r; ++m) row[m + r] = img.at_clamped(m, n);
    for (int m = 0; m < w; ++m) {
      double acc = 0.0;
      for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
        acc += taps[k] * row[m + k];
      }
      tmp(m, n) = acc;
    }
  }
  std::vector<double> col(static_cast<std::size_t>(h + 2 * r));
  for (int m = 0; m < w; ++m) {
    for (int n = -r; n < h + r; ++n) col[n + r] = tmp.at_clamped(m, n);
    for (int n = 0; n < h; ++n) {
      double acc = 0.0;
      for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
        acc += taps[k] * col[n + k];
      }
      out(m, n) = acc;
    }
  }
  return out;
}

}  // namespace

Image gaussian_convolve(const Image& img, double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  if (taps.size() == 1) return img;
  return separable(img, taps);
}

Kernel::Kernel(int w, int h, std::vector<double> t)
    : width(w), height(h), taps(std::move(t)) {
  if (w < 1 || h < 1 || w % 2 == 0 || h % 2 == 0) {
    throw InvalidArgument("kernel dimensions must be odd and positive");
  }
  if (taps.size() != static_cast<std::size_t>(w) * h) {
    throw InvalidArgument("kernel tap count does not match dimensions");
  }
}

double Kernel::sum() const {
  return std::accumulate(taps.begin(), taps.end(), 0.0);
}

Kernel Kernel::delta() { return Kernel(1, 1, {1.0}); }

Kernel Kernel::gaussian(double sigma) {
  const std::vector<double> g = gaussian_taps(sigma);
  const int size = static_cast<int>(g.size());
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  for (int j = 0; j < size; ++j) {
    for (int i = 0; i < size; ++i) taps[j * size + i] = g[i] * g[j];
  }
  return Kernel(size, size, std::move(taps));
}

Kernel Kernel::reversed() const {
  Kernel out = *this;
  std::reverse(out.taps.begin(), out.taps.end());
  return out;
}

Image correlate(const Image& img, const Kernel& k) {
  const int w = img.width();
  const int h = img.height();
  Image out(w, h, 0.0, img.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      double acc = 0.0;
      for (int dy = -k.ry(); dy <= k.ry(); ++dy) {
        for (int dx = -k.rx(); dx <= k.rx(); ++dx) {
          acc += k(dx, dy) * img.at_clamped(m + dx, n + dy);
        }
      }
      out(m, n) = acc;
    }
  }
  return out;
}

Image convolve(const Image& img, const Kernel& k) {
  return correlate(img, k.reversed());
}

Kernel convolve(const Kernel& a, const Kernel& b) {
  Kernel out(a.width + b.width - 1, a.height + b.height - 1,
             std::vector<double>(static_cast<std::size_t>(a.width + b.width - 1) *
                                     (a.height + b.height - 1),
                                 0.0));
  for (int ay = -a.ry(); ay <= a.ry(); ++ay) {
    for (int ax = -a.rx(); ax <= a.rx(); ++ax) {
      for (int by = -b.ry(); by <= b.ry(); ++by) {
        for (int bx = -b.rx(); bx <= b.rx(); ++bx) {
          out(ax + bx, ay + by) += a(ax, ay) * b(bx, by);
        }
      }
    }
  }
  return out;
}

Image downscale_area(const Image& img, int factor) {
  if (factor < 1) throw InvalidArgument("downscale factor must be >= 1");
  if (img.width() % factor != 0 || img.height() % factor != 0) {
    throw InvalidArgument("image dimensions " + std::to_string(img.width()) +
                          "x" + std::to_string(img.height()) +
                          " not divisible by factor " + std::to_string(factor));
  }
  const int w = img.width() / factor;
  const int h = img.height() / factor;
  Image out(w, h, 0.0, img.dx() * factor);
  const double scale = 1.0 / (static_cast<double>(factor) * factor);
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      double acc = 0.0;
      for (int j = 0; j < factor; ++j) {
        for (int i = 0; i < factor; ++i) acc += img(m * factor + i, n * factor + j);
      }
      out(m, n) = acc * scale;
    }
  }
  return out;
}

double psnr(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0)) throw InvalidArgument("psnr peak must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;

std::vector<double> ssim_window() {
  std::vector<double> g(2 * kSsimRadius + 1);
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    g[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
  }
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= total;
  return g;
}

// 'Valid' separable filtering: output is (w - 2r) x (h - 2r).
std::vector<double> valid_filter(const std::vector<double>& src, int w, int h,
                                 const std::vector<double>& g) {
  const int r = static_cast<int>(g.size() / 2);
  const int ow = w - 2 * r;
  const int oh = h - 2 * r;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < ow; ++m) {
      double acc = 0.0;
      for (int k = 0; k < static_cast<int>(g.size()); ++k) {
        acc += g[k] * src[static_cast<std::size_t>(n) * w + m + k];
      }
      tmp[static_cast<std::size_t>(n) * ow + m] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int n = 0; n < oh; ++n) {
    for (int m = 0; m < ow; ++m) {
      double acc = 0.0;
      for (int k = 0; k < static_cast<int>(g.size()); ++k) {
        acc += g[k] * tmp[static_cast<std::size_t>(n + k) * ow + m];
      }
      out[static_cast<std::size_t>(n) * ow + m] = acc;
    }
  }
  return out;
}

}  // namespace

double mean_ssim(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "mean_ssim");
  const int w = a.width();
  const int h = a.height();
  if (w < 2 * kSsimRadius + 1 || h < 2 * kSsimRadius + 1) {
    throw InvalidArgument("mean_ssim requires images of at least 11x11");
  }
  const std::vector<double> g = ssim_window();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = valid_filter(a.storage(), w, h, g);
  const auto mu_b = valid_filter(b.storage(), w, h, g);
  const auto s_aa = valid_filter(aa, w, h, g);
  const auto s_bb = valid_filter(bb, w, h, g);
  const auto s_ab = valid_filter(ab, w, h, g);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = s_aa[i] - ma * ma;
    const double vb = s_bb[i] - mb * mb;
    const double cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

Image luma(const ColorImage& c) {
  Image out(c.width(), c.height(), 0.0, c.r.dx());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * c.r[i] + 0.587 * c.g[i] + 0.114 * c.b[i];
  }
  return out;
}

Image dihedral(const Image& img, int k) {
  if (k < 0 || k > 7) throw InvalidArgument("dihedral index must be in [0, 7]");
  const int w = img.width();
  const int h = img.height();
  const bool fx = k & 1;
  const bool fy = k & 2;
  const bool tr = k & 4;
  Image out(tr ? h : w, tr ? w : h, 0.0, img.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const int mm = fx ? w - 1 - m : m;
      const int nn = fy ? h - 1 - n : n;
      if (tr) {
        out(nn, mm) = img(m, n);
      } else {
        out(mm, nn) = img(m, n);
      }
    }
  }
  return out;
}

}  // namespace blade
