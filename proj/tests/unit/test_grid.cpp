#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"

#include "blade/grid.hpp"
#include "blade/image_io.hpp"

using namespace blade;
using testutil::max_abs_diff;
using testutil::random_image;

TEST_CASE("image construction and invariants") {
  CHECK_THROWS_AS(Image(0, 3), InvalidArgument);
  CHECK_THROWS_AS(Image(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
  Image a(2, 2, std::vector<double>{1, 2, 3, 4});
  CHECK(a(1, 0) == 2);
  CHECK(a(0, 1) == 3);
  CHECK(a.sum() == 10);
  CHECK(a.mean() == 2.5);
  CHECK(a.all_finite());
  a[2] = std::nan("");
  CHECK_FALSE(a.all_finite());
  CHECK_THROWS_AS(ColorImage(Image(2, 2), Image(2, 2), Image(3, 2)), InvalidArgument);
  CHECK_THROWS_AS(FrameSequence({Image(2, 2), Image(2, 3)}, 1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(FrameSequence({Image(2, 2)}, 0.0).validate(), InvalidArgument);
}

TEST_CASE("sample_extended clamps") {
  CHECK(sample_extended(Image(1, 1, std::vector<double>{5}), -3, 7) == 5);
  const Image a(2, 2, std::vector<double>{1, 2, 3, 4});
  CHECK(sample_extended(a, -1, -1) == 1);
  CHECK(sample_extended(a, 1, 0) == 2);
  CHECK(sample_extended(a, 5, 5) == 4);
}

TEST_CASE("finite differences") {
  const Image row(3, 1, std::vector<double>{1, 3, 6});
  const Image fx = finite_diff(row, Axis::x, Side::forward);
  CHECK(fx[0] == 2);
  CHECK(fx[1] == 3);
  CHECK(fx[2] == 0);
  const Image bx = finite_diff(row, Axis::x, Side::backward);
  CHECK(bx[0] == 0);
  CHECK(bx[1] == 2);
  CHECK(bx[2] == 3);

  Image half(3, 1, std::vector<double>{1, 3, 6}, 0.5);
  CHECK(finite_diff(half, Axis::x, Side::forward)[0] == 4);

  const Image c(4, 5, 7.0);
  for (Axis ax : {Axis::x, Axis::y}) {
    for (Side s : {Side::forward, Side::backward}) {
      const Image d = finite_diff(c, ax, s);
      CHECK(d.min() == 0);
      CHECK(d.max() == 0);
    }
  }
  const Image col(1, 3, std::vector<double>{1, 3, 6});
  CHECK(finite_diff(col, Axis::y, Side::forward)[1] == 3);
}

TEST_CASE("gaussian_convolve") {
  const Image r = random_image(9, 7, 1);
  CHECK(max_abs_diff(gaussian_convolve(r, 0.0), r) == 0.0);
  const Image c(10, 10, 42.0);
  CHECK(max_abs_diff(gaussian_convolve(c, 2.3), c) < 1e-12);
  CHECK_THROWS_AS(gaussian_convolve(r, -1.0), InvalidArgument);

  // impulse response against the truncated, normalized 1-D kernel
  Image imp(31, 31, 0.0);
  imp(15, 15) = 1.0;
  const Image g = gaussian_convolve(imp, 1.0);
  const int radius = 4;
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) norm += std::exp(-0.5 * k * k);
  double err = 0.0;
  for (int n = 0; n < 31; ++n) {
    for (int m = 0; m < 31; ++m) {
      const int dx = m - 15;
      const int dy = n - 15;
      double expect = 0.0;
      if (std::abs(dx) <= radius && std::abs(dy) <= radius) {
        expect = std::exp(-0.5 * (dx * dx + dy * dy)) / (norm * norm);
      }
      err = std::max(err, std::abs(g(m, n) - expect));
    }
  }
  CHECK(err < 1e-15);
  const auto taps = gaussian_taps(1.0);
  CHECK(taps.size() == 9);
  CHECK(gaussian_taps(0.0).size() == 1);
}

TEST_CASE("kernels and correlation") {
  const Image r = random_image(8, 6, 2);
  CHECK(max_abs_diff(correlate(r, Kernel::delta()), r) == 0.0);
  Kernel k(3, 1, {1.0, 2.0, 3.0});
  const Image c = correlate(r, k);
  const Image v = convolve(r, k);
  for (int n = 0; n < 6; ++n) {
    for (int m = 0; m < 8; ++m) {
      const double ec = r.at_clamped(m - 1, n) + 2 * r(m, n) + 3 * r.at_clamped(m + 1, n);
      const double ev = 3 * r.at_clamped(m - 1, n) + 2 * r(m, n) + r.at_clamped(m + 1, n);
      CHECK(c(m, n) == doctest::Approx(ec).epsilon(1e-14));
      CHECK(v(m, n) == doctest::Approx(ev).epsilon(1e-14));
    }
  }
  const Kernel kk = convolve(k, Kernel(1, 3, {1.0, 1.0, 1.0}));
  CHECK(kk.width == 3);
  CHECK(kk.height == 3);
  CHECK(kk.sum() == doctest::Approx(18.0));
  CHECK(k.reversed()(-1, 0) == 3.0);
  CHECK_THROWS_AS(Kernel(2, 1, {1.0, 1.0}), InvalidArgument);
}

TEST_CASE("downscale_area") {
  const Image a(2, 2, std::vector<double>{1, 2, 3, 4});
  const Image d = downscale_area(a, 2);
  CHECK(d.width() == 1);
  CHECK(d[0] == 2.5);
  const Image c(12, 8, 3.25);
  const Image dc = downscale_area(c, 4);
  CHECK(dc.width() == 3);
  CHECK(dc.height() == 2);
  CHECK(dc.min() == 3.25);
  CHECK(dc.max() == 3.25);
  Image ramp(4, 4);
  for (int n = 0; n < 4; ++n) {
    for (int m = 0; m < 4; ++m) ramp(m, n) = m + 4 * n;
  }
  const Image dr = downscale_area(ramp, 2);
  for (int n = 0; n < 2; ++n) {
    for (int m = 0; m < 2; ++m) {
      double s = 0.0;
      for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) s += ramp(2 * m + i, 2 * n + j);
      }
      CHECK(dr(m, n) == doctest::Approx(s / 4));
    }
  }
  CHECK_THROWS_AS(downscale_area(Image(5, 4), 2), InvalidArgument);
}

TEST_CASE("psnr") {
  const Image r = random_image(5, 5, 3);
  CHECK(psnr(r, r) == kPsnrIdentical);
  const Image z(4, 4, 0.0);
  const Image f(4, 4, 255.0);
  CHECK(psnr(z, f, 255.0) == doctest::Approx(0.0));
  const Image a(3, 3, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Image b(3, 3, std::vector<double>{1, 4, 3, 4, 2, 6, 7, 8, 10});
  const double mse = (4.0 + 9.0 + 1.0) / 9.0;
  CHECK(psnr(a, b, 255.0) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / mse)));
}

namespace {

double ssim_oracle(const Image& a, const Image& b, double peak) {
  double w[11][11];
  double norm = 0.0;
  for (int j = 0; j < 11; ++j) {
    for (int i = 0; i < 11; ++i) {
      w[j][i] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      norm += w[j][i];
    }
  }
  const double c1 = std::pow(0.01 * peak, 2);
  const double c2 = std::pow(0.03 * peak, 2);
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height(); ++y) {
    for (int x = 0; x + 11 <= a.width(); ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = 0; j < 11; ++j) {
        for (int i = 0; i < 11; ++i) {
          const double wt = w[j][i] / norm;
          const double p = a(x + i, y + j);
          const double q = b(x + i, y + j);
          ma += wt * p;
          mb += wt * q;
          saa += wt * p * p;
          sbb += wt * q * q;
          sab += wt * p * q;
        }
      }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST_CASE("mean_ssim") {
  const Image r = random_image(20, 16, 4);
  CHECK(mean_ssim(r, r) == doctest::Approx(1.0).epsilon(1e-12));
  Image inv = r;
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 255.0 - r[i];
  CHECK(mean_ssim(r, inv) < 1.0);
  CHECK(mean_ssim(r, inv) < 0.0);
  const Image noisy = r + random_image(20, 16, 5, -30.0, 30.0);
  CHECK(mean_ssim(r, noisy) == doctest::Approx(ssim_oracle(r, noisy, 255.0)).epsilon(1e-10));
  CHECK(mean_ssim(r, noisy, 1.0) == doctest::Approx(ssim_oracle(r, noisy, 1.0)).epsilon(1e-10));
  CHECK_THROWS_AS(mean_ssim(Image(10, 10), Image(10, 10)), InvalidArgument);
}

TEST_CASE("luma and dihedral") {
  const ColorImage gray(Image(2, 2, 7.0), Image(2, 2, 7.0), Image(2, 2, 7.0));
  CHECK(luma(gray)[3] == doctest::Approx(7.0));
  const ColorImage red(Image(1, 1, 1.0), Image(1, 1, 0.0), Image(1, 1, 0.0));
  CHECK(luma(red)[0] == doctest::Approx(0.299));
  const ColorImage rc(random_image(6, 5, 6), random_image(6, 5, 7), random_image(6, 5, 8));
  const Image y = luma(rc);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(0.299 * rc.r[i] + 0.587 * rc.g[i] + 0.114 * rc.b[i]));
  }

  const Image a = random_image(5, 3, 9);
  CHECK(max_abs_diff(dihedral(a, 0), a) == 0.0);
  const Image t = dihedral(a, 4);
  CHECK(t.width() == 3);
  CHECK(t.height() == 5);
  for (int k = 0; k < 8; ++k) {
    CHECK(dihedral(a, k).sum() == doctest::Approx(a.sum()));
  }
  CHECK(dihedral(a, 1)(0, 0) == a(4, 0));
  CHECK(dihedral(a, 2)(0, 0) == a(0, 2));
}

TEST_CASE("image file round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "blade_grid_io";
  std::filesystem::create_directories(dir);
  Image a(7, 5);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i * 7 % 256);
  write_image(dir / "a.png", a);
  CHECK(max_abs_diff(read_image(dir / "a.png"), a) == 0.0);
  write_image(dir / "a.pgm", a);
  CHECK(max_abs_diff(read_image(dir / "a.pgm"), a) == 0.0);

  Image fine(4, 4);
  for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = 0.0625 * static_cast<double>(i);
  write_image(dir / "f.png", fine, WriteOptions{16, 1.0});
  CHECK(max_abs_diff(read_image(dir / "f.png", 1.0), fine) < 1.0 / 65535.0);

  Image clip(2, 1, std::vector<double>{-5.0, 300.0});
  write_image(dir / "c.png", clip);
  const Image cr = read_image(dir / "c.png");
  CHECK(cr[0] == 0.0);
  CHECK(cr[1] == 255.0);

  const ColorImage col(random_image(4, 3, 1), random_image(4, 3, 2), random_image(4, 3, 3));
  write_color_image(dir / "c.ppm", col);
  const ColorImage back = read_color_image(dir / "c.ppm");
  CHECK(max_abs_diff(back.g, col.g) <= 0.5);
  CHECK(max_abs_diff(read_image(dir / "c.ppm"), luma(back)) < 1e-12);

  CHECK_THROWS_AS(read_image(dir / "missing.png"), IoError);
  CHECK_THROWS_AS(write_image(dir / "x.bmp", a), Error);
  std::filesystem::remove_all(dir);
}
