#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "blade/apps.hpp"
#include "blade/grid.hpp"
#include "blade/image_io.hpp"
#include "blade/pipeline.hpp"

using namespace blade;
using testutil::max_abs_diff;
using testutil::random_image;

namespace {

SelectionConfig small_selection() {
  SelectionConfig s = SelectionConfig::with_counts(4, 2, 1);
  s.strength_thresholds = {10.0};
  return s;
}

SequenceModel random_model(std::uint64_t seed, double dt, Footprint fp = {3, 3}) {
  FilterBank b(fp, small_selection());
  testutil::randomize_taps(b, seed, 0.02);
  return SequenceModel::plain(b, Integrator::euler, dt);
}

SequenceModel zero_model(double dt) {
  return SequenceModel::plain(FilterBank(Footprint{3, 3}, small_selection()), Integrator::euler,
                              dt);
}

double fidelity(const DegradationModel& dm, const Image& u, const Image& f) {
  const Image r = f - degrade(dm, u);
  return std::sqrt(dot(r, r));
}

}  // namespace

TEST_CASE("degradation model") {
  const DegradationModel dm = DegradationModel::gaussian(1.0, 1, 2.0);
  CHECK(dm.psf.sum() == doctest::Approx(1.0).epsilon(1e-12));
  DegradationModel bad = dm;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = dm;
  bad.psf.taps[0] += 0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  const DegradationModel dm4 = DegradationModel::gaussian(0.4, 4, 0.35);
  const Image u = random_image(24, 20, 1);
  const Image d = degrade(dm4, u);
  CHECK(d.width() == 6);
  CHECK(d.height() == 5);
  CHECK(d(1, 1) == doctest::Approx(correlate(u, dm4.psf)(4, 4)));

  for (const DegradationModel* m : {&dm, &dm4}) {
    const Image x = random_image(24, 20, 2, -1, 1);
    const Image y = random_image(24 / m->subsample_factor, 20 / m->subsample_factor, 3, -1, 1);
    const double lhs = dot(degrade(*m, x), y);
    const double rhs = dot(x, degrade_adjoint(*m, y, 24, 20));
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
  }
  Kernel k(3, 5, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  const Image x = random_image(9, 8, 4, -1, 1);
  const Image y = random_image(9, 8, 5, -1, 1);
  CHECK(dot(correlate(x, k), y) == doctest::Approx(dot(x, correlate_adjoint(y, k))).epsilon(1e-12));
}

TEST_CASE("restoration step") {
  const Image u = random_image(16, 16, 6);
  const Image f = random_image(16, 16, 7);
  const SequenceModel m = random_model(8, 0.5);
  DegradationModel none = DegradationModel::gaussian(1.0, 1, 0.0);
  CHECK(max_abs_diff(restore_step(m, u, f, none), euler_step(m, u)) == 0.0);

  const DegradationModel id = DegradationModel::gaussian(0.0, 1, 2.0);
  CHECK(max_abs_diff(restore_step(zero_model(0.5), u, f, id), f) < 1e-12);
}

TEST_CASE("absorbed deconvolution filters") {
  const SequenceModel m = random_model(9, 0.5);
  const DegradationModel zero_l = DegradationModel::gaussian(1.0, 1, 0.0);
  CHECK(absorb_deconv(m.bank, zero_l).taps == m.bank.taps);

  const DegradationModel delta = DegradationModel::gaussian(0.0, 1, 0.7);
  const FilterBank a = absorb_deconv(m.bank, delta);
  for (int k = 0; k < a.num_filters(); ++k) {
    CHECK(a.tap(k, 0, 0) == doctest::Approx(m.bank.tap(k, 0, 0) - 0.7));
    CHECK(a.tap(k, 1, 0) == m.bank.tap(k, 1, 0));
  }

  const DegradationModel dm = DegradationModel::gaussian(1.0, 1, 2.0);
  CHECK_THROWS_AS(absorb_deconv(m.bank, dm), InvalidArgument);
  const FilterBank big = expand_footprint(m.bank, Footprint{17, 17});
  CHECK(big.tap(2, 1, -1) == m.bank.tap(2, 1, -1));
  CHECK(big.tap(2, 5, 5) == 0.0);
  SequenceModel absorbed = m;
  absorbed.bank = absorb_deconv(big, dm);
  const Image f = gaussian_convolve(testutil::smooth_image(48, 48), 1.0);
  const Image u = random_image(48, 48, 10);
  Image c = convolve(f, dm.psf.reversed());
  c *= dm.lambda;
  const Image ua = absorbed_deconv_step(absorbed, u, c);
  const Image ue = restore_step(m, u, f, dm);
  double err = 0.0;
  for (int n = 10; n < 38; ++n) {
    for (int x = 10; x < 38; ++x) err = std::max(err, std::abs(ua(x, n) - ue(x, n)));
  }
  CHECK(err < 1e-10);

  // constants are fixed points of the full deconvolution
  const Image flat(32, 32, 90.0);
  CHECK(max_abs_diff(deconvolve(zero_model(0.5), flat, dm, 5), flat) < 1e-9);
}

TEST_CASE("lanczos and upscaling") {
  CHECK(lanczos3(0.0) == 1.0);
  CHECK(std::abs(lanczos3(1.0)) < 1e-15);
  CHECK(std::abs(lanczos3(-2.0)) < 1e-15);
  CHECK(lanczos3(3.5) == 0.0);
  const Image f = random_image(12, 10, 11);
  CHECK(max_abs_diff(lanczos_upscale(f, 1), f) == 0.0);
  const Image up = lanczos_upscale(f, 4);
  CHECK(up.width() == 48);
  CHECK(up(8, 4) == doctest::Approx(f(2, 1)));
  CHECK(max_abs_diff(lanczos_upscale(Image(5, 5, 3.0), 3), Image(15, 15, 3.0)) < 1e-12);

  const DegradationModel id = DegradationModel::gaussian(0.0, 1, 0.0);
  CHECK(max_abs_diff(upscale(zero_model(0.5), f, id, 5), f) == 0.0);

  const DegradationModel dm = DegradationModel::gaussian(0.4, 4, 0.35);
  const Image truth = testutil::smooth_image(64, 64);
  const Image obs = degrade(dm, truth);
  double prev = fidelity(dm, upscale(zero_model(0.5), obs, dm, 0), obs);
  for (int k = 1; k <= 5; ++k) {
    const double now = fidelity(dm, upscale(zero_model(0.5), obs, dm, k), obs);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("projected upscaling") {
  const DegradationModel dm = DegradationModel::gaussian(0.4, 4, 0.35);
  const UpscaleProjector proj(dm, 32, 24);
  const Image v = random_image(32, 24, 12, -1, 1);
  const Image p = proj.project(v);
  CHECK(max_abs_diff(proj.project(p), p) < 1e-10);
  const Image ap = proj.apply(p);
  CHECK(std::sqrt(dot(ap, ap)) < 1e-10);
  const Image f = random_image(8, 6, 13);
  const Image s = proj.satisfy(random_image(32, 24, 14), f);
  CHECK(max_abs_diff(proj.apply(s), f) < 1e-8);
  CHECK_THROWS_AS(UpscaleProjector(dm, 30, 24), InvalidArgument);

  const SequenceModel m = random_model(15, 0.5);
  for (int k = 0; k <= 4; ++k) {
    const Image u = projected_upscale(m, f, dm, k);
    CHECK(max_abs_diff(proj.apply(u), f) < 1e-8);
  }
}

TEST_CASE("chan-vese") {
  CHECK(heaviside_eps(0.0, 1.0) == 0.5);
  CHECK(delta_eps(0.0, 2.0) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)));
  const Image cb = checkerboard_phi(20, 20);
  CHECK(cb(5, 5) == doctest::Approx(1.0));
  CHECK(cb(15, 5) == doctest::Approx(-1.0));

  // two-level image, halves
  const double a = 0.2;
  const double b = 0.8;
  Image f(64, 48);
  for (int n = 0; n < 48; ++n) {
    for (int m = 0; m < 64; ++m) f(m, n) = m < 32 ? a : b;
  }
  LevelSet ls;
  ls.phi = checkerboard_phi(64, 48);
  ls.mu = 0.2;
  auto check_converged = [&](const LevelSet& r) {
    const double lo = std::min(r.c1[0], r.c2[0]);
    const double hi = std::max(r.c1[0], r.c2[0]);
    CHECK(lo == doctest::Approx(a).epsilon(1e-3).scale(1.0));
    CHECK(hi == doctest::Approx(b).epsilon(1e-3).scale(1.0));
    for (int n = 0; n < 48; ++n) {
      for (int m = 0; m < 63; ++m) {
        if ((r.phi(m, n) >= 0) != (r.phi(m + 1, n) >= 0)) {
          CHECK(std::abs(m + 0.5 - 31.5) <= 1.0);
        }
      }
      CHECK((r.phi(0, n) >= 0) != (r.phi(63, n) >= 0));
    }
  };
  check_converged(chan_vese_reference(f, ls, 300));
  LevelSet lz = ls;
  lz.mu = 0.04;
  check_converged(chan_vese_evolve(zero_model(1.0), f, lz, 300));

  // no forces: phi static
  LevelSet still = ls;
  still.nu = 0.0;
  still.lambda1 = 0.0;
  still.lambda2 = 0.0;
  const LevelSet r = chan_vese_evolve(zero_model(1.0), f, still, 20);
  CHECK(max_abs_diff(r.phi, still.phi) == 0.0);

  LevelSet lf;
  lf.phi = checkerboard_phi(32, 32);
  const LevelSet flat = chan_vese_reference(Image(32, 32, 0.4), lf, 50);
  CHECK(flat.c1[0] == doctest::Approx(0.4));
  CHECK(flat.c2[0] == doctest::Approx(0.4));

  // color input: identical channels behave like gray
  const ColorImage col(f, f, f);
  const LevelSet rc = chan_vese_evolve(zero_model(1.0), col, lz, 50);
  const LevelSet rg = chan_vese_evolve(zero_model(1.0), f, lz, 50);
  CHECK(rc.c1.size() == 3);
  CHECK(segmentation_mask(rc.phi) == segmentation_mask(rg.phi));

  const std::vector<std::uint8_t> m1{1, 1, 0, 0}, m2{1, 0, 0, 0};
  CHECK(mask_iou(m1, m2) == 0.5);
  CHECK(mask_iou(m1, m1) == 1.0);
  CHECK(chan_vese_energy(std::span<const Image>(&f, 1), chan_vese_reference(f, ls, 100)) <
        chan_vese_energy(std::span<const Image>(&f, 1), [&] {
          LevelSet l = ls;
          update_region_values(std::span<const Image>(&f, 1), l, RegionWeights::sharp);
          return l;
        }()));
}

TEST_CASE("resampling") {
  const Image u = random_image(16, 12, 16);
  FilterBank bx(Footprint{3, 3}, small_selection());
  FilterBank by(Footprint{3, 3}, small_selection());
  testutil::randomize_taps(bx, 17);
  testutil::randomize_taps(by, 18);
  CHECK(round_half_up(0.5) == 1);
  CHECK(round_half_up(-0.5) == 0);
  CHECK(round_half_up(-0.6) == -1);

  const FlowField zero = FlowField::uniform(16, 12, 0.0, 0.0);
  CHECK(max_abs_diff(resample(bx, by, u, zero), u) == 0.0);
  CHECK(max_abs_diff(bicubic_resample(u, zero), u) < 1e-12);
  const FlowField shift = FlowField::uniform(16, 12, 3.0, -2.0);
  const Image t = resample(bx, by, u, shift);
  const Image tb = bicubic_resample(u, shift);
  for (int n = 0; n < 12; ++n) {
    for (int m = 0; m < 16; ++m) {
      CHECK(t(m, n) == u.at_clamped(m + 3, n - 2));
      CHECK(tb(m, n) == doctest::Approx(u.at_clamped(m + 3, n - 2)).epsilon(1e-12));
    }
  }

  const auto w = catmull_rom_weights(0.3);
  CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(1.0));
  // quadratic reproduction at a quarter-pixel shift
  Image q(20, 20);
  auto quad = [](double x, double y) { return 0.5 * x * x - 0.3 * x * y + 2.0 * y + 1.0; };
  for (int n = 0; n < 20; ++n) {
    for (int m = 0; m < 20; ++m) q(m, n) = quad(m, n);
  }
  const Image qs = bicubic_resample(q, FlowField::uniform(20, 20, 0.25, 0.25));
  for (int n = 2; n < 17; ++n) {
    for (int m = 2; m < 17; ++m) CHECK(qs(m, n) == doctest::Approx(quad(m + 0.25, n + 0.25)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(resample(bx, by, u, FlowField::uniform(5, 5, 0, 0)), InvalidArgument);
}

TEST_CASE("resampler training") {
  std::vector<Image> corpus;
  for (int i = 0; i < 3; ++i) {
    corpus.push_back(BandLimitedImage::random(30 + i, 64, 1.0, 0.5, 30.0).sample(96, 96));
  }
  TrainConfig c;
  c.spatial_factor = 1;
  const ResamplerTraining still =
      train_resampler(corpus, 0.5, c, SelectionConfig::with_counts(4, 2, 1));
  for (double t : still.bank_x.taps) CHECK(t == 0.0);
  CHECK(still.loss_after == 0.0);

  c.spatial_factor = 4;
  const ResamplerTraining r = train_resampler(corpus, 0.5, c, SelectionConfig::with_counts(4, 2, 1));
  CHECK(r.loss_after < r.loss_before);

  // ramps: the x bank learns the slope
  std::vector<Image> ramps;
  for (double a : {0.5, 1.0, 2.0, 3.0}) {
    Image img(128, 128);
    for (int n = 0; n < 128; ++n) {
      for (int m = 0; m < 128; ++m) img(m, n) = a * m;
    }
    ramps.push_back(img);
  }
  const ResamplerTraining rr =
      train_resampler(ramps, 0.5, c, SelectionConfig::with_counts(4, 1, 1), Footprint{3, 3}, 1e-9);
  Image probe(20, 20);
  for (int n = 0; n < 20; ++n) {
    for (int m = 0; m < 20; ++m) probe(m, n) = 6.0 * m;
  }
  const Image dx = select_and_apply(rr.bank_x, probe);
  CHECK(dx(10, 10) == doctest::Approx(6.0).epsilon(1e-3));
}

TEST_CASE("single-hop resampling of an analytic image beats bicubic" * doctest::may_fail()) {
  std::vector<Image> corpus;
  for (const auto& p : list_images(std::string(BLADE_DATA_DIR) + "/train")) corpus.push_back(read_image(p));
  TrainConfig c;
  c.spatial_factor = 4;
  const ResamplerTraining rt =
      train_resampler(corpus, 0.5, c, SelectionConfig::with_counts(24, 3, 3), Footprint{3, 3});
  const BandLimitedImage img = BandLimitedImage::random(5);
  const Image a = img.sample(128, 128);
  const Image t = img.sample(128, 128, 0.25, 0.0);
  const FlowField fl = FlowField::uniform(128, 128, 0.25, 0.0);
  const double blade = psnr(crop_border(resample(rt.bank_x, rt.bank_y, a, fl), 8), crop_border(t, 8));
  const double bicubic = psnr(crop_border(bicubic_resample(a, fl), 8), crop_border(t, 8));
  MESSAGE("blade " << blade << " dB, bicubic " << bicubic << " dB");
  CHECK(blade > bicubic);
}

TEST_CASE("color application") {
  const Image g = random_image(16, 16, 19);
  FilterBank b(Footprint{3, 3}, small_selection());
  testutil::randomize_taps(b, 20);
  const ColorImage out = color_apply(b, ColorImage(g, g, g));
  const Image ref = select_and_apply(b, g);
  CHECK(max_abs_diff(out.r, ref) < 1e-12);
  CHECK(max_abs_diff(out.g, ref) < 1e-12);
  CHECK(max_abs_diff(out.b, ref) < 1e-12);

  const ColorImage c(random_image(16, 16, 21), random_image(16, 16, 22), random_image(16, 16, 23));
  const ColorImage id = color_apply(FilterBank::delta(Footprint{3, 3}, small_selection()), c);
  CHECK(max_abs_diff(id.r, c.r) == 0.0);
  CHECK(max_abs_diff(id.b, c.b) == 0.0);

  // scale red by s, compensate green so luma (and so the selection) is unchanged
  const double s = 1.7;
  ColorImage c2 = c;
  c2.r *= s;
  c2.g.add_scaled(c.r, -0.299 * (s - 1.0) / 0.587);
  CHECK(max_abs_diff(luma(c2), luma(c)) < 1e-9);
  const ColorImage o1 = color_apply(b, c);
  const ColorImage o2 = color_apply(b, c2);
  CHECK(max_abs_diff(o2.r, s * o1.r) < 1e-9);
  CHECK(max_abs_diff(o2.b, o1.b) == 0.0);

  const SequenceModel m = SequenceModel::plain(b, Integrator::euler, 0.5);
  const ColorImage st = color_step(m, ColorImage(g, g, g));
  CHECK(max_abs_diff(st.g, euler_step(m, g)) < 1e-12);
}
