#include "blade/apps.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "blade/fft.hpp"

namespace blade {

// ---- degradation and restoration ------------------------------------------

void DegradationModel::validate() const {
  if (subsample_factor < 1) throw InvalidArgument("subsample factor must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidArgument("fidelity weight must be >= 0");
  for (double t : psf.taps) {
    if (!std::isfinite(t)) throw InvalidArgument("psf taps must be finite");
  }
  if (std::abs(psf.sum() - 1.0) > 1e-10) throw InvalidArgument("psf must sum to 1");
}

DegradationModel DegradationModel::gaussian(double sigma, int factor, double lambda) {
  DegradationModel dm{Kernel::gaussian(sigma), factor, lambda};
  dm.validate();
  return dm;
}

Image correlate_adjoint(const Image& img, const Kernel& k) {
  const int w = img.width();
  const int h = img.height();
  Image out(w, h, 0.0, img.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double v = img(m, n);
      if (v == 0.0) continue;
      for (int dy = -k.ry(); dy <= k.ry(); ++dy) {
        const int nn = std::clamp(n + dy, 0, h - 1);
        for (int dx = -k.rx(); dx <= k.rx(); ++dx) {
          out(std::clamp(m + dx, 0, w - 1), nn) += k(dx, dy) * v;
        }
      }
    }
  }
  return out;
}

Image degrade(const DegradationModel& dm, const Image& u) {
  const int r = dm.subsample_factor;
  if (u.width() % r != 0 || u.height() % r != 0) {
    throw InvalidArgument("image dimensions must be divisible by the subsample factor");
  }
  const Image blurred = convolve(u, dm.psf);
  if (r == 1) return blurred;
  Image out(u.width() / r, u.height() / r, 0.0, u.dx() * r);
  for (int n = 0; n < out.height(); ++n) {
    for (int m = 0; m < out.width(); ++m) out(m, n) = blurred(r * m, r * n);
  }
  return out;
}

Image degrade_adjoint(const DegradationModel& dm, const Image& v, int width, int height) {
  const int r = dm.subsample_factor;
  if (width != v.width() * r || height != v.height() * r) {
    throw InvalidArgument("adjoint target size does not match the observation");
  }
  Image up(width, height, 0.0, v.dx() / r);
  for (int n = 0; n < v.height(); ++n) {
    for (int m = 0; m < v.width(); ++m) up(r * m, r * n) = v(m, n);
  }
  return correlate_adjoint(up, dm.psf.reversed());
}

Image restore_step(const SequenceModel& model, const Image& u, const Image& f,
                   const DegradationModel& dm) {
  dm.validate();
  Image out = u;
  out.add_scaled(time_derivative(model, u), model.dt);
  if (dm.lambda == 0.0) return out;
  const Image residual = f - degrade(dm, u);
  out.add_scaled(degrade_adjoint(dm, residual, u.width(), u.height()),
                 model.dt * dm.lambda);
  return out;
}

FilterBank expand_footprint(const FilterBank& bank, Footprint fp) {
  fp.validate();
  if (fp.width < bank.footprint.width || fp.height < bank.footprint.height) {
    throw InvalidArgument("expanded footprint must contain the original one");
  }
  FilterBank out(fp, bank.selection);
  const Footprint& old = bank.footprint;
  for (int k = 0; k < bank.num_filters(); ++k) {
    for (int dy = -old.ry(); dy <= old.ry(); ++dy) {
      for (int dx = -old.rx(); dx <= old.rx(); ++dx) out.tap(k, dx, dy) = bank.tap(k, dx, dy);
    }
  }
  return out;
}

FilterBank absorb_deconv(const FilterBank& bank, const DegradationModel& dm) {
  dm.validate();
  if (dm.subsample_factor != 1) {
    throw InvalidArgument("filter absorption requires a convolution-only model");
  }
  FilterBank out = bank;
  if (dm.lambda == 0.0) return out;
  const Kernel auto_corr = convolve(dm.psf.reversed(), dm.psf);
  const Footprint& fp = bank.footprint;
  if (auto_corr.rx() > fp.rx() || auto_corr.ry() > fp.ry()) {
    throw InvalidArgument("psf autocorrelation (" + std::to_string(auto_corr.width) + "x" +
                          std::to_string(auto_corr.height) +
                          ") does not fit the filter footprint (" +
                          std::to_string(fp.width) + "x" + std::to_string(fp.height) +
                          "); expand the footprint first");
  }
  for (int k = 0; k < out.num_filters(); ++k) {
    for (int dy = -auto_corr.ry(); dy <= auto_corr.ry(); ++dy) {
      for (int dx = -auto_corr.rx(); dx <= auto_corr.rx(); ++dx) {
        out.tap(k, dx, dy) -= dm.lambda * auto_corr(dx, dy);
      }
    }
  }
  return out;
}

Image absorbed_deconv_step(const SequenceModel& absorbed, const Image& u,
                           const Image& constant_term) {
  Image e = time_derivative(absorbed, u);
  e += constant_term;
  Image out = u;
  out.add_scaled(e, absorbed.dt);
  return out;
}

Image deconvolve(const SequenceModel& model, const Image& f,
                 const DegradationModel& dm, int steps) {
  if (model.kind != SequenceModel::Kind::plain) {
    throw InvalidArgument("deconvolution needs a plain model");
  }
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  const Kernel auto_corr = convolve(dm.psf.reversed(), dm.psf);
  Footprint fp = model.bank.footprint;
  fp.width = std::max(fp.width, auto_corr.width);
  fp.height = std::max(fp.height, auto_corr.height);
  SequenceModel absorbed = model;
  absorbed.bank = absorb_deconv(expand_footprint(model.bank, fp), dm);
  // same replicate gather as the filters, so constants stay fixed points
  Image c = convolve(f, dm.psf.reversed());
  c *= dm.lambda;
  const StabilityMonitor monitor(f, StabilityGuard::finite_only());
  Image u = f;
  for (int k = 1; k <= steps; ++k) {
    u = absorbed_deconv_step(absorbed, u, c);
    monitor.check(u, k);
  }
  return u;
}

// ---- upscaling -------------------------------------------------------------

double lanczos3(double x) {
  if (x == 0.0) return 1.0;
  if (std::abs(x) >= 3.0) return 0.0;
  const double px = std::numbers::pi * x;
  return 3.0 * std::sin(px) * std::sin(px / 3.0) / (px * px);
}

Image lanczos_upscale(const Image& f, int factor) {
  if (factor < 1) throw InvalidArgument("upscale factor must be >= 1");
  if (factor == 1) return f;
  // Separable: rows first, then columns.
  auto weights = [&](int i) {
    const double x = static_cast<double>(i) / factor;
    const int base = static_cast<int>(std::floor(x));
    std::array<double, 6> w{};
    double total = 0.0;
    for (int t = 0; t < 6; ++t) {
      w[t] = lanczos3(x - (base - 2 + t));
      total += w[t];
    }
    for (double& v : w) v /= total;
    return std::make_pair(base - 2, w);
  };
  const int w = f.width() * factor;
  const int h = f.height() * factor;
  Image tmp(w, f.height(), 0.0, f.dx() / factor);
  for (int m = 0; m < w; ++m) {
    const auto [first, wt] = weights(m);
    for (int n = 0; n < f.height(); ++n) {
      double acc = 0.0;
      for (int t = 0; t < 6; ++t) acc += wt[t] * f.at_clamped(first + t, n);
      tmp(m, n) = acc;
    }
  }
  Image out(w, h, 0.0, f.dx() / factor);
  for (int n = 0; n < h; ++n) {
    const auto [first, wt] = weights(n);
    for (int m = 0; m < w; ++m) {
      double acc = 0.0;
      for (int t = 0; t < 6; ++t) acc += wt[t] * tmp.at_clamped(m, first + t);
      out(m, n) = acc;
    }
  }
  return out;
}

Image upscale(const SequenceModel& model, const Image& f, const DegradationModel& dm,
              int steps) {
  dm.validate();
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  Image u = lanczos_upscale(f, dm.subsample_factor);
  const StabilityMonitor monitor(u, StabilityGuard::finite_only());
  for (int k = 1; k <= steps; ++k) {
    u = restore_step(model, u, f, dm);
    monitor.check(u, k);
  }
  return u;
}

UpscaleProjector::UpscaleProjector(const DegradationModel& dm, int width, int height,
                                   double epsilon)
    : width_(width), height_(height), factor_(dm.subsample_factor), epsilon_(epsilon) {
  dm.validate();
  if (width % factor_ != 0 || height % factor_ != 0) {
    throw InvalidArgument("projector size must be divisible by the factor");
  }
  Image k(width, height, 0.0);
  const Kernel& psf = dm.psf;
  for (int dy = -psf.ry(); dy <= psf.ry(); ++dy) {
    for (int dx = -psf.rx(); dx <= psf.rx(); ++dx) {
      const int m = ((dx % width) + width) % width;
      const int n = ((dy % height) + height) % height;
      k(m, n) += psf(dx, dy);
    }
  }
  symbol_ = fft2(k).data;
}

Image UpscaleProjector::apply(const Image& u) const {
  if (u.width() != width_ || u.height() != height_) {
    throw InvalidArgument("projector applied to an image of the wrong size");
  }
  Spectrum s = fft2(u);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] *= symbol_[i];
  const Image blurred = ifft2(s, u.dx());
  const int r = factor_;
  Image out(width_ / r, height_ / r, 0.0, u.dx() * r);
  for (int n = 0; n < out.height(); ++n) {
    for (int m = 0; m < out.width(); ++m) out(m, n) = blurred(r * m, r * n);
  }
  return out;
}

namespace {

// Visits every aliasing block of the fine spectrum: frequencies
// (k + a W/r, l + b H/r) for a, b in [0, r).
template <class F>
void for_each_block(int width, int height, int r, F&& fn) {
  const int wc = width / r;
  const int hc = height / r;
  std::vector<std::size_t> members(static_cast<std::size_t>(r) * r);
  for (int l = 0; l < hc; ++l) {
    for (int k = 0; k < wc; ++k) {
      int t = 0;
      for (int b = 0; b < r; ++b) {
        for (int a = 0; a < r; ++a) {
          members[t++] = static_cast<std::size_t>(l + b * hc) * width + (k + a * wc);
        }
      }
      fn(k, l, members);
    }
  }
}

}  // namespace

Image UpscaleProjector::project(const Image& v) const {
  if (v.width() != width_ || v.height() != height_) {
    throw InvalidArgument("projector applied to an image of the wrong size");
  }
  Spectrum s = fft2(v);
  for_each_block(width_, height_, factor_, [&](int, int, const std::vector<std::size_t>& idx) {
    std::complex<double> dotp = 0.0;
    double norm = 0.0;
    for (std::size_t i : idx) {
      dotp += symbol_[i] * s.data[i];
      norm += std::norm(symbol_[i]);
    }
    const std::complex<double> coef = dotp / (norm + epsilon_);
    for (std::size_t i : idx) s.data[i] -= std::conj(symbol_[i]) * coef;
  });
  return ifft2(s, v.dx());
}

Image UpscaleProjector::satisfy(const Image& estimate, const Image& f) const {
  if (f.width() * factor_ != width_ || f.height() * factor_ != height_) {
    throw InvalidArgument("observation size does not match the projector");
  }
  Spectrum s = fft2(estimate);
  const Spectrum fs = fft2(f);
  const double r2 = static_cast<double>(factor_) * factor_;
  for_each_block(width_, height_, factor_,
                 [&](int k, int l, const std::vector<std::size_t>& idx) {
                   std::complex<double> dotp = 0.0;
                   double norm = 0.0;
                   for (std::size_t i : idx) {
                     dotp += symbol_[i] * s.data[i];
                     norm += std::norm(symbol_[i]);
                   }
                   const std::complex<double> coef =
                       (r2 * fs(k, l) - dotp) / (norm + epsilon_);
                   for (std::size_t i : idx) s.data[i] += std::conj(symbol_[i]) * coef;
                 });
  return ifft2(s, estimate.dx());
}

Image project_upscale_step(const SequenceModel& model, const Image& u,
                           const UpscaleProjector& proj) {
  Image out = u;
  out.add_scaled(proj.project(time_derivative(model, u)), model.dt);
  return out;
}

Image projected_upscale(const SequenceModel& model, const Image& f,
                        const DegradationModel& dm, int steps) {
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  const int r = dm.subsample_factor;
  const UpscaleProjector proj(dm, f.width() * r, f.height() * r);
  Image u = proj.satisfy(lanczos_upscale(f, r), f);
  const StabilityMonitor monitor(u, StabilityGuard::finite_only());
  for (int k = 1; k <= steps; ++k) {
    u = project_upscale_step(model, u, proj);
    monitor.check(u, k);
  }
  return u;
}

// ---- Chan-Vese -------------------------------------------------------------

void LevelSet::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("level-set epsilon must be positive");
  if (phi.empty()) throw InvalidArgument("level set has no phi");
}

double heaviside_eps(double t, double eps) {
  return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(t / eps));
}

double delta_eps(double t, double eps) {
  return eps / (std::numbers::pi * (eps * eps + t * t));
}

Image checkerboard_phi(int width, int height, double period) {
  Image phi(width, height);
  for (int n = 0; n < height; ++n) {
    for (int m = 0; m < width; ++m) {
      phi(m, n) = std::sin(std::numbers::pi * m / period) *
                  std::sin(std::numbers::pi * n / period);
    }
  }
  return phi;
}

namespace {

void check_channels(std::span<const Image> f, const Image& phi) {
  if (f.empty()) throw InvalidArgument("segmentation needs at least one channel");
  for (const Image& c : f) require_same_shape(c, phi, "chan-vese channel");
}

// lambda2 ||f - c2||^2 - lambda1 ||f - c1||^2 - nu at pixel i.
double region_force(std::span<const Image> f, const LevelSet& ls, std::size_t i) {
  double in = 0.0;
  double out = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) {
    const double a = f[c][i] - ls.c1[c];
    const double b = f[c][i] - ls.c2[c];
    in += a * a;
    out += b * b;
  }
  return -ls.nu - ls.lambda1 * in + ls.lambda2 * out;
}

void init_region_values(std::span<const Image> f, LevelSet& ls) {
  if (ls.c1.size() != f.size()) ls.c1.assign(f.size(), 0.0);
  if (ls.c2.size() != f.size()) ls.c2.assign(f.size(), 0.0);
}

}  // namespace

void update_region_values(std::span<const Image> f, LevelSet& ls, RegionWeights weights) {
  check_channels(f, ls.phi);
  init_region_values(f, ls);
  double w_in = 0.0;
  double w_out = 0.0;
  std::vector<double> s_in(f.size(), 0.0), s_out(f.size(), 0.0);
  for (std::size_t i = 0; i < ls.phi.size(); ++i) {
    const double h = weights == RegionWeights::sharp
                         ? (ls.phi[i] >= 0.0 ? 1.0 : 0.0)
                         : heaviside_eps(ls.phi[i], ls.epsilon);
    w_in += h;
    w_out += 1.0 - h;
    for (std::size_t c = 0; c < f.size(); ++c) {
      s_in[c] += h * f[c][i];
      s_out[c] += (1.0 - h) * f[c][i];
    }
  }
  for (std::size_t c = 0; c < f.size(); ++c) {
    if (w_in >= 1e-9) ls.c1[c] = s_in[c] / w_in;
    if (w_out >= 1e-9) ls.c2[c] = s_out[c] / w_out;
  }
}

LevelSet chan_vese_evolve(const SequenceModel& curvature, std::span<const Image> f,
                          LevelSet ls, int steps, const ChanVeseConfig& cfg) {
  ls.validate();
  check_channels(f, ls.phi);
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  if (!(cfg.phi_scale > 0.0)) throw InvalidArgument("phi_scale must be positive");
  for (int k = 1; k <= steps; ++k) {
    update_region_values(f, ls, cfg.weights);
    Image scaled = ls.phi;
    scaled *= cfg.phi_scale;
    const Image kappa = time_derivative(curvature, scaled);
    Image next = ls.phi;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double speed = ls.mu * kappa[i] + region_force(f, ls, i);
      next[i] += cfg.dt * delta_eps(ls.phi[i], ls.epsilon) * speed;
    }
    if (!next.all_finite()) {
      throw InstabilityError(k, "level set became non-finite at step " + std::to_string(k));
    }
    ls.phi = std::move(next);
  }
  update_region_values(f, ls, cfg.weights);
  return ls;
}

LevelSet chan_vese_evolve(const SequenceModel& curvature, const Image& f, LevelSet ls,
                          int steps, const ChanVeseConfig& cfg) {
  return chan_vese_evolve(curvature, std::span<const Image>(&f, 1), std::move(ls), steps, cfg);
}

LevelSet chan_vese_evolve(const SequenceModel& curvature, const ColorImage& f,
                          LevelSet ls, int steps, const ChanVeseConfig& cfg) {
  const std::vector<Image> channels{f.r, f.g, f.b};
  return chan_vese_evolve(curvature, std::span<const Image>(channels), std::move(ls),
                          steps, cfg);
}

LevelSet chan_vese_reference(std::span<const Image> f, LevelSet ls, int steps,
                             const ChanVeseConfig& cfg) {
  ls.validate();
  check_channels(f, ls.phi);
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  constexpr double eta = 1e-8;
  Image& phi = ls.phi;
  const int w = phi.width();
  const int h = phi.height();
  for (int k = 1; k <= steps; ++k) {
    update_region_values(f, ls, cfg.weights);
    // In-place sweep: left and upper neighbours are already updated.
    for (int n = 0; n < h; ++n) {
      for (int m = 0; m < w; ++m) {
        const double p = phi(m, n);
        const double pl = phi.at_clamped(m - 1, n);
        const double pr = phi.at_clamped(m + 1, n);
        const double pu = phi.at_clamped(m, n - 1);
        const double pd = phi.at_clamped(m, n + 1);
        // Edge coefficients mu / |grad phi| on the four edges of the pixel.
        auto coef_x = [&](int mm, int nn) {
          if (mm < 0 || mm + 1 >= w) return 0.0;
          const double gx = phi(mm + 1, nn) - phi(mm, nn);
          const double gy = 0.5 * (phi.at_clamped(mm, nn + 1) - phi.at_clamped(mm, nn - 1));
          return ls.mu / std::sqrt(eta * eta + gx * gx + gy * gy);
        };
        auto coef_y = [&](int mm, int nn) {
          if (nn < 0 || nn + 1 >= h) return 0.0;
          const double gy = phi(mm, nn + 1) - phi(mm, nn);
          const double gx = 0.5 * (phi.at_clamped(mm + 1, nn) - phi.at_clamped(mm - 1, nn));
          return ls.mu / std::sqrt(eta * eta + gx * gx + gy * gy);
        };
        const double ar = coef_x(m, n);
        const double al = coef_x(m - 1, n);
        const double bd = coef_y(m, n);
        const double bu = coef_y(m, n - 1);
        const double d = cfg.dt * delta_eps(p, ls.epsilon);
        const std::size_t i = static_cast<std::size_t>(n) * w + m;
        const double num = p + d * (ar * pr + al * pl + bd * pd + bu * pu + region_force(f, ls, i));
        phi(m, n) = num / (1.0 + d * (ar + al + bd + bu));
      }
    }
    if (!phi.all_finite()) {
      throw InstabilityError(k, "level set became non-finite at step " + std::to_string(k));
    }
  }
  update_region_values(f, ls, cfg.weights);
  return ls;
}

LevelSet chan_vese_reference(const Image& f, LevelSet ls, int steps,
                             const ChanVeseConfig& cfg) {
  return chan_vese_reference(std::span<const Image>(&f, 1), std::move(ls), steps, cfg);
}

double chan_vese_energy(std::span<const Image> f, const LevelSet& ls) {
  check_channels(f, ls.phi);
  const Image& phi = ls.phi;
  double e = 0.0;
  for (int n = 0; n < phi.height(); ++n) {
    for (int m = 0; m < phi.width(); ++m) {
      const std::size_t i = static_cast<std::size_t>(n) * phi.width() + m;
      const double p = phi[i];
      const double gx = phi.at_clamped(m + 1, n) - p;
      const double gy = phi.at_clamped(m, n + 1) - p;
      const double hv = heaviside_eps(p, ls.epsilon);
      double in = 0.0;
      double out = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) {
        const double a = f[c][i] - (c < ls.c1.size() ? ls.c1[c] : 0.0);
        const double b = f[c][i] - (c < ls.c2.size() ? ls.c2[c] : 0.0);
        in += a * a;
        out += b * b;
      }
      e += ls.mu * delta_eps(p, ls.epsilon) * std::sqrt(gx * gx + gy * gy) +
           ls.nu * hv + ls.lambda1 * in * hv + ls.lambda2 * out * (1.0 - hv);
    }
  }
  return e;
}

std::vector<std::uint8_t> segmentation_mask(const Image& phi) {
  std::vector<std::uint8_t> mask(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) mask[i] = phi[i] >= 0.0 ? 1 : 0;
  return mask;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw InvalidArgument("mask sizes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- resampling ------------------------------------------------------------

FlowField::FlowField(Image x, Image y) : vx(std::move(x)), vy(std::move(y)) { validate(); }

FlowField FlowField::uniform(int width, int height, double x, double y) {
  return FlowField(Image(width, height, x), Image(width, height, y));
}

void FlowField::validate() const {
  require_same_shape(vx, vy, "flow field");
  if (!vx.all_finite() || !vy.all_finite()) throw InvalidArgument("flow must be finite");
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

Image resample(const FilterBank& bank_x, const FilterBank& bank_y, const Image& u,
               const FlowField& flow) {
  flow.validate();
  require_same_shape(u, flow.vx, "resample");
  const int w = u.width();
  const int h = u.height();
  Image gathered(w, h, 0.0, u.dx());
  Image dx(w, h), dy(w, h);
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const int px = round_half_up(flow.vx(m, n));
      const int py = round_half_up(flow.vy(m, n));
      gathered(m, n) = u.at_clamped(m + px, n + py);
      dx(m, n) = flow.vx(m, n) - px;
      dy(m, n) = flow.vy(m, n) - py;
    }
  }
  const SelectionMap sx = select_for(bank_x, gathered);
  const SelectionMap sy =
      bank_y.selection == bank_x.selection ? sx : select_for(bank_y, gathered);
  const Image ex = blade_apply(bank_x, sx, gathered);
  const Image ey = blade_apply(bank_y, sy, gathered);
  Image out = gathered;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dx[i] * ex[i] + dy[i] * ey[i];
  return out;
}

std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
          0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
}

Image bicubic_resample(const Image& u, const FlowField& flow) {
  flow.validate();
  require_same_shape(u, flow.vx, "bicubic_resample");
  Image out(u.width(), u.height(), 0.0, u.dx());
  for (int n = 0; n < u.height(); ++n) {
    for (int m = 0; m < u.width(); ++m) {
      const double x = m + flow.vx(m, n);
      const double y = n + flow.vy(m, n);
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      const auto wx = catmull_rom_weights(x - x0);
      const auto wy = catmull_rom_weights(y - y0);
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) {
        double row = 0.0;
        for (int i = 0; i < 4; ++i) row += wx[i] * u.at_clamped(x0 - 1 + i, y0 - 1 + j);
        acc += wy[j] * row;
      }
      out(m, n) = acc;
    }
  }
  return out;
}

ResamplerTraining train_resampler(const std::vector<Image>& corpus, double psf_sigma,
                                  const TrainConfig& cfg, SelectionConfig selection,
                                  Footprint fp, double ridge) {
  if (corpus.empty()) throw InvalidArgument("resampler corpus is empty");
  if (!(psf_sigma >= 0.0)) throw InvalidArgument("psf sigma must be >= 0");
  fp.validate();
  const int r = cfg.spatial_factor;
  if (r < 1) throw InvalidArgument("spatial factor must be >= 1");
  const int half = r / 2;
  struct Pair {
    Image observed;
    std::vector<Image> targets;  // indexed by (ky + half) * (2 half + 1) + (kx + half)
  };
  std::vector<Pair> pairs;
  for (const Image& fine : corpus) {
    const int wc = fine.width() / r - 1;
    const int hc = fine.height() / r - 1;
    if (wc < fp.width || hc < fp.height) {
      throw InvalidArgument("corpus image too small for the spatial factor");
    }
    const Image blurred = gaussian_convolve(fine, psf_sigma * r);
    auto sample = [&](int ox, int oy) {
      Image out(wc, hc);
      for (int n = 0; n < hc; ++n) {
        for (int m = 0; m < wc; ++m) out(m, n) = blurred(r * m + half + ox, r * n + half + oy);
      }
      return out;
    };
    Pair p;
    p.observed = sample(0, 0);
    for (int ky = -half; ky <= half; ++ky) {
      for (int kx = -half; kx <= half; ++kx) p.targets.push_back(sample(kx, ky));
    }
    pairs.push_back(std::move(p));
  }
  std::vector<Image> observed;
  for (const Pair& p : pairs) observed.push_back(p.observed);
  selection = calibrate_thresholds(observed, std::move(selection));

  ResamplerTraining result{FilterBank(fp, selection), FilterBank(fp, selection), 0.0, 0.0};
  const int area = fp.area();
  const int filters = selection.num_filters();
  std::vector<Eigen::MatrixXd> ata(filters, Eigen::MatrixXd::Zero(2 * area, 2 * area));
  std::vector<Eigen::VectorXd> atb(filters, Eigen::VectorXd::Zero(2 * area));
  Eigen::VectorXd patch(area), row(2 * area);
  const int margin = std::max(fp.rx(), fp.ry());
  for (const Pair& p : pairs) {
    const Image& u = p.observed;
    const SelectionMap sel = select_for(result.bank_x, u);
    for (int n = margin; n < u.height() - margin; ++n) {
      for (int m = margin; m < u.width() - margin; ++m) {
        int t = 0;
        for (int dy = -fp.ry(); dy <= fp.ry(); ++dy) {
          for (int dx = -fp.rx(); dx <= fp.rx(); ++dx) patch[t++] = u(m + dx, n + dy);
        }
        const int s = sel.index[static_cast<std::size_t>(n) * u.width() + m];
        int target = 0;
        for (int ky = -half; ky <= half; ++ky) {
          for (int kx = -half; kx <= half; ++kx) {
            const double dxs = static_cast<double>(kx) / r;
            const double dys = static_cast<double>(ky) / r;
            const double y = p.targets[target++](m, n) - u(m, n);
            result.loss_before += y * y;
            if (kx == 0 && ky == 0) continue;
            row.head(area) = dxs * patch;
            row.tail(area) = dys * patch;
            ata[s].selfadjointView<Eigen::Lower>().rankUpdate(row);
            atb[s] += y * row;
          }
        }
      }
    }
  }
  std::vector<Eigen::VectorXd> sol(filters);
  for (int s = 0; s < filters; ++s) {
    Eigen::MatrixXd a = ata[s].selfadjointView<Eigen::Lower>();
    const double scale = std::max(a.trace() / (2 * area), 1.0);
    a.diagonal().array() += ridge * scale;
    sol[s] = a.ldlt().solve(atb[s]);
    for (int t = 0; t < area; ++t) {
      result.bank_x.filter(s)[t] = sol[s][t];
      result.bank_y.filter(s)[t] = sol[s][area + t];
    }
  }
  // Residual with the fitted banks, same rows as the fit.
  for (const Pair& p : pairs) {
    const Image& u = p.observed;
    const SelectionMap sel = select_for(result.bank_x, u);
    const Image ex = blade_apply(result.bank_x, sel, u);
    const Image ey = blade_apply(result.bank_y, sel, u);
    for (int n = margin; n < u.height() - margin; ++n) {
      for (int m = margin; m < u.width() - margin; ++m) {
        int target = 0;
        for (int ky = -half; ky <= half; ++ky) {
          for (int kx = -half; kx <= half; ++kx) {
            const double pred = u(m, n) + static_cast<double>(kx) / r * ex(m, n) +
                                static_cast<double>(ky) / r * ey(m, n);
            const double e = p.targets[target++](m, n) - pred;
            result.loss_after += e * e;
          }
        }
      }
    }
  }
  return result;
}

// ---- color -----------------------------------------------------------------

ColorImage color_apply(const FilterBank& bank, const ColorImage& c) {
  const Image y = luma(c);
  const SelectionMap sel = select_for(bank, y, &y);
  return ColorImage(blade_apply(bank, sel, c.r), blade_apply(bank, sel, c.g),
                    blade_apply(bank, sel, c.b));
}

ColorImage color_step(const SequenceModel& model, const ColorImage& c) {
  if (model.kind != SequenceModel::Kind::plain) {
    throw InvalidArgument("color evolution supports plain models");
  }
  const ColorImage e = color_apply(model.bank, c);
  ColorImage out = c;
  for (int ch = 0; ch < 3; ++ch) out.channel(ch).add_scaled(e.channel(ch), model.dt);
  return out;
}

}  // namespace blade
