#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "blade/grid.hpp"
#include "blade/integrate.hpp"
#include "blade/train.hpp"

namespace blade {

/// f = A u + noise with A u = subsample(psf * u), replicate boundary.
/// Subsampling keeps pixels (r m, r n).
struct DegradationModel {
  Kernel psf;
  int subsample_factor = 1;
  double lambda = 0.0;

  void validate() const;
  static DegradationModel gaussian(double sigma, int factor, double lambda);
};

Image degrade(const DegradationModel& dm, const Image& u);
/// Exact adjoint of degrade for a fine grid of the given size.
Image degrade_adjoint(const DegradationModel& dm, const Image& v, int width, int height);

/// Adjoint of correlate(., k) under replicate extension.
Image correlate_adjoint(const Image& img, const Kernel& k);

/// u + dt (E(u) + lambda A^T (f - A u)), dt and E from the model.
Image restore_step(const SequenceModel& model, const Image& u, const Image& f,
                   const DegradationModel& dm);

/// Copy of the bank with a larger footprint; old taps stay centered.
FilterBank expand_footprint(const FilterBank& bank, Footprint fp);

/// Every filter minus lambda * (reversed(psf) * psf), centered. Throws when
/// that kernel does not fit the footprint (see expand_footprint).
FilterBank absorb_deconv(const FilterBank& bank, const DegradationModel& dm);

/// Evolution with absorbed filters: u + dt (E_absorbed(u) + c), where
/// c = lambda A^T f is precomputed by the caller.
Image absorbed_deconv_step(const SequenceModel& absorbed, const Image& u,
                           const Image& constant_term);

/// `steps` absorbed-filter iterations from u0 = f (A = convolution only).
/// The constant term is lambda * (reversed(psf) * f) with replicate boundary.
Image deconvolve(const SequenceModel& model, const Image& f,
                 const DegradationModel& dm, int steps);

/// sinc(x) sinc(x / 3) on |x| < 3.
double lanczos3(double x);
/// Lanczos-3 interpolation of f onto the fine grid (fine pixel m sits at
/// coarse coordinate m / factor), weights renormalized, replicate boundary.
Image lanczos_upscale(const Image& f, int factor);

/// Lanczos initialization, then `steps` restore_step iterations with the
/// subsampling model.
Image upscale(const SequenceModel& model, const Image& f, const DegradationModel& dm,
              int steps);

/// Spectral tools for the noise-free upscaling model with periodic boundary.
class UpscaleProjector {
 public:
  UpscaleProjector(const DegradationModel& dm, int width, int height,
                   double epsilon = 1e-12);

  int width() const { return width_; }
  int height() const { return height_; }
  /// Periodic A: subsample(psf (*) u).
  Image apply(const Image& u) const;
  /// Orthogonal projection onto {u : A u = 0}.
  Image project(const Image& v) const;
  /// Least-change correction of `estimate` so that A u = f exactly.
  Image satisfy(const Image& estimate, const Image& f) const;

 private:
  int width_, height_, factor_;
  double epsilon_;
  std::vector<std::complex<double>> symbol_;  // psf spectrum on the fine grid
};

/// u + dt P0(E(u)).
Image project_upscale_step(const SequenceModel& model, const Image& u,
                           const UpscaleProjector& proj);
/// Lanczos estimate made consistent with f, then `steps` projected steps.
Image projected_upscale(const SequenceModel& model, const Image& f,
                        const DegradationModel& dm, int steps);

// ---- Chan-Vese ------------------------------------------------------------

enum class RegionWeights {
  sharp,     // c1, c2 are plain means over {phi >= 0} and {phi < 0}
  smoothed,  // H_eps-weighted means
};

struct LevelSet {
  Image phi;
  double epsilon = 1.0;
  double mu = 0.04;
  double nu = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::vector<double> c1;  // one entry per channel
  std::vector<double> c2;

  void validate() const;
};

struct ChanVeseConfig {
  double dt = 0.5;
  RegionWeights weights = RegionWeights::sharp;
  /// The curvature term is E(s phi); TV flow ignores intensity scaling, so s
  /// only moves phi into the range the bank was trained on.
  double phi_scale = 1.0;
};

/// 1/2 (1 + 2/pi atan(t / eps)) and its derivative.
double heaviside_eps(double t, double eps);
double delta_eps(double t, double eps);

/// sin(pi x / period) sin(pi y / period).
Image checkerboard_phi(int width, int height, double period = 10.0);

/// Updates c1, c2 from the channels; an empty region keeps its old value.
void update_region_values(std::span<const Image> f, LevelSet& ls, RegionWeights weights);

/// BLADE curvature term (model estimator) in the level-set descent.
LevelSet chan_vese_evolve(const SequenceModel& curvature, std::span<const Image> f,
                          LevelSet ls, int steps, const ChanVeseConfig& cfg = {});
LevelSet chan_vese_evolve(const SequenceModel& curvature, const Image& f,
                          LevelSet ls, int steps, const ChanVeseConfig& cfg = {});
LevelSet chan_vese_evolve(const SequenceModel& curvature, const ColorImage& f,
                          LevelSet ls, int steps, const ChanVeseConfig& cfg = {});

/// Semi-implicit Gauss-Seidel scheme with curvature div(grad phi / |grad phi|)
/// (eta = 1e-8 inside the root).
LevelSet chan_vese_reference(std::span<const Image> f, LevelSet ls, int steps,
                             const ChanVeseConfig& cfg = {});
LevelSet chan_vese_reference(const Image& f, LevelSet ls, int steps,
                             const ChanVeseConfig& cfg = {});

/// Discrete energy with |grad phi| by forward differences.
double chan_vese_energy(std::span<const Image> f, const LevelSet& ls);

/// 1 where phi >= 0.
std::vector<std::uint8_t> segmentation_mask(const Image& phi);
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

// ---- Resampling ----------------------------------------------------------

struct FlowField {
  Image vx, vy;

  FlowField() = default;
  FlowField(Image x, Image y);
  static FlowField uniform(int width, int height, double vx, double vy);
  int width() const { return vx.width(); }
  int height() const { return vx.height(); }
  void validate() const;
};

/// v = [v] + delta with [v] = floor(v + 1/2), delta in [-1/2, 1/2).
int round_half_up(double v);

/// Gather u at the integer-shifted positions, then add
/// delta_x E_x(w) + delta_y E_y(w) evaluated on the gathered image w.
Image resample(const FilterBank& bank_x, const FilterBank& bank_y, const Image& u,
               const FlowField& flow);

/// Catmull-Rom weights for fractional offset t in [0, 1) at taps -1 .. 2.
std::array<double, 4> catmull_rom_weights(double t);
Image bicubic_resample(const Image& u, const FlowField& flow);

struct ResamplerTraining {
  FilterBank bank_x;
  FilterBank bank_y;
  double loss_before = 0.0;  // sum of squared residuals with zero banks
  double loss_after = 0.0;
};

/// Builds (observed, shifted target) pairs by blurring each fine image with a
/// Gaussian of psf_sigma coarse pixels and sampling every spatial_factor-th
/// pixel, the target displaced by k / spatial_factor coarse pixels for
/// k in [-factor / 2, factor / 2]. Both banks are then fitted jointly by
/// normal equations per selection bucket.
ResamplerTraining train_resampler(const std::vector<Image>& corpus, double psf_sigma,
                                  const TrainConfig& cfg, SelectionConfig selection,
                                  Footprint fp = {}, double ridge = 1e-6);

/// Selection from luma(c), blade_apply on each channel with that map.
ColorImage color_apply(const FilterBank& bank, const ColorImage& c);
/// Color Euler step with luma-driven selection.
ColorImage color_step(const SequenceModel& model, const ColorImage& c);

}  // namespace blade
