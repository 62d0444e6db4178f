#include "blade/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "blade/grid.hpp"

namespace blade {

void SelectionConfig::validate() const {
  if (orientation_bins < 1) {
    throw InvalidArgument("orientation_bins must be >= 1");
  }
  auto check = [](const std::vector<double>& t, const char* name) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) {
        throw InvalidArgument(std::string(name) + " thresholds must be finite");
      }
      if (i > 0 && t[i] < t[i - 1]) {
        throw InvalidArgument(std::string(name) + " thresholds must ascend");
      }
    }
  };
  check(strength_thresholds, "strength");
  check(coherence_thresholds, "coherence");
  check(intensity_thresholds, "intensity");
  if (!use_intensity && !intensity_thresholds.empty()) {
    throw InvalidArgument("intensity thresholds given without intensity feature");
  }
  if (!(rho >= 0.0)) throw InvalidArgument("rho must be non-negative");
}

SelectionConfig SelectionConfig::with_counts(int orientations, int strengths,
                                             int coherences, int intensities,
                                             double rho) {
  if (strengths < 1 || coherences < 1 || intensities < 0) {
    throw InvalidArgument("feature bin counts must be positive");
  }
  SelectionConfig cfg;
  cfg.orientation_bins = orientations;
  cfg.strength_thresholds.assign(strengths - 1, 0.0);
  cfg.coherence_thresholds.assign(coherences - 1, 0.0);
  cfg.use_intensity = intensities > 0;
  if (cfg.use_intensity) cfg.intensity_thresholds.assign(intensities - 1, 0.0);
  cfg.rho = rho;
  cfg.validate();
  return cfg;
}

TensorField structure_tensor(const Image& img, double rho) {
  const int w = img.width();
  const int h = img.height();
  const double half_inv_dx = 0.5 / img.dx();
  Image gxx(w, h, 0.0, img.dx()), gxy(w, h, 0.0, img.dx()), gyy(w, h, 0.0, img.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double gx = (img.at_clamped(m + 1, n) - img.at_clamped(m - 1, n)) * half_inv_dx;
      const double gy = (img.at_clamped(m, n + 1) - img.at_clamped(m, n - 1)) * half_inv_dx;
      gxx(m, n) = gx * gx;
      gxy(m, n) = gx * gy;
      gyy(m, n) = gy * gy;
    }
  }
  TensorField t;
  t.width = w;
  t.height = h;
  t.xx = std::move(gaussian_convolve(gxx, rho).storage());
  t.xy = std::move(gaussian_convolve(gxy, rho).storage());
  t.yy = std::move(gaussian_convolve(gyy, rho).storage());
  return t;
}

Eigen2 eigen_decompose(double xx, double xy, double yy) {
  const double mean = 0.5 * (xx + yy);
  const double half_diff = 0.5 * (xx - yy);
  const double radius = std::hypot(half_diff, xy);
  Eigen2 e;
  e.lambda1 = std::max(mean + radius, 0.0);
  e.lambda2 = std::max(mean - radius, 0.0);
  double angle = 0.5 * std::atan2(2.0 * xy, xx - yy);
  if (angle < 0.0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;
  e.angle = angle;
  return e;
}

FeatureField eigen_features(const TensorField& t) {
  FeatureField f;
  f.width = t.width;
  f.height = t.height;
  f.values.resize(t.xx.size());
  for (std::size_t i = 0; i < t.xx.size(); ++i) {
    const Eigen2 e = eigen_decompose(t.xx[i], t.xy[i], t.yy[i]);
    const double s1 = std::sqrt(e.lambda1);
    const double s2 = std::sqrt(e.lambda2);
    FeatureTriple& v = f.values[i];
    v.orientation = e.angle;
    v.strength = s1;
    v.coherence = s1 + s2 > 0.0 ? (s1 - s2) / (s1 + s2) : 0.0;
  }
  return f;
}

int orientation_bin(double orientation, int bins) {
  const double x = orientation * bins / std::numbers::pi;
  // nearest center; ties (to rounding) go to the lower index, so the
  // wraparound tie at pi - pi / (2 bins) lands in bins - 1
  const double lower = std::floor(x);
  int k = static_cast<int>(lower);
  if (x - lower > 0.5 + 1e-12 * std::max(1.0, std::abs(x))) ++k;
  k %= bins;
  if (k < 0) k += bins;
  return k;
}

int threshold_bin(double value, const std::vector<double>& thresholds) {
  return static_cast<int>(
      std::lower_bound(thresholds.begin(), thresholds.end(), value) -
      thresholds.begin());
}

SelectionMap quantize(const FeatureField& features, const SelectionConfig& cfg,
                      const Image* intensity) {
  cfg.validate();
  if (cfg.use_intensity) {
    if (!intensity) {
      throw InvalidArgument("selection config needs an intensity image");
    }
    if (intensity->width() != features.width ||
        intensity->height() != features.height) {
      throw InvalidArgument("intensity image does not match feature field");
    }
  }
  SelectionMap sel;
  sel.width = features.width;
  sel.height = features.height;
  sel.index.resize(features.values.size());
  const int b = cfg.orientation_bins;
  const int s = cfg.strength_bins();
  const int c = cfg.coherence_bins();
  for (std::size_t i = 0; i < features.values.size(); ++i) {
    const FeatureTriple& v = features.values[i];
    const int ori = orientation_bin(v.orientation, b);
    const int str = threshold_bin(v.strength, cfg.strength_thresholds);
    const int coh = threshold_bin(v.coherence, cfg.coherence_thresholds);
    const int inten =
        cfg.use_intensity ? threshold_bin((*intensity)[i], cfg.intensity_thresholds) : 0;
    sel.index[i] = ori + b * (str + s * (coh + c * inten));
  }
  return sel;
}

SelectionMap compute_selection(const Image& z, const SelectionConfig& cfg,
                               const Image* intensity) {
  return quantize(eigen_features(structure_tensor(z, cfg.rho)), cfg, intensity);
}

namespace {

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> equal_population(std::vector<double> pool, int bins) {
  std::sort(pool.begin(), pool.end());
  std::vector<double> out;
  for (int k = 1; k < bins; ++k) {
    out.push_back(sorted_quantile(pool, static_cast<double>(k) / bins));
  }
  return out;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, q);
}

SelectionConfig calibrate_thresholds(const std::vector<Image>& images,
                                     SelectionConfig cfg) {
  if (images.empty()) {
    throw InvalidArgument("calibrate_thresholds needs at least one image");
  }
  std::vector<double> strengths, coherences, intensities;
  for (const Image& img : images) {
    const FeatureField f = eigen_features(structure_tensor(img, cfg.rho));
    for (const FeatureTriple& v : f.values) {
      strengths.push_back(v.strength);
      coherences.push_back(v.coherence);
    }
    if (cfg.use_intensity) {
      intensities.insert(intensities.end(), img.storage().begin(), img.storage().end());
    }
  }
  cfg.strength_thresholds = equal_population(std::move(strengths), cfg.strength_bins());
  cfg.coherence_thresholds = equal_population(std::move(coherences), cfg.coherence_bins());
  if (cfg.use_intensity) {
    cfg.intensity_thresholds =
        equal_population(std::move(intensities), cfg.intensity_bins());
  }
  cfg.validate();
  return cfg;
}

}  // namespace blade
