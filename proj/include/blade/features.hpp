#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "blade/image.hpp"

namespace blade {

/// Per-pixel symmetric 2x2 tensor [[xx, xy], [xy, yy]].
struct TensorField {
  int width = 0;
  int height = 0;
  std::vector<double> xx, xy, yy;
};

struct FeatureTriple {
  double orientation = 0.0;  // [0, pi)
  double strength = 0.0;     // sqrt(lambda1)
  double coherence = 0.0;    // [0, 1]
};

struct FeatureField {
  int width = 0;
  int height = 0;
  std::vector<FeatureTriple> values;
};

/// Closed-form eigen-structure of one symmetric 2x2 tensor.
struct Eigen2 {
  double lambda1 = 0.0;  // >= lambda2, clamped at 0
  double lambda2 = 0.0;
  double angle = 0.0;    // angle of the dominant eigenvector, [0, pi)
};
Eigen2 eigen_decompose(double xx, double xy, double yy);

/// How the per-pixel filter index is formed. Each feature is binned by
/// counting thresholds below the value, so a feature with t thresholds has
/// t + 1 bins. Orientation uses nearest-center bins k*pi/B with wraparound.
struct SelectionConfig {
  int orientation_bins = 24;
  std::vector<double> strength_thresholds;
  std::vector<double> coherence_thresholds;
  bool use_intensity = false;
  std::vector<double> intensity_thresholds;
  double rho = 1.0;

  int strength_bins() const { return static_cast<int>(strength_thresholds.size()) + 1; }
  int coherence_bins() const { return static_cast<int>(coherence_thresholds.size()) + 1; }
  int intensity_bins() const {
    return use_intensity ? static_cast<int>(intensity_thresholds.size()) + 1 : 1;
  }
  int num_filters() const {
    return orientation_bins * strength_bins() * coherence_bins() * intensity_bins();
  }
  /// Throws InvalidArgument on bad counts, descending thresholds or rho < 0.
  void validate() const;

  /// Thresholds placeholder with the given bin counts (values are zeros
  /// until calibrate_thresholds fills them).
  static SelectionConfig with_counts(int orientations, int strengths,
                                     int coherences, int intensities = 0,
                                     double rho = 1.0);
  bool operator==(const SelectionConfig&) const = default;
};

struct SelectionMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> index;

  bool operator==(const SelectionMap&) const = default;
};

/// Gradient by central differences (replicate boundary), outer product,
/// each component smoothed by gaussian_convolve(., rho).
TensorField structure_tensor(const Image& img, double rho);

FeatureField eigen_features(const TensorField& t);

int orientation_bin(double orientation, int bins);
int threshold_bin(double value, const std::vector<double>& thresholds);

SelectionMap quantize(const FeatureField& features, const SelectionConfig& cfg,
                      const Image* intensity = nullptr);

/// structure_tensor -> eigen_features -> quantize.
SelectionMap compute_selection(const Image& z, const SelectionConfig& cfg,
                               const Image* intensity = nullptr);

/// Linear-interpolation quantile of a sample (sorted copy made internally).
double quantile(std::vector<double> values, double q);

/// Sets every threshold array to equal-population quantiles of the features
/// pooled over `images`. The bin counts of `cfg` are kept.
SelectionConfig calibrate_thresholds(const std::vector<Image>& images,
                                     SelectionConfig cfg);

}  // namespace blade
