#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "blade/apps.hpp"
#include "blade/train.hpp"

namespace blade {

/// .png/.pgm/.ppm files of a directory, sorted by name. Throws IoError when
/// the directory is missing or holds no images.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Sub-image [x, x + w) x [y, y + h).
Image crop(const Image& img, int x, int y, int w, int h);
/// Drops `border` pixels on every side.
Image crop_border(const Image& img, int border);

/// size x size tiles at stride 2 size, offset size / 2.
std::vector<Image> tile_crops(const Image& img, int size);

/// Adds i.i.d. N(0, sigma^2) samples (seeded, platform independent).
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

/// Sum of `terms` cosines with frequencies uniform in the disk |w| <= w_max,
/// amplitudes uniform in [-amplitude, amplitude] times exp(-sigma^2 |w|^2 / 2),
/// around `offset`. Evaluated at (x + shift_x, y + shift_y).
struct BandLimitedImage {
  struct Term {
    double wx, wy, amplitude, phase;
  };
  std::vector<Term> terms;
  double offset = 128.0;

  static BandLimitedImage random(std::uint64_t seed, int terms = 64, double w_max = std::numbers::pi,
                                 double sigma = 0.5, double amplitude = 20.0,
                                 double offset = 128.0);
  double operator()(double x, double y) const;
  Image sample(int width, int height, double shift_x = 0.0, double shift_y = 0.0) const;
};

/// Reference evolution of one input image into a coarse training sequence.
/// Natural-image PDEs use the file on [0, 255], Cahn-Hilliard on [0, 1].
struct DataSpec {
  SchemeConfig scheme;
  int steps_hr = 200;
  int spatial_factor = 4;
  int temporal_factor = 20;
  int crop = 0;  // > 0: train on tile_crops of this size
};

std::vector<FrameSequence> generate_sequences(const Image& u0, const DataSpec& spec);

/// All unroll-step windows of the sequences.
std::vector<TrainingWindow> collect_windows(const std::vector<FrameSequence>& seqs,
                                            int unroll);

struct BankSpec {
  Footprint footprint{5, 5};
  int orientations = 24;
  int strengths = 3;
  int coherences = 3;
  double rho = 1.0;
};

/// Zero bank with thresholds calibrated on the window inputs, then train().
TrainResult train_bank(const std::vector<TrainingWindow>& windows, const TrainConfig& cfg,
                       const BankSpec& spec, const TrainProgress& progress = {});

}  // namespace blade
