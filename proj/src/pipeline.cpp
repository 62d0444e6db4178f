#include "blade/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "blade/grid.hpp"

namespace blade {

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("input directory '" + dir.string() + "' not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") out.push_back(e.path());
  }
  if (out.empty()) throw IoError("no images in '" + dir.string() + "'");
  std::sort(out.begin(), out.end());
  return out;
}

Image crop(const Image& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width() || y + h > img.height()) {
    throw InvalidArgument("crop rectangle outside the image");
  }
  Image out(w, h, 0.0, img.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) out(m, n) = img(x + m, y + n);
  }
  return out;
}

Image crop_border(const Image& img, int border) {
  return crop(img, border, border, img.width() - 2 * border, img.height() - 2 * border);
}

std::vector<Image> tile_crops(const Image& img, int size) {
  if (size <= 0) throw InvalidArgument("crop size must be positive");
  std::vector<Image> out;
  for (int y = size / 2; y + size <= img.height(); y += 2 * size) {
    for (int x = size / 2; x + size <= img.width(); x += 2 * size) {
      out.push_back(crop(img, x, y, size, size));
    }
  }
  if (out.empty()) throw InvalidArgument("image too small for the crop size");
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  // Box-Muller on mt19937_64
  std::mt19937_64 gen(seed);
  auto uniform = [&] { return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53; };
  Image out = img;
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double t = 2.0 * std::numbers::pi * uniform();
    out[i] += sigma * r * std::cos(t);
    if (i + 1 < out.size()) out[i + 1] += sigma * r * std::sin(t);
  }
  return out;
}

BandLimitedImage BandLimitedImage::random(std::uint64_t seed, int terms, double w_max,
                                          double sigma, double amplitude, double offset) {
  std::mt19937_64 gen(seed);
  auto uniform = [&] { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };
  BandLimitedImage b;
  b.offset = offset;
  for (int i = 0; i < terms; ++i) {
    const double r = w_max * std::sqrt(uniform());
    const double th = 2.0 * std::numbers::pi * uniform();
    const double a = amplitude * (2.0 * uniform() - 1.0) * std::exp(-0.5 * sigma * sigma * r * r);
    b.terms.push_back({r * std::cos(th), r * std::sin(th), a, 2.0 * std::numbers::pi * uniform()});
  }
  return b;
}

double BandLimitedImage::operator()(double x, double y) const {
  double s = offset;
  for (const Term& t : terms) s += t.amplitude * std::cos(t.wx * x + t.wy * y + t.phase);
  return s;
}

Image BandLimitedImage::sample(int width, int height, double shift_x, double shift_y) const {
  Image out(width, height);
  for (int n = 0; n < height; ++n) {
    for (int m = 0; m < width; ++m) out(m, n) = (*this)(m + shift_x, n + shift_y);
  }
  return out;
}

std::vector<FrameSequence> generate_sequences(const Image& u0, const DataSpec& spec) {
  TrainConfig tc;
  tc.spatial_factor = spec.spatial_factor;
  tc.temporal_factor = spec.temporal_factor;
  Image base = u0;
  if (spec.scheme.pde == Pde::cahn_hilliard) base *= 1.0 / 255.0;
  std::vector<Image> inputs;
  if (spec.crop > 0) {
    inputs = tile_crops(base, spec.crop);
  } else {
    inputs.push_back(base);
  }
  std::vector<FrameSequence> out;
  for (const Image& in : inputs) {
    out.push_back(make_target_sequence(in, spec.scheme, tc, spec.steps_hr));
  }
  return out;
}

std::vector<TrainingWindow> collect_windows(const std::vector<FrameSequence>& seqs,
                                            int unroll) {
  std::vector<TrainingWindow> out;
  for (const FrameSequence& s : seqs) {
    for (TrainingWindow& w : make_windows(s, unroll)) out.push_back(std::move(w));
  }
  return out;
}

TrainResult train_bank(const std::vector<TrainingWindow>& windows, const TrainConfig& cfg,
                       const BankSpec& spec, const TrainProgress& progress) {
  if (windows.empty()) throw InvalidArgument("no training windows");
  std::vector<Image> inputs;
  for (const TrainingWindow& w : windows) inputs.push_back(w.input);
  const SelectionConfig sel = calibrate_thresholds(
      inputs, SelectionConfig::with_counts(spec.orientations, spec.strengths, spec.coherences,
                                           0, spec.rho));
  const SequenceModel model =
      SequenceModel::plain(FilterBank(spec.footprint, sel), Integrator::euler, windows[0].dt);
  return train(windows, cfg, model, progress);
}

}  // namespace blade
