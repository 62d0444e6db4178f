#include "blade/net.hpp"

#include <cmath>

namespace blade {

void Footprint::validate() const {
  if (width < 1 || height < 1 || width % 2 == 0 || height % 2 == 0) {
    throw InvalidArgument("filter footprint must have odd positive dimensions");
  }
}

FilterBank::FilterBank(Footprint fp, SelectionConfig sel)
    : footprint(fp), selection(std::move(sel)) {
  footprint.validate();
  selection.validate();
  taps.assign(static_cast<std::size_t>(num_filters()) * footprint.area(), 0.0);
}

FilterBank::FilterBank(Footprint fp, SelectionConfig sel, std::vector<double> t)
    : footprint(fp), selection(std::move(sel)), taps(std::move(t)) {
  validate();
}

std::span<double> FilterBank::filter(int k) {
  return std::span<double>(taps).subspan(
      static_cast<std::size_t>(k) * footprint.area(), footprint.area());
}

std::span<const double> FilterBank::filter(int k) const {
  return std::span<const double>(taps).subspan(
      static_cast<std::size_t>(k) * footprint.area(), footprint.area());
}

double& FilterBank::tap(int k, int dx, int dy) {
  return filter(k)[(dy + footprint.ry()) * footprint.width + dx + footprint.rx()];
}

double FilterBank::tap(int k, int dx, int dy) const {
  return filter(k)[(dy + footprint.ry()) * footprint.width + dx + footprint.rx()];
}

void FilterBank::validate() const {
  footprint.validate();
  selection.validate();
  if (taps.size() != static_cast<std::size_t>(num_filters()) * footprint.area()) {
    throw InvalidArgument("filter bank has " + std::to_string(taps.size()) +
                          " taps, expected " +
                          std::to_string(num_filters() * footprint.area()));
  }
  for (double t : taps) {
    if (!std::isfinite(t)) throw InvalidArgument("filter bank taps must be finite");
  }
}

FilterBank FilterBank::delta(Footprint fp, SelectionConfig sel, double scale) {
  FilterBank bank(fp, std::move(sel));
  for (int k = 0; k < bank.num_filters(); ++k) bank.tap(k, 0, 0) = scale;
  return bank;
}

namespace {

// z extended by replicate padding of (rx, ry) on every side.
struct Padded {
  int width = 0;
  int height = 0;
  int rx = 0;
  int ry = 0;
  std::vector<double> data;

  Padded(const Image& z, const Footprint& fp)
      : width(z.width() + 2 * fp.rx()),
        height(z.height() + 2 * fp.ry()),
        rx(fp.rx()),
        ry(fp.ry()),
        data(static_cast<std::size_t>(width) * height) {
    for (int n = 0; n < height; ++n) {
      for (int m = 0; m < width; ++m) {
        data[static_cast<std::size_t>(n) * width + m] = z.at_clamped(m - rx, n - ry);
      }
    }
  }
};

void check_selection(const FilterBank& bank, const SelectionMap& sel,
                     const Image& z) {
  if (sel.width != z.width() || sel.height != z.height() ||
      sel.index.size() != z.size()) {
    throw InvalidArgument("selection map does not match image dimensions");
  }
  const int filters = bank.num_filters();
  for (std::int32_t s : sel.index) {
    if (s < 0 || s >= filters) {
      throw InvalidArgument("selection index " + std::to_string(s) +
                            " out of range for bank of " +
                            std::to_string(filters) + " filters");
    }
  }
  if (bank.taps.size() != static_cast<std::size_t>(filters) * bank.footprint.area()) {
    throw InvalidArgument("filter bank tap count inconsistent with selection");
  }
}

}  // namespace

Image blade_apply(const FilterBank& bank, const SelectionMap& sel, const Image& z) {
  check_selection(bank, sel, z);
  const Footprint& fp = bank.footprint;
  const Padded pad(z, fp);
  Image out(z.width(), z.height(), 0.0, z.dx());
  const int area = fp.area();
  for (int n = 0; n < z.height(); ++n) {
    for (int m = 0; m < z.width(); ++m) {
      const std::size_t i = static_cast<std::size_t>(n) * z.width() + m;
      const double* h = bank.taps.data() + static_cast<std::size_t>(sel.index[i]) * area;
      double acc = 0.0;
      for (int dy = 0; dy < fp.height; ++dy) {
        const double* row = pad.data.data() +
                            static_cast<std::size_t>(n + dy) * pad.width + m;
        const double* hr = h + dy * fp.width;
        for (int dx = 0; dx < fp.width; ++dx) acc += hr[dx] * row[dx];
      }
      out[i] = acc;
    }
  }
  return out;
}

void blade_backward_accumulate(const FilterBank& bank, const SelectionMap& sel,
                               const Image& z, const Image& dl_du, double scale,
                               std::span<double> tap_grad, Image* z_grad) {
  check_selection(bank, sel, z);
  require_same_shape(z, dl_du, "blade_backward");
  if (tap_grad.size() != bank.taps.size()) {
    throw InvalidArgument("tap gradient buffer has wrong size");
  }
  if (z_grad) require_same_shape(z, *z_grad, "blade_backward z gradient");
  const Footprint& fp = bank.footprint;
  const Padded pad(z, fp);
  std::vector<double> pad_grad;
  if (z_grad) pad_grad.assign(pad.data.size(), 0.0);
  const int area = fp.area();
  for (int n = 0; n < z.height(); ++n) {
    for (int m = 0; m < z.width(); ++m) {
      const std::size_t i = static_cast<std::size_t>(n) * z.width() + m;
      const double g = scale * dl_du[i];
      if (g == 0.0) continue;
      const std::size_t base = static_cast<std::size_t>(sel.index[i]) * area;
      double* th = tap_grad.data() + base;
      const double* h = bank.taps.data() + base;
      for (int dy = 0; dy < fp.height; ++dy) {
        const std::size_t off = static_cast<std::size_t>(n + dy) * pad.width + m;
        const double* row = pad.data.data() + off;
        for (int dx = 0; dx < fp.width; ++dx) th[dy * fp.width + dx] += g * row[dx];
        if (z_grad) {
          double* grow = pad_grad.data() + off;
          const double* hr = h + dy * fp.width;
          for (int dx = 0; dx < fp.width; ++dx) grow[dx] += g * hr[dx];
        }
      }
    }
  }
  if (!z_grad) return;
  // Fold the padding back onto the clamped source pixels.
  for (int n = 0; n < pad.height; ++n) {
    const int sn = std::clamp(n - pad.ry, 0, z.height() - 1);
    for (int m = 0; m < pad.width; ++m) {
      const int sm = std::clamp(m - pad.rx, 0, z.width() - 1);
      (*z_grad)(sm, sn) += pad_grad[static_cast<std::size_t>(n) * pad.width + m];
    }
  }
}

BladeGradient blade_backward(const FilterBank& bank, const SelectionMap& sel,
                             const Image& z, const Image& dl_du) {
  BladeGradient grad;
  grad.taps.assign(bank.taps.size(), 0.0);
  grad.z = Image(z.width(), z.height(), 0.0, z.dx());
  blade_backward_accumulate(bank, sel, z, dl_du, 1.0, grad.taps, &grad.z);
  return grad;
}

SelectionMap select_for(const FilterBank& bank, const Image& z,
                        const Image* aux_intensity) {
  const Image* intensity = aux_intensity ? aux_intensity : &z;
  return compute_selection(z, bank.selection,
                           bank.selection.use_intensity ? intensity : nullptr);
}

Image select_and_apply(const FilterBank& bank, const Image& z,
                       const Image* aux_intensity) {
  return blade_apply(bank, select_for(bank, z, aux_intensity), z);
}

}  // namespace blade
