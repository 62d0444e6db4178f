#pragma once

#include <span>
#include <vector>

#include "blade/features.hpp"
#include "blade/image.hpp"

namespace blade {

/// Odd-sized filter support centered on the output pixel.
struct Footprint {
  int width = 5;
  int height = 5;

  int rx() const { return width / 2; }
  int ry() const { return height / 2; }
  int area() const { return width * height; }
  void validate() const;
  bool operator==(const Footprint&) const = default;
};

/// Learnable filters h^0, h^1, ... sharing one footprint. Taps are stored
/// filter-major, row-major within the footprint.
struct FilterBank {
  Footprint footprint;
  SelectionConfig selection;
  std::vector<double> taps;

  FilterBank() = default;
  FilterBank(Footprint fp, SelectionConfig sel);  // zero taps
  FilterBank(Footprint fp, SelectionConfig sel, std::vector<double> t);

  int num_filters() const { return selection.num_filters(); }
  std::span<double> filter(int k);
  std::span<const double> filter(int k) const;
  double& tap(int k, int dx, int dy);
  double tap(int k, int dx, int dy) const;
  void validate() const;

  /// Every filter set to `scale` times the centered delta.
  static FilterBank delta(Footprint fp, SelectionConfig sel, double scale = 1.0);
};

/// out_i = sum_{j in F} h^{sel(i)}_j z_{i+j}, replicate boundary.
Image blade_apply(const FilterBank& bank, const SelectionMap& sel, const Image& z);

struct BladeGradient {
  std::vector<double> taps;  // same layout as FilterBank::taps
  Image z;
};

/// Adjoint of blade_apply for the loss gradient `dl_du`, with the selection
/// held fixed. Contributions from replicated border samples accumulate into
/// the clamped border pixels of the z-gradient.
BladeGradient blade_backward(const FilterBank& bank, const SelectionMap& sel,
                             const Image& z, const Image& dl_du);

/// Same as blade_backward but accumulates `scale` times the gradients into
/// the given outputs (tap_grad sized like bank.taps, z_grad shaped like z).
void blade_backward_accumulate(const FilterBank& bank, const SelectionMap& sel,
                               const Image& z, const Image& dl_du, double scale,
                               std::span<double> tap_grad, Image* z_grad);

/// Selection from z via the bank's SelectionConfig. The intensity feature,
/// when configured, is read from `aux_intensity` (or z itself when null).
SelectionMap select_for(const FilterBank& bank, const Image& z,
                        const Image* aux_intensity = nullptr);

/// select_for followed by blade_apply.
Image select_and_apply(const FilterBank& bank, const Image& z,
                       const Image* aux_intensity = nullptr);

}  // namespace blade
