#pragma once

#include <string>
#include <string_view>

#include "blade/image.hpp"

namespace blade {

enum class Pde { tv_flow, perona_malik, ced, cahn_hilliard };

std::string_view to_string(Pde pde);
Pde parse_pde(std::string_view name);

/// Parameters of the classical reference schemes. Natural-image PDEs work on
/// [0, 255] intensities, Cahn-Hilliard on [0, 1].
struct SchemeConfig {
  Pde pde = Pde::tv_flow;
  double dt = 0.1;
  double dx = 1.0;
  double c = 10.0;        // Perona-Malik contrast
  double alpha = 0.05;    // CED
  double ced_c = 1.0;     // CED
  double rho = 2.0;       // CED structure-tensor smoothing
  double gamma = 1.0;     // Cahn-Hilliard
  double epsilon_reg = 1e-4;
  double stop_time = 20.0;  // "moderate effect" horizon

  static SchemeConfig defaults(Pde pde);
  /// Intensity peak of the scheme's working range (255 or 1).
  double peak() const { return pde == Pde::cahn_hilliard ? 1.0 : 255.0; }
  void validate() const;
};

/// Anisotropic total variation: sum of |forward differences|.
double total_variation(const Image& u);

/// Divergence detector for explicit evolutions. A frame is rejected when a
/// sample is non-finite; with check_range, when a sample leaves
/// [min(u0) - margin, max(u0) + margin], margin = fraction * max(range(u0), floor);
/// with tv_growth > 0, when total_variation(frame) exceeds
/// tv_growth * total_variation(u0) + tv_slack * (number of grid edges) + 1e-9.
struct StabilityGuard {
  bool check_range = true;
  double margin_fraction = 0.05;
  double margin_floor = 1.0;
  double tv_growth = 1.02;
  double tv_slack = 1.0;

  static StabilityGuard for_pde(Pde pde);
  static StabilityGuard finite_only() { return {false, 0.0, 0.0, 0.0, 0.0}; }
};

/// Tracks one evolution; throws InstabilityError naming the step.
class StabilityMonitor {
 public:
  StabilityMonitor(const Image& u0, const StabilityGuard& guard);
  void check(const Image& frame, int step) const;

 private:
  StabilityGuard guard_;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double tv_limit_ = 0.0;
};

Image tv_flow_step(const Image& u, const SchemeConfig& cfg);
Image perona_malik_step(const Image& u, const SchemeConfig& cfg);
Image ced_step(const Image& u, const SchemeConfig& cfg);
Image cahn_hilliard_step(const Image& u, const SchemeConfig& cfg);
Image reference_step(const Image& u, const SchemeConfig& cfg);

/// Rotation-optimized 3x3 derivative filters (x: columns, y: rows), applied
/// as correlation with replicate boundary, divided by dx.
void scharr_gradient(const Image& u, double dx, Image& gx, Image& gy);
/// Negative adjoint of scharr_gradient, so that sum(div) == 0 exactly up to
/// roundoff for any flux field.
Image scharr_divergence(const Image& jx, const Image& jy, double dx);

/// CED diffusion tensor field D = mu1 w1 w1^T + mu2 w2 w2^T of u.
struct DiffusionTensor {
  Image xx, xy, yy;
};
DiffusionTensor ced_tensor(const Image& u, const SchemeConfig& cfg);

/// Runs `steps` reference steps from u0, recording every frame (steps + 1
/// frames). Throws InstabilityError when the guard trips.
FrameSequence run_reference(const Image& u0, const SchemeConfig& cfg, int steps,
                            const StabilityGuard& guard);
FrameSequence run_reference(const Image& u0, const SchemeConfig& cfg, int steps);

}  // namespace blade
