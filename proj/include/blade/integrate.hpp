#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "blade/net.hpp"
#include "blade/refsolve.hpp"

namespace blade {

enum class Integrator { euler, midpoint };

std::string_view to_string(Integrator integrator);
Integrator parse_integrator(std::string_view name);

/// A time-derivative estimator wrapped in an explicit integrator. The plain
/// estimator is one bank; the flux estimator is a pair (x, y) whose outputs
/// are edge fluxes differenced into a conservative derivative.
struct SequenceModel {
  enum class Kind { plain, flux };

  Kind kind = Kind::plain;
  FilterBank bank;    // plain bank, or x-flux bank
  FilterBank bank_y;  // flux models only
  Integrator integrator = Integrator::euler;
  double dt = 1.0;

  static SequenceModel plain(FilterBank bank, Integrator integrator, double dt);
  static SequenceModel flux(FilterBank bank_x, FilterBank bank_y,
                            Integrator integrator, double dt);

  /// Total tap count; parameters are bank taps followed by bank_y taps.
  std::size_t num_params() const;
  std::vector<double> params() const;
  void set_params(std::span<const double> p);
  void validate() const;
};

/// Selection maps recorded during one estimator evaluation.
struct EstimatorRecord {
  SelectionMap sel;
  SelectionMap sel_y;
};

/// Conservative derivative from edge fluxes: Gx = bank_x(u) sits on the right
/// edge of each pixel, Gy = bank_y(u) on the edge towards the next row. Fluxes
/// through the outer boundary are zeroed, so the output sums to zero.
Image flux_time_derivative(const FilterBank& bank_x, const FilterBank& bank_y,
                           const Image& u);

/// Difference operator used by the flux model, given precomputed fluxes.
Image flux_divergence(const Image& gx, const Image& gy);
/// Adjoint of flux_divergence.
void flux_divergence_adjoint(const Image& g, Image& gx, Image& gy);

/// Estimator E(u) of the model (plain BLADE or flux sum). When `record` is
/// given, the selection maps used are stored there.
Image time_derivative(const SequenceModel& model, const Image& u,
                      EstimatorRecord* record = nullptr);

/// Reverse of time_derivative with frozen selections: accumulates
/// scale * dE/dtheta^T g into tap_grad and scale * dE/du^T g into u_grad.
void time_derivative_backward(const SequenceModel& model, const Image& u,
                              const EstimatorRecord& record, const Image& g,
                              double scale, std::span<double> tap_grad,
                              Image* u_grad);

Image euler_step(const SequenceModel& model, const Image& u);
Image midpoint_step(const SequenceModel& model, const Image& u);
/// One step with the model's integrator.
Image model_step(const SequenceModel& model, const Image& u);

/// Everything one step's backward pass needs.
struct StepTape {
  Image u;
  EstimatorRecord first;
  Image mid;  // midpoint state, midpoint integrator only
  EstimatorRecord second;
};

Image model_step(const SequenceModel& model, const Image& u, StepTape* tape);

/// Given g = dL/du_next, adds dL/dtheta into tap_grad and returns dL/du.
Image model_step_backward(const SequenceModel& model, const StepTape& tape,
                          const Image& g, std::span<double> tap_grad);

/// Repeated model steps, recording every frame; InstabilityError on a
/// non-finite sample (or a range violation when the guard checks range).
FrameSequence evolve(const SequenceModel& model, const Image& u0, int steps,
                     const StabilityGuard& guard = StabilityGuard::finite_only());

}  // namespace blade
