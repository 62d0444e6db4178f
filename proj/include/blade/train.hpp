#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blade/integrate.hpp"
#include "blade/refsolve.hpp"

namespace blade {

struct TrainConfig {
  int unroll_steps = 10;
  double learning_rate = 1e-3;
  /// Learning rate decays geometrically to learning_rate * final_lr_ratio.
  double final_lr_ratio = 0.1;
  int iterations = 10000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int spatial_factor = 4;
  int temporal_factor = 10;  // M
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Random dihedral transforms of each sampled window.
  bool augment = true;
  /// Per-filter least-squares fit of one-step derivatives before Adam.
  bool least_squares_init = false;
  /// 0 = hardware concurrency. Results do not depend on this value.
  int workers = 0;
  /// Loss curve sampling interval (iterations).
  int log_every = 10;

  void validate() const;
};

/// Input frame u(0) and the targets u(1) .. u(unroll).
struct TrainingWindow {
  Image input;
  std::vector<Image> targets;
  double dt = 1.0;

  void validate() const;
};

/// Reference run at fine resolution, every M-th frame kept (frame 0
/// included), area-downscaled by spatial_factor. The coarse frames use
/// dx = 1 (the model's own grid) and dt = M * cfg.dt.
FrameSequence make_target_sequence(const Image& u0_hr, const SchemeConfig& cfg,
                                   const TrainConfig& train_cfg, int steps_hr);

/// All windows of unroll + 1 consecutive frames.
std::vector<TrainingWindow> make_windows(const FrameSequence& seq, int unroll);

TrainingWindow dihedral(const TrainingWindow& w, int k);

/// sum_k ||u_hat(k) - u(k)||^2 over the window's targets.
double unrolled_loss(const SequenceModel& model, const TrainingWindow& w);

/// Gradient of unrolled_loss with respect to the model parameters, selections
/// frozen at their forward values. Optionally reports the loss.
std::vector<double> unrolled_gradient(const SequenceModel& model,
                                      const TrainingWindow& w,
                                      double* loss = nullptr);

struct LossPoint {
  int iteration = 0;
  double loss = 0.0;  // mean window loss of the batch
};

struct TrainResult {
  SequenceModel model;
  std::vector<LossPoint> curve;
};

using TrainProgress = std::function<void(const LossPoint&)>;

/// Adam on the mean window loss over random mini-batches. Deterministic for a
/// given seed. Throws InstabilityError when the loss becomes non-finite.
TrainResult train(const std::vector<TrainingWindow>& data, const TrainConfig& cfg,
                  const SequenceModel& init, const TrainProgress& progress = {});

/// Plain models: per-filter least squares of E(u_k) against
/// (u_{k+1} - u_k) / dt over every step of every window, with a small ridge.
SequenceModel fit_one_step(const std::vector<TrainingWindow>& data,
                           const SequenceModel& init, double ridge = 1e-6);

/// Mean window loss over a dataset (parallel, deterministic).
double mean_loss(const SequenceModel& model, const std::vector<TrainingWindow>& data,
                 int workers = 0);

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

}  // namespace blade
