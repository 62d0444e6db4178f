#include "blade/train.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "blade/grid.hpp"

namespace blade {

void TrainConfig::validate() const {
  if (unroll_steps < 1) throw InvalidArgument("unroll_steps must be >= 1");
  if (spatial_factor < 1 || temporal_factor < 1) {
    throw InvalidArgument("spatial and temporal factors must be >= 1");
  }
  if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(final_lr_ratio > 0.0)) throw InvalidArgument("final_lr_ratio must be positive");
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
}

void TrainingWindow::validate() const {
  if (targets.empty()) throw InvalidArgument("training window has no targets");
  for (const Image& t : targets) require_same_shape(input, t, "training window");
  if (!(dt > 0.0)) throw InvalidArgument("training window dt must be positive");
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

FrameSequence make_target_sequence(const Image& u0_hr, const SchemeConfig& cfg,
                                   const TrainConfig& train_cfg, int steps_hr) {
  train_cfg.validate();
  const int f = train_cfg.spatial_factor;
  const int m = train_cfg.temporal_factor;
  if (u0_hr.width() % f != 0 || u0_hr.height() % f != 0) {
    throw InvalidArgument("input dimensions must be divisible by the spatial factor");
  }
  if (steps_hr < 0 || steps_hr % m != 0) {
    throw InvalidArgument("steps_hr (" + std::to_string(steps_hr) +
                          ") must be a non-negative multiple of M (" +
                          std::to_string(m) + ")");
  }
  const FrameSequence hr = run_reference(u0_hr, cfg, steps_hr);
  FrameSequence out;
  out.dt = m * cfg.dt;
  for (int k = 0; k <= steps_hr; k += m) {
    Image coarse = downscale_area(hr.frames[k], f);
    coarse.set_dx(1.0);
    out.frames.push_back(std::move(coarse));
  }
  return out;
}

std::vector<TrainingWindow> make_windows(const FrameSequence& seq, int unroll) {
  if (unroll < 1) throw InvalidArgument("unroll must be >= 1");
  std::vector<TrainingWindow> out;
  for (std::size_t s = 0; s + unroll < seq.size(); ++s) {
    TrainingWindow w;
    w.input = seq.frames[s];
    w.dt = seq.dt;
    for (int k = 1; k <= unroll; ++k) w.targets.push_back(seq.frames[s + k]);
    out.push_back(std::move(w));
  }
  return out;
}

TrainingWindow dihedral(const TrainingWindow& w, int k) {
  TrainingWindow out;
  out.input = dihedral(w.input, k);
  out.dt = w.dt;
  for (const Image& t : w.targets) out.targets.push_back(dihedral(t, k));
  return out;
}

namespace {

void check_step(const Image& u, int step) {
  if (!u.all_finite()) {
    throw InstabilityError(step, "non-finite state at unrolled step " + std::to_string(step));
  }
}

SequenceModel with_window_dt(const SequenceModel& model, const TrainingWindow& w) {
  SequenceModel m = model;
  m.dt = w.dt;
  return m;
}

}  // namespace

double unrolled_loss(const SequenceModel& model, const TrainingWindow& w) {
  w.validate();
  const SequenceModel m = with_window_dt(model, w);
  Image u = w.input;
  double loss = 0.0;
  for (std::size_t k = 0; k < w.targets.size(); ++k) {
    u = model_step(m, u);
    check_step(u, static_cast<int>(k) + 1);
    const Image r = u - w.targets[k];
    loss += dot(r, r);
  }
  return loss;
}

std::vector<double> unrolled_gradient(const SequenceModel& model,
                                      const TrainingWindow& w, double* loss) {
  w.validate();
  const SequenceModel m = with_window_dt(model, w);
  const std::size_t steps = w.targets.size();
  std::vector<StepTape> tapes(steps);
  std::vector<Image> residuals(steps);
  Image u = w.input;
  double total = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    u = model_step(m, u, &tapes[k]);
    check_step(u, static_cast<int>(k) + 1);
    residuals[k] = u - w.targets[k];
    total += dot(residuals[k], residuals[k]);
  }
  if (loss) *loss = total;
  std::vector<double> grad(m.num_params(), 0.0);
  Image g(u.width(), u.height(), 0.0, u.dx());
  for (std::size_t k = steps; k-- > 0;) {
    g.add_scaled(residuals[k], 2.0);
    g = model_step_backward(m, tapes[k], g, grad);
  }
  return grad;
}

double mean_loss(const SequenceModel& model, const std::vector<TrainingWindow>& data,
                 int workers) {
  if (data.empty()) throw InvalidArgument("empty dataset");
  std::vector<double> losses(data.size());
  parallel_for(static_cast<int>(data.size()), workers,
               [&](int i) { losses[i] = unrolled_loss(model, data[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(data.size());
}

SequenceModel fit_one_step(const std::vector<TrainingWindow>& data,
                           const SequenceModel& init, double ridge) {
  if (init.kind != SequenceModel::Kind::plain) {
    throw InvalidArgument("one-step least squares supports plain models only");
  }
  if (data.empty()) throw InvalidArgument("empty dataset");
  const FilterBank& bank = init.bank;
  const Footprint& fp = bank.footprint;
  const int area = fp.area();
  const int filters = bank.num_filters();
  std::vector<Eigen::MatrixXd> ata(filters, Eigen::MatrixXd::Zero(area, area));
  std::vector<Eigen::VectorXd> atb(filters, Eigen::VectorXd::Zero(area));
  Eigen::VectorXd patch(area);
  for (const TrainingWindow& w : data) {
    w.validate();
    const Image* prev = &w.input;
    for (const Image& next : w.targets) {
      const SelectionMap sel = select_for(bank, *prev);
      for (int n = 0; n < prev->height(); ++n) {
        for (int mm = 0; mm < prev->width(); ++mm) {
          const std::size_t i = static_cast<std::size_t>(n) * prev->width() + mm;
          int t = 0;
          for (int dy = -fp.ry(); dy <= fp.ry(); ++dy) {
            for (int dx = -fp.rx(); dx <= fp.rx(); ++dx) {
              patch[t++] = prev->at_clamped(mm + dx, n + dy);
            }
          }
          const double target = (next[i] - (*prev)[i]) / w.dt;
          const int s = sel.index[i];
          ata[s].selfadjointView<Eigen::Lower>().rankUpdate(patch);
          atb[s] += target * patch;
        }
      }
      prev = &next;
    }
  }
  SequenceModel out = init;
  for (int s = 0; s < filters; ++s) {
    Eigen::MatrixXd a = ata[s].selfadjointView<Eigen::Lower>();
    const double scale = std::max(a.trace() / area, 1.0);
    a.diagonal().array() += ridge * scale;
    const Eigen::VectorXd h = a.ldlt().solve(atb[s]);
    for (int t = 0; t < area; ++t) out.bank.filter(s)[t] = h[t];
  }
  return out;
}

TrainResult train(const std::vector<TrainingWindow>& data, const TrainConfig& cfg,
                  const SequenceModel& init, const TrainProgress& progress) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("empty training dataset");
  for (const TrainingWindow& w : data) {
    w.validate();
    if (static_cast<int>(w.targets.size()) != cfg.unroll_steps) {
      throw InvalidArgument("window length " + std::to_string(w.targets.size()) +
                            " does not match unroll_steps " +
                            std::to_string(cfg.unroll_steps));
    }
  }
  TrainResult result;
  result.model = cfg.least_squares_init ? fit_one_step(data, init) : init;
  std::vector<double> theta = result.model.params();
  const std::size_t np = theta.size();
  std::vector<double> m1(np, 0.0), m2(np, 0.0);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> pick_sym(0, 7);
  const int batch = cfg.batch_size;
  std::vector<std::size_t> idx(batch);
  std::vector<int> sym(batch);
  std::vector<std::vector<double>> grads(batch);
  std::vector<double> losses(batch);
  const double decay = cfg.iterations > 0
                           ? std::log(cfg.final_lr_ratio) / cfg.iterations
                           : 0.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int b = 0; b < batch; ++b) {
      idx[b] = pick(rng);
      sym[b] = cfg.augment ? pick_sym(rng) : 0;
    }
    parallel_for(batch, cfg.workers, [&](int b) {
      const TrainingWindow& w = data[idx[b]];
      if (sym[b] == 0) {
        grads[b] = unrolled_gradient(result.model, w, &losses[b]);
      } else {
        grads[b] = unrolled_gradient(result.model, dihedral(w, sym[b]), &losses[b]);
      }
    });
    double loss = 0.0;
    std::vector<double> g(np, 0.0);
    for (int b = 0; b < batch; ++b) {
      loss += losses[b];
      for (std::size_t p = 0; p < np; ++p) g[p] += grads[b][p];
    }
    loss /= batch;
    if (!std::isfinite(loss)) {
      throw InstabilityError(it, "training loss became non-finite at iteration " +
                                     std::to_string(it));
    }
    if (it % cfg.log_every == 0) {
      result.curve.push_back({it, loss});
      if (progress) progress(result.curve.back());
    }
    const double lr = cfg.learning_rate * std::exp(decay * it);
    const double c1 = 1.0 - std::pow(cfg.beta1, it + 1);
    const double c2 = 1.0 - std::pow(cfg.beta2, it + 1);
    for (std::size_t p = 0; p < np; ++p) {
      const double gp = g[p] / batch;
      m1[p] = cfg.beta1 * m1[p] + (1.0 - cfg.beta1) * gp;
      m2[p] = cfg.beta2 * m2[p] + (1.0 - cfg.beta2) * gp * gp;
      theta[p] -= lr * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + cfg.adam_epsilon);
    }
    result.model.set_params(theta);
  }
  return result;
}

}  // namespace blade
