#include "blade/integrate.hpp"

#include <algorithm>

namespace blade {

std::string_view to_string(Integrator integrator) {
  return integrator == Integrator::euler ? "euler" : "midpoint";
}

Integrator parse_integrator(std::string_view name) {
  if (name == "euler") return Integrator::euler;
  if (name == "midpoint") return Integrator::midpoint;
  throw InvalidArgument("unknown integrator '" + std::string(name) + "'");
}

SequenceModel SequenceModel::plain(FilterBank bank, Integrator integrator, double dt) {
  SequenceModel m;
  m.kind = Kind::plain;
  m.bank = std::move(bank);
  m.integrator = integrator;
  m.dt = dt;
  m.validate();
  return m;
}

SequenceModel SequenceModel::flux(FilterBank bank_x, FilterBank bank_y,
                                  Integrator integrator, double dt) {
  SequenceModel m;
  m.kind = Kind::flux;
  m.bank = std::move(bank_x);
  m.bank_y = std::move(bank_y);
  m.integrator = integrator;
  m.dt = dt;
  m.validate();
  return m;
}

std::size_t SequenceModel::num_params() const {
  return bank.taps.size() + (kind == Kind::flux ? bank_y.taps.size() : 0);
}

std::vector<double> SequenceModel::params() const {
  std::vector<double> p(bank.taps);
  if (kind == Kind::flux) p.insert(p.end(), bank_y.taps.begin(), bank_y.taps.end());
  return p;
}

void SequenceModel::set_params(std::span<const double> p) {
  if (p.size() != num_params()) throw InvalidArgument("parameter vector has wrong size");
  std::copy_n(p.begin(), bank.taps.size(), bank.taps.begin());
  if (kind == Kind::flux) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(bank.taps.size()), p.end(),
              bank_y.taps.begin());
  }
}

void SequenceModel::validate() const {
  if (!(dt >= 0.0)) throw InvalidArgument("model dt must be non-negative");
  bank.validate();
  if (kind == Kind::flux) bank_y.validate();
}

Image flux_divergence(const Image& gx, const Image& gy) {
  require_same_shape(gx, gy, "flux_divergence");
  const int w = gx.width();
  const int h = gx.height();
  Image d(w, h, 0.0, gx.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double right = m + 1 < w ? gx(m, n) : 0.0;
      const double left = m > 0 ? gx(m - 1, n) : 0.0;
      const double down = n + 1 < h ? gy(m, n) : 0.0;
      const double up = n > 0 ? gy(m, n - 1) : 0.0;
      d(m, n) = right - left + down - up;
    }
  }
  return d;
}

void flux_divergence_adjoint(const Image& g, Image& gx, Image& gy) {
  const int w = g.width();
  const int h = g.height();
  gx = Image(w, h, 0.0, g.dx());
  gy = Image(w, h, 0.0, g.dx());
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      if (m + 1 < w) gx(m, n) = g(m, n) - g(m + 1, n);
      if (n + 1 < h) gy(m, n) = g(m, n) - g(m, n + 1);
    }
  }
}

Image flux_time_derivative(const FilterBank& bank_x, const FilterBank& bank_y,
                           const Image& u) {
  return flux_divergence(select_and_apply(bank_x, u), select_and_apply(bank_y, u));
}

Image time_derivative(const SequenceModel& model, const Image& u,
                      EstimatorRecord* record) {
  if (model.kind == SequenceModel::Kind::plain) {
    SelectionMap sel = select_for(model.bank, u);
    Image out = blade_apply(model.bank, sel, u);
    if (record) record->sel = std::move(sel);
    return out;
  }
  SelectionMap sx = select_for(model.bank, u);
  // Both banks normally share one selection config; skip the second pass then.
  SelectionMap sy = model.bank_y.selection == model.bank.selection
                        ? sx
                        : select_for(model.bank_y, u);
  Image out = flux_divergence(blade_apply(model.bank, sx, u),
                              blade_apply(model.bank_y, sy, u));
  if (record) {
    record->sel = std::move(sx);
    record->sel_y = std::move(sy);
  }
  return out;
}

void time_derivative_backward(const SequenceModel& model, const Image& u,
                              const EstimatorRecord& record, const Image& g,
                              double scale, std::span<double> tap_grad,
                              Image* u_grad) {
  if (tap_grad.size() != model.num_params()) {
    throw InvalidArgument("tap gradient buffer has wrong size");
  }
  const std::size_t nx = model.bank.taps.size();
  if (model.kind == SequenceModel::Kind::plain) {
    blade_backward_accumulate(model.bank, record.sel, u, g, scale, tap_grad, u_grad);
    return;
  }
  Image gx, gy;
  flux_divergence_adjoint(g, gx, gy);
  blade_backward_accumulate(model.bank, record.sel, u, gx, scale,
                            tap_grad.subspan(0, nx), u_grad);
  blade_backward_accumulate(model.bank_y, record.sel_y, u, gy, scale,
                            tap_grad.subspan(nx), u_grad);
}

Image model_step(const SequenceModel& model, const Image& u, StepTape* tape) {
  if (tape) tape->u = u;
  Image e1 = time_derivative(model, u, tape ? &tape->first : nullptr);
  if (model.integrator == Integrator::euler) {
    Image out = u;
    out.add_scaled(e1, model.dt);
    return out;
  }
  Image mid = u;
  mid.add_scaled(e1, 0.5 * model.dt);
  Image e2 = time_derivative(model, mid, tape ? &tape->second : nullptr);
  Image out = u;
  out.add_scaled(e2, model.dt);
  if (tape) tape->mid = std::move(mid);
  return out;
}

Image model_step(const SequenceModel& model, const Image& u) {
  return model_step(model, u, nullptr);
}

Image euler_step(const SequenceModel& model, const Image& u) {
  SequenceModel m = model;
  m.integrator = Integrator::euler;
  return model_step(m, u, nullptr);
}

Image midpoint_step(const SequenceModel& model, const Image& u) {
  SequenceModel m = model;
  m.integrator = Integrator::midpoint;
  return model_step(m, u, nullptr);
}

Image model_step_backward(const SequenceModel& model, const StepTape& tape,
                          const Image& g, std::span<double> tap_grad) {
  Image gu = g;
  if (model.integrator == Integrator::euler) {
    time_derivative_backward(model, tape.u, tape.first, g, model.dt, tap_grad, &gu);
    return gu;
  }
  Image gmid(g.width(), g.height(), 0.0, g.dx());
  time_derivative_backward(model, tape.mid, tape.second, g, model.dt, tap_grad, &gmid);
  gu += gmid;
  time_derivative_backward(model, tape.u, tape.first, gmid, 0.5 * model.dt,
                           tap_grad, &gu);
  return gu;
}

FrameSequence evolve(const SequenceModel& model, const Image& u0, int steps,
                     const StabilityGuard& guard) {
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  model.validate();
  const StabilityMonitor monitor(u0, guard);
  FrameSequence seq;
  seq.dt = model.dt > 0.0 ? model.dt : 1.0;
  seq.frames.reserve(static_cast<std::size_t>(steps) + 1);
  seq.frames.push_back(u0);
  for (int k = 1; k <= steps; ++k) {
    Image next = model_step(model, seq.frames.back());
    monitor.check(next, k);
    seq.frames.push_back(std::move(next));
  }
  return seq;
}

}  // namespace blade
