#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "blade/integrate.hpp"

using namespace blade;
using testutil::max_abs_diff;
using testutil::random_image;

namespace {

SelectionConfig small_selection() {
  SelectionConfig s = SelectionConfig::with_counts(4, 2, 1);
  s.strength_thresholds = {20.0};
  return s;
}

FilterBank random_bank(std::uint64_t seed, double scale = 0.05) {
  FilterBank b(Footprint{3, 3}, small_selection());
  testutil::randomize_taps(b, seed, scale);
  return b;
}

}  // namespace

TEST_CASE("integrator names and model validation") {
  CHECK(parse_integrator("midpoint") == Integrator::midpoint);
  CHECK(to_string(Integrator::euler) == "euler");
  CHECK_THROWS_AS(parse_integrator("rk4"), InvalidArgument);
  CHECK_THROWS_AS(SequenceModel::plain(random_bank(1), Integrator::euler, -1.0).validate(),
                  InvalidArgument);
  const SequenceModel f = SequenceModel::flux(random_bank(1), random_bank(2), Integrator::euler, 1.0);
  CHECK(f.num_params() == 2 * random_bank(1).taps.size());
  std::vector<double> p = f.params();
  p[0] = 9.0;
  SequenceModel g = f;
  g.set_params(p);
  CHECK(g.bank.taps[0] == 9.0);
  CHECK_THROWS_AS(g.set_params(std::vector<double>(3)), InvalidArgument);
}

TEST_CASE("euler and midpoint steps") {
  const Image u = random_image(10, 9, 3);
  const FilterBank zero(Footprint{3, 3}, small_selection());
  for (Integrator it : {Integrator::euler, Integrator::midpoint}) {
    CHECK(max_abs_diff(model_step(SequenceModel::plain(zero, it, 0.7), u), u) == 0.0);
    CHECK(max_abs_diff(model_step(SequenceModel::plain(random_bank(4), it, 0.0), u), u) == 0.0);
  }
  const double a = 0.3;
  const FilterBank delta = FilterBank::delta(Footprint{3, 3}, small_selection(), a);
  const Image e = euler_step(SequenceModel::plain(delta, Integrator::euler, 1.0), u);
  CHECK(max_abs_diff(e, (1.0 + a) * u) < 1e-12);
  const double dt = 0.4;
  const Image m = midpoint_step(SequenceModel::plain(delta, Integrator::midpoint, dt), u);
  const double factor = 1.0 + a * dt + 0.5 * (a * dt) * (a * dt);
  CHECK(max_abs_diff(m, factor * u) < 1e-12);
}

TEST_CASE("flux derivative telescopes") {
  const FilterBank one = FilterBank::delta(Footprint{1, 1}, SelectionConfig::with_counts(1, 1, 1));
  const FilterBank zero(Footprint{1, 1}, SelectionConfig::with_counts(1, 1, 1));
  const Image row(5, 1, 1.0);
  const Image d = flux_time_derivative(one, zero, row);
  CHECK(d[0] != 0.0);
  CHECK(d[4] != 0.0);
  CHECK(d[1] == 0.0);
  CHECK(d[2] == 0.0);
  CHECK(d[3] == 0.0);
  CHECK(d[0] + d[4] == 0.0);
  CHECK(std::abs(d[0]) == 1.0);

  const Image z = flux_time_derivative(zero, zero, random_image(6, 6, 1));
  CHECK(z.max() == 0.0);
  CHECK(z.min() == 0.0);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image u = random_image(9, 7, 10 + s);
    const Image dd = flux_time_derivative(random_bank(s, 1.0), random_bank(s + 100, 1.0), u);
    CHECK(std::abs(dd.sum()) < 1e-10);
  }

  // adjoint of the difference operator
  const Image gx = random_image(7, 5, 1, -1, 1);
  const Image gy = random_image(7, 5, 2, -1, 1);
  const Image g = random_image(7, 5, 3, -1, 1);
  Image ax, ay;
  flux_divergence_adjoint(g, ax, ay);
  CHECK(dot(flux_divergence(gx, gy), g) == doctest::Approx(dot(gx, ax) + dot(gy, ay)).epsilon(1e-12));
}

TEST_CASE("evolve") {
  const Image u = random_image(12, 12, 5);
  const SequenceModel plain = SequenceModel::plain(random_bank(6), Integrator::euler, 0.5);
  const FrameSequence s0 = evolve(plain, u, 0);
  CHECK(s0.size() == 1);
  CHECK(max_abs_diff(s0[0], u) == 0.0);
  const FrameSequence s = evolve(plain, u, 4);
  CHECK(s.size() == 5);
  CHECK(s.dt == 0.5);
  CHECK(max_abs_diff(s[2], model_step(plain, s[1])) == 0.0);

  FilterBank bx = random_bank(7);
  FilterBank by = random_bank(8);
  testutil::randomize_diffusive_flux(bx, by, 9);
  const SequenceModel flux = SequenceModel::flux(bx, by, Integrator::midpoint, 0.5);
  const FrameSequence f = evolve(flux, u, 1000);
  for (const Image& fr : f.frames) {
    CHECK(std::abs(fr.mean() - u.mean()) / u.mean() < 1e-12);
  }

  FilterBank blow = FilterBank::delta(Footprint{3, 3}, small_selection(), 5.0);
  CHECK_THROWS_AS(evolve(SequenceModel::plain(blow, Integrator::euler, 1.0), u, 1000),
                  InstabilityError);
}

TEST_CASE("step backward matches finite differences") {
  const Image u = random_image(8, 7, 9, 0, 50);
  const Image g = random_image(8, 7, 10, -1, 1);
  for (int variant = 0; variant < 4; ++variant) {
    const Integrator it = variant % 2 ? Integrator::midpoint : Integrator::euler;
    SequenceModel model = variant < 2
                              ? SequenceModel::plain(random_bank(11), it, 0.3)
                              : SequenceModel::flux(random_bank(12), random_bank(13), it, 0.3);
    StepTape tape;
    model_step(model, u, &tape);
    std::vector<double> grad(model.num_params(), 0.0);
    const Image du = model_step_backward(model, tape, g, grad);

    const std::vector<double> p0 = model.params();
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t t = 0; t < p0.size(); t += 3) {
      std::vector<double> pp = p0, pm = p0;
      pp[t] += h;
      pm[t] -= h;
      SequenceModel mp = model, mm = model;
      mp.set_params(pp);
      mm.set_params(pm);
      const double fd = (dot(g, model_step(mp, u)) - dot(g, model_step(mm, u))) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[t]) / std::max(std::abs(fd), 1e-4));
    }
    CHECK(worst < 1e-6);

    // input gradient: only valid where the perturbation keeps every selection
    int checked = 0;
    for (std::size_t i = 0; i < u.size(); i += 5) {
      Image up = u, um = u;
      up[i] += h;
      um[i] -= h;
      StepTape tp, tm;
      const Image vp = model_step(model, up, &tp);
      const Image vm = model_step(model, um, &tm);
      if (tp.first.sel != tape.first.sel || tm.first.sel != tape.first.sel ||
          tp.second.sel != tape.second.sel || tm.second.sel != tape.second.sel ||
          tp.first.sel_y != tape.first.sel_y || tm.first.sel_y != tape.first.sel_y) {
        continue;
      }
      const double fd = (dot(g, vp) - dot(g, vm)) / (2 * h);
      CHECK(std::abs(fd - du[i]) <= 1e-6 * std::max(std::abs(fd), 1e-2));
      ++checked;
    }
    CHECK(checked > 0);
  }
}
