#include "blade/refsolve.hpp"

#include <cmath>

#include "blade/features.hpp"
#include "blade/fft.hpp"

namespace blade {

std::string_view to_string(Pde pde) {
  switch (pde) {
    case Pde::tv_flow: return "tv_flow";
    case Pde::perona_malik: return "perona_malik";
    case Pde::ced: return "ced";
    case Pde::cahn_hilliard: return "cahn_hilliard";
  }
  return "unknown";
}

Pde parse_pde(std::string_view name) {
  if (name == "tv_flow" || name == "tv") return Pde::tv_flow;
  if (name == "perona_malik" || name == "pm") return Pde::perona_malik;
  if (name == "ced") return Pde::ced;
  if (name == "cahn_hilliard" || name == "ch") return Pde::cahn_hilliard;
  throw InvalidArgument("unknown PDE '" + std::string(name) + "'");
}

SchemeConfig SchemeConfig::defaults(Pde pde) {
  SchemeConfig cfg;
  cfg.pde = pde;
  switch (pde) {
    case Pde::tv_flow: cfg.stop_time = 20.0; break;
    case Pde::perona_malik: cfg.stop_time = 20.0; break;
    case Pde::ced: cfg.stop_time = 40.0; break;
    case Pde::cahn_hilliard: cfg.stop_time = 20.0; break;
  }
  return cfg;
}

void SchemeConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("scheme dt must be positive");
  if (!(dx > 0.0)) throw InvalidArgument("scheme dx must be positive");
  if (!(epsilon_reg > 0.0)) throw InvalidArgument("epsilon_reg must be positive");
  if (pde == Pde::ced && !(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("CED alpha must lie in (0, 1]");
  }
  if (pde == Pde::perona_malik && !(c > 0.0)) {
    throw InvalidArgument("Perona-Malik contrast c must be positive");
  }
  if (pde == Pde::cahn_hilliard && !(gamma > 0.0)) {
    throw InvalidArgument("Cahn-Hilliard gamma must be positive");
  }
}

StabilityGuard StabilityGuard::for_pde(Pde pde) {
  if (pde == Pde::cahn_hilliard) return {true, 0.5, 1.0, 0.0, 0.0};
  if (pde == Pde::ced) return {true, 0.25, 1.0, 1.02, 1.0};
  return {true, 0.05, 1.0, 1.02, 1.0};
}

double total_variation(const Image& u) {
  double acc = 0.0;
  for (int n = 0; n < u.height(); ++n) {
    for (int m = 0; m < u.width(); ++m) {
      if (m + 1 < u.width()) acc += std::abs(u(m + 1, n) - u(m, n));
      if (n + 1 < u.height()) acc += std::abs(u(m, n + 1) - u(m, n));
    }
  }
  return acc;
}

StabilityMonitor::StabilityMonitor(const Image& u0, const StabilityGuard& guard)
    : guard_(guard) {
  const double lo = u0.min();
  const double hi = u0.max();
  const double margin = guard.margin_fraction * std::max(hi - lo, guard.margin_floor);
  lower_ = lo - margin;
  upper_ = hi + margin;
  if (guard.tv_growth > 0.0) {
    const double edges = static_cast<double>(std::max(u0.width() - 1, 0)) * u0.height() +
                         static_cast<double>(std::max(u0.height() - 1, 0)) * u0.width();
    tv_limit_ = guard.tv_growth * total_variation(u0) + guard.tv_slack * edges + 1e-9;
  }
}

void StabilityMonitor::check(const Image& frame, int step) const {
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double v = frame[i];
    if (!std::isfinite(v)) {
      throw InstabilityError(step, "non-finite sample at step " +
                                       std::to_string(step));
    }
    if (guard_.check_range && (v < lower_ || v > upper_)) {
      throw InstabilityError(
          step, "sample " + std::to_string(v) + " left admissible range [" +
                    std::to_string(lower_) + ", " + std::to_string(upper_) +
                    "] at step " + std::to_string(step));
    }
  }
  if (guard_.tv_growth > 0.0) {
    const double r = total_variation(frame);
    if (r > tv_limit_) {
      throw InstabilityError(step, "total variation " + std::to_string(r) +
                                       " exceeded the limit " +
                                       std::to_string(tv_limit_) +
                                       " at step " + std::to_string(step));
    }
  }
}

namespace {

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

}  // namespace

Image tv_flow_step(const Image& u, const SchemeConfig& cfg) {
  const int w = u.width();
  const int h = u.height();
  const double inv_dx = 1.0 / cfg.dx;
  const double eps2 = cfg.epsilon_reg * cfg.epsilon_reg;
  // Fluxes at m = -1 .. w-1 (x) and n = -1 .. h-1 (y) on the replicated grid;
  // those through the outer border vanish because the forward difference does.
  auto d = [&](int m, int n, int dm, int dn) {
    return (u.at_clamped(m + dm, n + dn) - u.at_clamped(m, n)) * inv_dx;
  };
  auto flux_x = [&](int m, int n) {
    const double dxp = d(m, n, 1, 0);
    if (dxp == 0.0) return 0.0;
    const double dyp = d(m, n, 0, 1);
    const double dym = -d(m, n, 0, -1);
    const double t = minmod(dyp, dym);
    return dxp / std::sqrt(dxp * dxp + t * t + eps2);
  };
  auto flux_y = [&](int m, int n) {
    const double dyp = d(m, n, 0, 1);
    if (dyp == 0.0) return 0.0;
    const double dxp = d(m, n, 1, 0);
    const double dxm = -d(m, n, -1, 0);
    const double t = minmod(dxp, dxm);
    return dyp / std::sqrt(dyp * dyp + t * t + eps2);
  };
  std::vector<double> fx(static_cast<std::size_t>(w + 1) * h);
  std::vector<double> fy(static_cast<std::size_t>(w) * (h + 1));
  for (int n = 0; n < h; ++n) {
    for (int m = -1; m < w; ++m) fx[static_cast<std::size_t>(n) * (w + 1) + m + 1] = flux_x(m, n);
  }
  for (int n = -1; n < h; ++n) {
    for (int m = 0; m < w; ++m) fy[static_cast<std::size_t>(n + 1) * w + m] = flux_y(m, n);
  }
  Image out = u;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double div_x = fx[static_cast<std::size_t>(n) * (w + 1) + m + 1] -
                           fx[static_cast<std::size_t>(n) * (w + 1) + m];
      const double div_y = fy[static_cast<std::size_t>(n + 1) * w + m] -
                           fy[static_cast<std::size_t>(n) * w + m];
      out(m, n) += cfg.dt * (div_x + div_y) * inv_dx;
    }
  }
  return out;
}

Image perona_malik_step(const Image& u, const SchemeConfig& cfg) {
  const int w = u.width();
  const int h = u.height();
  const double inv_dx = 1.0 / cfg.dx;
  const double inv_c2 = 1.0 / (cfg.c * cfg.c);
  auto flux = [&](double diff) {
    const double s = diff * inv_dx;
    return s / (1.0 + s * s * inv_c2);
  };
  Image out = u;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double here = u(m, n);
      const double e = flux(u.at_clamped(m + 1, n) - here);
      const double west = flux(here - u.at_clamped(m - 1, n));
      const double s = flux(u.at_clamped(m, n + 1) - here);
      const double north = flux(here - u.at_clamped(m, n - 1));
      out(m, n) += cfg.dt * inv_dx * (e - west + s - north);
    }
  }
  return out;
}

namespace {

// 1/32 [-3 0 3; -10 0 10; -3 0 3] as correlation taps kx[dy+1][dx+1];
// the y filter is its transpose.
constexpr double kScharr[3][3] = {
    {-3.0 / 32, 0.0, 3.0 / 32},
    {-10.0 / 32, 0.0, 10.0 / 32},
    {-3.0 / 32, 0.0, 3.0 / 32},
};

}  // namespace

void scharr_gradient(const Image& u, double dx, Image& gx, Image& gy) {
  const int w = u.width();
  const int h = u.height();
  gx = Image(w, h, 0.0, u.dx());
  gy = Image(w, h, 0.0, u.dx());
  const double inv_dx = 1.0 / dx;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      double ax = 0.0;
      double ay = 0.0;
      for (int j = -1; j <= 1; ++j) {
        for (int i = -1; i <= 1; ++i) {
          const double v = u.at_clamped(m + i, n + j);
          ax += kScharr[j + 1][i + 1] * v;
          ay += kScharr[i + 1][j + 1] * v;
        }
      }
      gx(m, n) = ax * inv_dx;
      gy(m, n) = ay * inv_dx;
    }
  }
}

Image scharr_divergence(const Image& jx, const Image& jy, double dx) {
  require_same_shape(jx, jy, "scharr_divergence");
  const int w = jx.width();
  const int h = jx.height();
  Image out(w, h, 0.0, jx.dx());
  const double inv_dx = 1.0 / dx;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double fx = jx(m, n) * inv_dx;
      const double fy = jy(m, n) * inv_dx;
      for (int j = -1; j <= 1; ++j) {
        const int nn = std::clamp(n + j, 0, h - 1);
        for (int i = -1; i <= 1; ++i) {
          const int mm = std::clamp(m + i, 0, w - 1);
          out(mm, nn) -= kScharr[j + 1][i + 1] * fx + kScharr[i + 1][j + 1] * fy;
        }
      }
    }
  }
  return out;
}

DiffusionTensor ced_tensor(const Image& u, const SchemeConfig& cfg) {
  Image scaled = u;
  scaled.set_dx(cfg.dx);
  const TensorField j = structure_tensor(scaled, cfg.rho);
  const int w = u.width();
  const int h = u.height();
  DiffusionTensor d{Image(w, h), Image(w, h), Image(w, h)};
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Eigen2 e = eigen_decompose(j.xx[i], j.xy[i], j.yy[i]);
    const double gap = e.lambda1 - e.lambda2;
    const double mu1 = cfg.alpha;
    const double mu2 = gap > 0.0
                           ? cfg.alpha + (1.0 - cfg.alpha) * std::exp(-cfg.ced_c / (gap * gap))
                           : cfg.alpha;
    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    d.xx[i] = mu1 * c * c + mu2 * s * s;
    d.xy[i] = (mu1 - mu2) * c * s;
    d.yy[i] = mu1 * s * s + mu2 * c * c;
  }
  return d;
}

Image ced_step(const Image& u, const SchemeConfig& cfg) {
  const DiffusionTensor d = ced_tensor(u, cfg);
  Image gx, gy;
  scharr_gradient(u, cfg.dx, gx, gy);
  Image jx(u.width(), u.height()), jy(u.width(), u.height());
  for (std::size_t i = 0; i < u.size(); ++i) {
    jx[i] = d.xx[i] * gx[i] + d.xy[i] * gy[i];
    jy[i] = d.xy[i] * gx[i] + d.yy[i] * gy[i];
  }
  Image out = u;
  out.add_scaled(scharr_divergence(jx, jy, cfg.dx), cfg.dt);
  return out;
}

Image cahn_hilliard_step(const Image& u, const SchemeConfig& cfg) {
  const int w = u.width();
  const int h = u.height();
  const double inv_dx2 = 1.0 / (cfg.dx * cfg.dx);
  Image wp(w, h);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = u[i];
    wp[i] = 2.0 * v * (v - 1.0) * (2.0 * v - 1.0);
  }
  auto wrap = [](int i, int n) { return (i % n + n) % n; };
  Image rhs = u;
  for (int n = 0; n < h; ++n) {
    for (int m = 0; m < w; ++m) {
      const double lap = (wp(wrap(m + 1, w), n) + wp(wrap(m - 1, w), n) +
                          wp(m, wrap(n + 1, h)) + wp(m, wrap(n - 1, h)) -
                          4.0 * wp(m, n)) *
                         inv_dx2;
      rhs(m, n) += cfg.dt * lap;
    }
  }
  Spectrum s = fft2(rhs);
  for (int l = 0; l < h; ++l) {
    for (int k = 0; k < w; ++k) {
      const double lap = laplacian_symbol(k, l, w, h, cfg.dx);
      s(k, l) /= 1.0 + cfg.dt * cfg.gamma * lap * lap;
    }
  }
  return ifft2(s, u.dx());
}

Image reference_step(const Image& u, const SchemeConfig& cfg) {
  switch (cfg.pde) {
    case Pde::tv_flow: return tv_flow_step(u, cfg);
    case Pde::perona_malik: return perona_malik_step(u, cfg);
    case Pde::ced: return ced_step(u, cfg);
    case Pde::cahn_hilliard: return cahn_hilliard_step(u, cfg);
  }
  throw InvalidArgument("unknown PDE");
}

FrameSequence run_reference(const Image& u0, const SchemeConfig& cfg, int steps,
                            const StabilityGuard& guard) {
  cfg.validate();
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  const StabilityMonitor monitor(u0, guard);
  FrameSequence seq;
  seq.dt = cfg.dt;
  seq.frames.reserve(static_cast<std::size_t>(steps) + 1);
  seq.frames.push_back(u0);
  for (int k = 1; k <= steps; ++k) {
    Image next = reference_step(seq.frames.back(), cfg);
    monitor.check(next, k);
    seq.frames.push_back(std::move(next));
  }
  return seq;
}

FrameSequence run_reference(const Image& u0, const SchemeConfig& cfg, int steps) {
  return run_reference(u0, cfg, steps, StabilityGuard::for_pde(cfg.pde));
}

}  // namespace blade
