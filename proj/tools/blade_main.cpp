#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blade/apps.hpp"
#include "blade/formats.hpp"
#include "blade/grid.hpp"
#include "blade/image_io.hpp"
#include "blade/pipeline.hpp"

namespace fs = std::filesystem;
using namespace blade;

namespace {

fs::path manifest_for(const fs::path& out, const std::string& override_path) {
  if (!override_path.empty()) return override_path;
  if (fs::is_directory(out)) return out / "manifest.json";
  return fs::path(out.string() + ".manifest.json");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void save_image(const fs::path& p, const Image& img, int bits, double peak) {
  ensure_parent(p);
  write_image(p, img, WriteOptions{bits, peak});
}

std::vector<fs::path> sequence_dirs(const fs::path& dir) {
  if (fs::exists(dir / "meta.json")) return {dir};
  if (!fs::is_directory(dir)) throw IoError("sequence directory '" + dir.string() + "' not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
  }
  if (out.empty()) throw IoError("no frame sequences under '" + dir.string() + "'");
  std::sort(out.begin(), out.end());
  return out;
}

// Training dt recorded next to a bank, if any.
std::optional<double> bank_dt(const fs::path& bank) {
  const fs::path side(bank.string() + ".manifest.json");
  if (!fs::exists(side)) return std::nullopt;
  const Json j = read_json(side);
  if (j.contains("parameters") && j["parameters"].contains("dt")) {
    return j["parameters"]["dt"].get<double>();
  }
  return std::nullopt;
}

SequenceModel load_model(const std::string& bank, const std::string& bank_y,
                         const std::string& integrator, double dt) {
  if (integrator == "flux") {
    if (bank_y.empty()) throw InvalidArgument("the flux integrator needs --bank-y");
    return SequenceModel::flux(read_bank(bank), read_bank(bank_y), Integrator::euler, dt);
  }
  return SequenceModel::plain(read_bank(bank), parse_integrator(integrator), dt);
}

struct SchemeFlags {
  double dt_hr = 0.1;
  double dx = 1.0;
  std::optional<double> c, alpha, ced_c, rho, gamma;

  void add(CLI::App* cmd) {
    cmd->add_option("--dt-hr", dt_hr, "reference time step")->capture_default_str();
    cmd->add_option("--dx", dx, "reference grid spacing")->capture_default_str();
    cmd->add_option("--c", c, "Perona-Malik contrast");
    cmd->add_option("--alpha", alpha, "CED alpha");
    cmd->add_option("--ced-c", ced_c, "CED C");
    cmd->add_option("--rho", rho, "CED structure-tensor rho");
    cmd->add_option("--gamma", gamma, "Cahn-Hilliard gamma");
  }
  SchemeConfig build(Pde pde) const {
    SchemeConfig s = SchemeConfig::defaults(pde);
    s.dt = dt_hr;
    s.dx = dx;
    if (c) s.c = *c;
    if (alpha) s.alpha = *alpha;
    if (ced_c) s.ced_c = *ced_c;
    if (rho) s.rho = *rho;
    if (gamma) s.gamma = *gamma;
    s.validate();
    return s;
  }
};

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string pde, input_dir, out, manifest;
  int scale = 4;
  int steps = 0;
  int subsample_m = 10;
  int crop = 0;
  SchemeFlags scheme;
};

int cmd_gen_data(const GenDataArgs& a) {
  DataSpec spec;
  spec.scheme = a.scheme.build(parse_pde(a.pde));
  spec.steps_hr = a.steps > 0 ? a.steps
                              : static_cast<int>(std::lround(spec.scheme.stop_time / spec.scheme.dt));
  spec.spatial_factor = a.scale;
  spec.temporal_factor = a.subsample_m;
  spec.crop = a.crop;
  if (spec.steps_hr % spec.temporal_factor != 0) {
    throw InvalidArgument("--steps must be a multiple of --subsample-m");
  }
  const auto inputs = list_images(a.input_dir);
  fs::create_directories(a.out);
  RunManifest man("gen-data");
  man.parameters() = Json{{"scheme", scheme_to_json(spec.scheme)},
                          {"steps_hr", spec.steps_hr},
                          {"spatial_factor", spec.spatial_factor},
                          {"temporal_factor", spec.temporal_factor},
                          {"crop", spec.crop}};
  int count = 0;
  for (const fs::path& in : inputs) {
    man.add_input(in);
    const auto seqs = generate_sequences(read_image(in), spec);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      std::string name = in.stem().string();
      if (spec.crop > 0) name += "_c" + std::to_string(k);
      SequenceMeta meta;
      meta.peak = spec.scheme.peak();
      meta.info = Json{{"pde", std::string(to_string(spec.scheme.pde))},
                       {"scheme", scheme_to_json(spec.scheme)},
                       {"source", in.filename().string()},
                       {"source_sha256", sha256_file(in)},
                       {"spatial_factor", spec.spatial_factor},
                       {"temporal_factor", spec.temporal_factor},
                       {"steps_hr", spec.steps_hr}};
      const fs::path dir = fs::path(a.out) / name;
      write_sequence(dir, seqs[k], meta);
      man.add_output(dir);
      ++count;
    }
  }
  man.metrics()["sequences"] = count;
  man.write(manifest_for(a.out, a.manifest));
  std::cout << "wrote " << count << " sequences to " << a.out << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, pde, out, out_y, loss_csv, manifest;
  TrainConfig cfg;
  BankSpec bank;
  int fp = 5;
  bool no_ls_init = false;
  bool no_augment = false;
  bool flux = false;
};

int cmd_train(TrainArgs a) {
  const fs::path data(a.data);
  if (!fs::is_directory(data)) throw IoError("data directory '" + data.string() + "' not found");
  if (fs::exists(data / "manifest.json")) read_json(data / "manifest.json");  // must parse
  std::vector<FrameSequence> seqs;
  std::string pde;
  for (const fs::path& dir : sequence_dirs(data)) {
    SequenceMeta meta;
    seqs.push_back(read_sequence(dir, &meta));
    const std::string p = meta.info.value("pde", std::string());
    if (pde.empty()) pde = p;
    if (p != pde) throw InvalidArgument("sequences mix PDEs ('" + pde + "', '" + p + "')");
  }
  if (!a.pde.empty() && std::string(to_string(parse_pde(a.pde))) != pde) {
    throw InvalidArgument("--pde " + a.pde + " does not match the data (" + pde + ")");
  }
  a.cfg.least_squares_init = !a.no_ls_init && !a.flux;
  a.cfg.augment = !a.no_augment;
  a.bank.footprint = Footprint{a.fp, a.fp};
  const auto windows = collect_windows(seqs, a.cfg.unroll_steps);
  auto progress = [](const LossPoint& p) {
    std::cout << "iteration " << p.iteration << " loss " << p.loss << "\n";
  };
  TrainResult res;
  if (a.flux) {
    if (a.out_y.empty()) throw InvalidArgument("--flux needs --out-y");
    std::vector<Image> inputs;
    for (const TrainingWindow& w : windows) inputs.push_back(w.input);
    const SelectionConfig sel = calibrate_thresholds(
        inputs, SelectionConfig::with_counts(a.bank.orientations, a.bank.strengths,
                                             a.bank.coherences, 0, a.bank.rho));
    const FilterBank zero(a.bank.footprint, sel);
    res = train(windows, a.cfg, SequenceModel::flux(zero, zero, Integrator::euler, windows[0].dt),
                progress);
  } else {
    res = train_bank(windows, a.cfg, a.bank, progress);
  }
  ensure_parent(a.out);
  write_bank(a.out, res.model.bank);
  const std::string csv = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  write_loss_csv(csv, res.curve);
  RunManifest man("train");
  man.set_seed(a.cfg.seed);
  man.parameters() = Json{{"pde", pde},
                          {"dt", res.model.dt},
                          {"kind", a.flux ? "flux" : "plain"},
                          {"unroll", a.cfg.unroll_steps},
                          {"iterations", a.cfg.iterations},
                          {"learning_rate", a.cfg.learning_rate},
                          {"final_lr_ratio", a.cfg.final_lr_ratio},
                          {"batch", a.cfg.batch_size},
                          {"augment", a.cfg.augment},
                          {"least_squares_init", a.cfg.least_squares_init},
                          {"footprint", a.fp},
                          {"orientations", a.bank.orientations},
                          {"strengths", a.bank.strengths},
                          {"coherences", a.bank.coherences},
                          {"rho", a.bank.rho}};
  for (const fs::path& dir : sequence_dirs(data)) man.add_input(dir / "meta.json");
  man.add_output(a.out);
  if (a.flux) {
    write_bank(a.out_y, res.model.bank_y);
    man.add_output(a.out_y);
  }
  man.add_output(csv);
  man.metrics()["windows"] = windows.size();
  man.metrics()["final_loss"] = mean_loss(res.model, windows, a.cfg.workers);
  man.write(manifest_for(a.out, a.manifest));
  return 0;
}

// ---- evolve -----------------------------------------------------------------

struct EvolveArgs {
  std::string bank, bank_y, input, out, frames_dir, manifest, integrator = "euler";
  int steps = 10;
  std::optional<double> dt;
  double peak = 255.0;
  int bits = 16;
};

int cmd_evolve(const EvolveArgs& a) {
  const double dt = a.dt ? *a.dt : bank_dt(a.bank).value_or(1.0);
  const SequenceModel model = load_model(a.bank, a.bank_y, a.integrator, dt);
  const Image u0 = read_image(a.input, a.peak);
  const FrameSequence seq = evolve(model, u0, a.steps);
  save_image(a.out, seq.frames.back(), a.bits, a.peak);
  RunManifest man("evolve");
  man.parameters() = Json{{"steps", a.steps}, {"dt", dt}, {"integrator", a.integrator},
                          {"peak", a.peak}};
  man.add_input(a.bank);
  if (!a.bank_y.empty()) man.add_input(a.bank_y);
  man.add_input(a.input);
  man.add_output(a.out);
  if (!a.frames_dir.empty()) {
    SequenceMeta meta;
    meta.peak = a.peak;
    meta.info = Json{{"source", a.input}};
    write_sequence(a.frames_dir, seq, meta);
    man.add_output(a.frames_dir);
  }
  const double m0 = u0.mean();
  const double m1 = seq.frames.back().mean();
  const double drift = std::abs(m1 - m0) / std::max(std::abs(m0), 1e-300);
  man.metrics() = Json{{"mean_initial", m0}, {"mean_final", m1}, {"mean_drift", drift}};
  if (a.integrator == "flux") man.metrics()["conserved"] = drift < 1e-12;
  man.write(manifest_for(a.out, a.manifest));
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string reference, test, bank, bank_y, out, manifest, integrator = "euler";
  std::string metrics = "psnr,ssim";
};

int cmd_eval(const EvalArgs& a) {
  bool want_psnr = false;
  bool want_ssim = false;
  std::stringstream ss(a.metrics);
  for (std::string m; std::getline(ss, m, ',');) {
    if (m == "psnr") {
      want_psnr = true;
    } else if (m == "ssim") {
      want_ssim = true;
    } else {
      throw InvalidArgument("unknown metric '" + m + "'");
    }
  }
  if (a.test.empty() == a.bank.empty()) {
    throw InvalidArgument("give exactly one of --test-seq and --bank");
  }
  const auto refs = sequence_dirs(a.reference);
  std::ofstream csv(a.out);
  if (!csv) throw IoError("cannot write '" + a.out + "'");
  csv << "sequence,frame";
  if (want_psnr) csv << ",psnr";
  if (want_ssim) csv << ",ssim";
  csv << "\n" << std::setprecision(10);
  RunManifest man("eval");
  man.parameters() = Json{{"metrics", a.metrics}, {"integrator", a.integrator}};
  double sum_psnr = 0.0;
  double sum_ssim = 0.0;
  for (const fs::path& dir : refs) {
    SequenceMeta meta;
    const FrameSequence ref = read_sequence(dir, &meta);
    man.add_input(dir / "meta.json");
    FrameSequence test;
    if (!a.test.empty()) {
      const fs::path tdir = refs.size() == 1 && fs::exists(fs::path(a.test) / "meta.json")
                                ? fs::path(a.test)
                                : fs::path(a.test) / dir.filename();
      test = read_sequence(tdir);
    } else {
      const SequenceModel model = load_model(a.bank, a.bank_y, a.integrator, ref.dt);
      test = evolve(model, ref[0], static_cast<int>(ref.size()) - 1);
    }
    if (test.size() != ref.size()) {
      throw InvalidArgument("frame counts differ for '" + dir.filename().string() + "' (" +
                            std::to_string(ref.size()) + " vs " + std::to_string(test.size()) +
                            ")");
    }
    double p = 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      csv << dir.filename().string() << ',' << k;
      if (want_psnr) {
        p = psnr(test[k], ref[k], meta.peak);
        csv << ',' << p;
      }
      if (want_ssim) {
        s = mean_ssim(test[k], ref[k], meta.peak);
        csv << ',' << s;
      }
      csv << "\n";
    }
    sum_psnr += p;
    sum_ssim += s;
  }
  if (!a.bank.empty()) man.add_input(a.bank);
  man.add_output(a.out);
  const double n = static_cast<double>(refs.size());
  if (want_psnr) man.metrics()["mean_final_psnr"] = sum_psnr / n;
  if (want_ssim) man.metrics()["mean_final_ssim"] = sum_ssim / n;
  man.metrics()["sequences"] = refs.size();
  man.write(manifest_for(a.out, a.manifest));
  if (want_psnr) std::cout << "mean final-frame PSNR " << sum_psnr / n << "\n";
  if (want_ssim) std::cout << "mean final-frame SSIM " << sum_ssim / n << "\n";
  return 0;
}

// ---- reference --------------------------------------------------------------

struct ReferenceArgs {
  std::string pde, input, out, frames_dir, manifest, guard = "default";
  int steps = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  int bits = 16;
  SchemeFlags scheme;
};

int cmd_reference(const ReferenceArgs& a) {
  const SchemeConfig cfg = a.scheme.build(parse_pde(a.pde));
  const int steps = a.steps > 0 ? a.steps : static_cast<int>(std::lround(cfg.stop_time / cfg.dt));
  Image u0 = read_image(a.input, cfg.peak());
  if (a.noise > 0.0) u0 = add_gaussian_noise(u0, a.noise * cfg.peak() / 255.0, a.seed);
  StabilityGuard guard = StabilityGuard::for_pde(cfg.pde);
  if (a.guard == "finite") {
    guard = StabilityGuard::finite_only();
  } else if (a.guard != "default") {
    throw InvalidArgument("--guard must be default or finite");
  }
  RunManifest man("reference");
  man.set_seed(a.seed);
  man.parameters() = Json{{"scheme", scheme_to_json(cfg)}, {"steps", steps},
                          {"noise_sigma", a.noise}, {"guard", a.guard}};
  man.add_input(a.input);
  const fs::path mpath = manifest_for(a.out, a.manifest);
  FrameSequence seq;
  try {
    seq = run_reference(u0, cfg, steps, guard);
  } catch (const InstabilityError& e) {
    man.metrics()["unstable_step"] = e.step();
    ensure_parent(mpath);
    man.write(mpath);
    throw;
  }
  save_image(a.out, seq.frames.back(), a.bits, cfg.peak());
  man.add_output(a.out);
  if (!a.frames_dir.empty()) {
    SequenceMeta meta;
    meta.peak = cfg.peak();
    meta.info = Json{{"pde", std::string(to_string(cfg.pde))}, {"scheme", scheme_to_json(cfg)}};
    write_sequence(a.frames_dir, seq, meta);
    man.add_output(a.frames_dir);
  }
  man.metrics() = Json{{"mean_initial", u0.mean()}, {"mean_final", seq.frames.back().mean()},
                       {"min_final", seq.frames.back().min()},
                       {"max_final", seq.frames.back().max()}};
  man.write(mpath);
  return 0;
}

// ---- apply ------------------------------------------------------------------

struct ApplyCommon {
  std::string input, out, manifest, truth;
  int bits = 8;
};

void add_truth_metrics(RunManifest& man, const std::string& truth_path, const Image* truth_img,
                       const Image& observed, const Image& result, double peak) {
  Image truth;
  if (truth_img) {
    truth = *truth_img;
  } else if (!truth_path.empty()) {
    truth = read_image(truth_path, peak);
    man.add_input(truth_path);
  } else {
    return;
  }
  man.metrics()["psnr_result"] = psnr(result, truth, peak);
  man.metrics()["ssim_result"] = mean_ssim(result, truth, peak);
  if (observed.same_shape(truth)) {
    man.metrics()["psnr_input"] = psnr(observed, truth, peak);
    man.metrics()["ssim_input"] = mean_ssim(observed, truth, peak);
  }
}

struct DeconvArgs {
  ApplyCommon io;
  std::string bank, degraded_out;
  double psf_sigma = 1.0, lambda = 2.0, dt = 0.5, noise = 0.0;
  int steps = 10;
  std::uint64_t seed = 0;
  bool simulate = false;
};

int cmd_deconv(const DeconvArgs& a) {
  const DegradationModel dm = DegradationModel::gaussian(a.psf_sigma, 1, a.lambda);
  Image input = read_image(a.io.input);
  std::optional<Image> truth;
  Image f = input;
  if (a.simulate) {
    truth = input;
    f = add_gaussian_noise(degrade(dm, input), a.noise, a.seed);
  }
  const SequenceModel model = SequenceModel::plain(read_bank(a.bank), Integrator::euler, a.dt);
  const Image u = deconvolve(model, f, dm, a.steps);
  save_image(a.io.out, u, a.io.bits, 255.0);
  RunManifest man("apply deconv");
  man.set_seed(a.seed);
  man.parameters() = Json{{"psf_sigma", a.psf_sigma}, {"lambda", a.lambda}, {"dt", a.dt},
                          {"steps", a.steps}, {"noise_sigma", a.noise}, {"simulate", a.simulate}};
  man.add_input(a.bank);
  man.add_input(a.io.input);
  man.add_output(a.io.out);
  if (!a.degraded_out.empty()) {
    save_image(a.degraded_out, f, a.io.bits, 255.0);
    man.add_output(a.degraded_out);
  }
  add_truth_metrics(man, a.io.truth, truth ? &*truth : nullptr, f, u, 255.0);
  man.write(manifest_for(a.io.out, a.io.manifest));
  return 0;
}

struct UpscaleArgs {
  ApplyCommon io;
  std::string bank, lanczos_out;
  int factor = 4;
  double psf_sigma = 0.4, lambda = 0.35, dt = 0.5;
  int steps = 10;
  bool projected = false;
  bool simulate = false;
};

int cmd_upscale(const UpscaleArgs& a) {
  const DegradationModel dm = DegradationModel::gaussian(a.psf_sigma, a.factor, a.lambda);
  Image input = read_image(a.io.input);
  std::optional<Image> truth;
  Image f = input;
  if (a.simulate) {
    truth = input;
    f = degrade(dm, input);
    f.set_dx(1.0);
  }
  const SequenceModel model = SequenceModel::plain(read_bank(a.bank), Integrator::euler, a.dt);
  const Image u = a.projected ? projected_upscale(model, f, dm, a.steps)
                              : upscale(model, f, dm, a.steps);
  save_image(a.io.out, u, a.io.bits, 255.0);
  RunManifest man("apply upscale");
  man.parameters() = Json{{"factor", a.factor}, {"psf_sigma", a.psf_sigma},
                          {"lambda", a.lambda}, {"dt", a.dt}, {"steps", a.steps},
                          {"projected", a.projected}, {"simulate", a.simulate}};
  man.add_input(a.bank);
  man.add_input(a.io.input);
  man.add_output(a.io.out);
  const Image lz = lanczos_upscale(f, a.factor);
  if (!a.lanczos_out.empty()) {
    save_image(a.lanczos_out, lz, a.io.bits, 255.0);
    man.add_output(a.lanczos_out);
  }
  add_truth_metrics(man, a.io.truth, truth ? &*truth : nullptr, lz, u, 255.0);
  man.write(manifest_for(a.io.out, a.io.manifest));
  return 0;
}

struct SegmentArgs {
  ApplyCommon io;
  std::string bank, phi_out;
  double mu = 0.04, nu = 0.0, lambda1 = 1.0, lambda2 = 1.0, dt = 0.5, epsilon = 1.0;
  double phi_scale = 1.0;
  int iters = 300;
  bool reference = false, color = false, smoothed = false;
};

int cmd_segment(const SegmentArgs& a) {
  std::vector<Image> channels;
  if (a.color) {
    const ColorImage c = read_color_image(a.io.input, 1.0);
    channels = {c.r, c.g, c.b};
  } else {
    channels = {read_image(a.io.input, 1.0)};
  }
  LevelSet ls;
  ls.phi = checkerboard_phi(channels[0].width(), channels[0].height());
  ls.mu = a.mu;
  ls.nu = a.nu;
  ls.lambda1 = a.lambda1;
  ls.lambda2 = a.lambda2;
  ls.epsilon = a.epsilon;
  ChanVeseConfig cfg;
  cfg.dt = a.dt;
  cfg.phi_scale = a.phi_scale;
  cfg.weights = a.smoothed ? RegionWeights::smoothed : RegionWeights::sharp;
  LevelSet res;
  if (a.reference) {
    res = chan_vese_reference(channels, ls, a.iters, cfg);
  } else {
    if (a.bank.empty()) throw InvalidArgument("segment needs --bank or --reference");
    const SequenceModel model = SequenceModel::plain(read_bank(a.bank), Integrator::euler, 1.0);
    res = chan_vese_evolve(model, channels, ls, a.iters, cfg);
  }
  const auto mask = segmentation_mask(res.phi);
  Image m(res.phi.width(), res.phi.height());
  for (std::size_t i = 0; i < mask.size(); ++i) m[i] = mask[i] ? 255.0 : 0.0;
  save_image(a.io.out, m, 8, 255.0);
  RunManifest man("apply segment");
  man.parameters() = Json{{"mu", a.mu}, {"nu", a.nu}, {"lambda1", a.lambda1},
                          {"lambda2", a.lambda2}, {"dt", a.dt}, {"epsilon", a.epsilon},
                          {"iterations", a.iters}, {"phi_scale", a.phi_scale},
                          {"reference", a.reference}, {"color", a.color},
                          {"weights", a.smoothed ? "smoothed" : "sharp"}};
  if (!a.bank.empty()) man.add_input(a.bank);
  man.add_input(a.io.input);
  man.add_output(a.io.out);
  if (!a.phi_out.empty()) {
    ensure_parent(a.phi_out);
    write_flow(a.phi_out, FlowField(res.phi, Image(res.phi.width(), res.phi.height())));
    man.add_output(a.phi_out);
  }
  man.metrics() = Json{{"c1", res.c1}, {"c2", res.c2},
                       {"energy", chan_vese_energy(channels, res)}};
  if (!a.io.truth.empty()) {
    const Image t = read_image(a.io.truth);
    std::vector<std::uint8_t> tm(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) tm[i] = t[i] >= 127.5 ? 1 : 0;
    man.add_input(a.io.truth);
    man.metrics()["iou"] = mask_iou(mask, tm);
  }
  man.write(manifest_for(a.io.out, a.io.manifest));
  return 0;
}

struct ResampleArgs {
  ApplyCommon io;
  std::string bank_x, bank_y, flow;
  std::vector<double> shift;
  bool bicubic = false;
};

int cmd_resample(const ResampleArgs& a) {
  const Image u = read_image(a.io.input);
  FlowField flow;
  if (!a.flow.empty()) {
    flow = read_flow(a.flow);
  } else if (a.shift.size() == 2) {
    flow = FlowField::uniform(u.width(), u.height(), a.shift[0], a.shift[1]);
  } else {
    throw InvalidArgument("resample needs --flow or --shift DX DY");
  }
  Image out;
  if (a.bicubic) {
    out = bicubic_resample(u, flow);
  } else {
    if (a.bank_x.empty() || a.bank_y.empty()) {
      throw InvalidArgument("resample needs --bank-x and --bank-y (or --bicubic)");
    }
    out = resample(read_bank(a.bank_x), read_bank(a.bank_y), u, flow);
  }
  save_image(a.io.out, out, a.io.bits, 255.0);
  RunManifest man("apply resample");
  man.parameters() = Json{{"method", a.bicubic ? "bicubic" : "blade"}};
  if (!a.flow.empty()) {
    man.add_input(a.flow);
  } else {
    man.parameters()["shift"] = a.shift;
  }
  if (!a.bicubic) {
    man.add_input(a.bank_x);
    man.add_input(a.bank_y);
  }
  man.add_input(a.io.input);
  man.add_output(a.io.out);
  add_truth_metrics(man, a.io.truth, nullptr, u, out, 255.0);
  man.write(manifest_for(a.io.out, a.io.manifest));
  return 0;
}

// ---- train-resampler / make-flow ---------------------------------------------

struct TrainResamplerArgs {
  std::string data, out_x, out_y, manifest;
  int factor = 4, fp = 3;
  double psf_sigma = 0.5, ridge = 1e-6;
  BankSpec bank;
};

int cmd_train_resampler(const TrainResamplerArgs& a) {
  std::vector<Image> corpus;
  RunManifest man("train-resampler");
  for (const fs::path& p : list_images(a.data)) {
    corpus.push_back(read_image(p));
    man.add_input(p);
  }
  TrainConfig tc;
  tc.spatial_factor = a.factor;
  const auto res = train_resampler(
      corpus, a.psf_sigma, tc,
      SelectionConfig::with_counts(a.bank.orientations, a.bank.strengths, a.bank.coherences, 0,
                                   a.bank.rho),
      Footprint{a.fp, a.fp}, a.ridge);
  ensure_parent(a.out_x);
  ensure_parent(a.out_y);
  write_bank(a.out_x, res.bank_x);
  write_bank(a.out_y, res.bank_y);
  man.parameters() = Json{{"factor", a.factor}, {"psf_sigma", a.psf_sigma},
                          {"footprint", a.fp}, {"ridge", a.ridge},
                          {"orientations", a.bank.orientations},
                          {"strengths", a.bank.strengths}, {"coherences", a.bank.coherences}};
  man.add_output(a.out_x);
  man.add_output(a.out_y);
  man.metrics() = Json{{"loss_before", res.loss_before}, {"loss_after", res.loss_after}};
  man.write(manifest_for(a.out_x, a.manifest));
  return 0;
}

struct MakeFlowArgs {
  std::string out;
  int width = 0, height = 0;
  double vx = 0.0, vy = 0.0;
};

int cmd_make_flow(const MakeFlowArgs& a) {
  ensure_parent(a.out);
  write_flow(a.out, FlowField::uniform(a.width, a.height, a.vx, a.vy));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BLADE image PDE toolkit"};
  app.require_subcommand(1);
  std::function<int()> run;

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "reference runs into coarse training sequences");
  c_gd->add_option("--pde", gd.pde, "tv | pm | ced | ch")->required();
  c_gd->add_option("--input-dir", gd.input_dir)->required();
  c_gd->add_option("--out", gd.out)->required();
  c_gd->add_option("--scale", gd.scale, "spatial downscale factor")->capture_default_str();
  c_gd->add_option("--steps", gd.steps, "reference steps (default stop_time / dt)");
  c_gd->add_option("--subsample-m", gd.subsample_m, "keep every M-th frame")->capture_default_str();
  c_gd->add_option("--crop", gd.crop, "train on tiles of this size");
  c_gd->add_option("--manifest", gd.manifest);
  gd.scheme.add(c_gd);
  c_gd->callback([&] { run = [&] { return cmd_gen_data(gd); }; });

  TrainArgs tr;
  tr.cfg.iterations = 1000;
  tr.cfg.learning_rate = 1e-4;
  auto* c_tr = app.add_subcommand("train", "fit a filter bank by unrolled training");
  c_tr->add_option("--data", tr.data, "gen-data output")->required();
  c_tr->add_option("--out", tr.out, "bank file")->required();
  c_tr->add_option("--pde", tr.pde, "check the data PDE");
  c_tr->add_option("--out-y", tr.out_y, "y bank (flux models)");
  c_tr->add_option("--unroll", tr.cfg.unroll_steps)->capture_default_str();
  c_tr->add_option("--seed", tr.cfg.seed)->capture_default_str();
  c_tr->add_option("--iters", tr.cfg.iterations)->capture_default_str();
  c_tr->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
  c_tr->add_option("--final-lr-ratio", tr.cfg.final_lr_ratio)->capture_default_str();
  c_tr->add_option("--batch", tr.cfg.batch_size)->capture_default_str();
  c_tr->add_option("--workers", tr.cfg.workers)->capture_default_str();
  c_tr->add_option("--log-every", tr.cfg.log_every)->capture_default_str();
  c_tr->add_option("--fp", tr.fp, "footprint width")->capture_default_str();
  c_tr->add_option("--orientations", tr.bank.orientations)->capture_default_str();
  c_tr->add_option("--strengths", tr.bank.strengths)->capture_default_str();
  c_tr->add_option("--coherences", tr.bank.coherences)->capture_default_str();
  c_tr->add_option("--rho", tr.bank.rho)->capture_default_str();
  c_tr->add_flag("--no-ls-init", tr.no_ls_init);
  c_tr->add_flag("--no-augment", tr.no_augment);
  c_tr->add_flag("--flux", tr.flux, "train a conservative flux model");
  c_tr->add_option("--loss-csv", tr.loss_csv);
  c_tr->add_option("--manifest", tr.manifest);
  c_tr->callback([&] { run = [&] { return cmd_train(tr); }; });

  EvolveArgs ev;
  auto* c_ev = app.add_subcommand("evolve", "run a trained bank forward");
  c_ev->add_option("--bank", ev.bank)->required();
  c_ev->add_option("--bank-y", ev.bank_y);
  c_ev->add_option("--input", ev.input)->required();
  c_ev->add_option("--out", ev.out)->required();
  c_ev->add_option("--steps", ev.steps)->capture_default_str();
  c_ev->add_option("--dt", ev.dt, "default: training dt");
  c_ev->add_option("--integrator", ev.integrator)
      ->check(CLI::IsMember({"euler", "midpoint", "flux"}))
      ->capture_default_str();
  c_ev->add_option("--peak", ev.peak)->capture_default_str();
  c_ev->add_option("--bit-depth", ev.bits)->check(CLI::IsMember({8, 16}))->capture_default_str();
  c_ev->add_option("--frames-dir", ev.frames_dir);
  c_ev->add_option("--manifest", ev.manifest);
  c_ev->callback([&] { run = [&] { return cmd_evolve(ev); }; });

  EvalArgs ea;
  auto* c_ea = app.add_subcommand("eval", "compare sequences or a bank against references");
  c_ea->add_option("--reference-seq", ea.reference)->required();
  c_ea->add_option("--test-seq", ea.test);
  c_ea->add_option("--bank", ea.bank);
  c_ea->add_option("--bank-y", ea.bank_y);
  c_ea->add_option("--integrator", ea.integrator)
      ->check(CLI::IsMember({"euler", "midpoint", "flux"}))
      ->capture_default_str();
  c_ea->add_option("--metrics", ea.metrics)->capture_default_str();
  c_ea->add_option("--out", ea.out, "CSV")->required();
  c_ea->add_option("--manifest", ea.manifest);
  c_ea->callback([&] { run = [&] { return cmd_eval(ea); }; });

  ReferenceArgs rf;
  auto* c_rf = app.add_subcommand("reference", "classical reference scheme");
  c_rf->add_option("--pde", rf.pde)->required();
  c_rf->add_option("--input", rf.input)->required();
  c_rf->add_option("--out", rf.out)->required();
  c_rf->add_option("--steps", rf.steps, "default stop_time / dt");
  c_rf->add_option("--noise-sigma", rf.noise, "added noise, 0-255 scale");
  c_rf->add_option("--seed", rf.seed)->capture_default_str();
  c_rf->add_option("--guard", rf.guard, "default | finite")->capture_default_str();
  c_rf->add_option("--bit-depth", rf.bits)->check(CLI::IsMember({8, 16}))->capture_default_str();
  c_rf->add_option("--frames-dir", rf.frames_dir);
  c_rf->add_option("--manifest", rf.manifest);
  rf.scheme.add(c_rf);
  c_rf->add_option("--dt", rf.scheme.dt_hr, "time step")->capture_default_str();
  c_rf->callback([&] { run = [&] { return cmd_reference(rf); }; });

  auto* c_ap = app.add_subcommand("apply", "applications of trained banks");
  c_ap->require_subcommand(1);
  auto add_io = [](CLI::App* c, ApplyCommon& io) {
    c->add_option("--input", io.input)->required();
    c->add_option("--out", io.out)->required();
    c->add_option("--truth", io.truth, "ground truth for metrics");
    c->add_option("--bit-depth", io.bits)->check(CLI::IsMember({8, 16}))->capture_default_str();
    c->add_option("--manifest", io.manifest);
  };

  DeconvArgs dc;
  auto* c_dc = c_ap->add_subcommand("deconv", "non-blind deconvolution");
  add_io(c_dc, dc.io);
  c_dc->add_option("--bank", dc.bank)->required();
  c_dc->add_option("--psf-sigma", dc.psf_sigma)->capture_default_str();
  c_dc->add_option("--lambda", dc.lambda)->capture_default_str();
  c_dc->add_option("--dt", dc.dt)->capture_default_str();
  c_dc->add_option("--steps", dc.steps)->capture_default_str();
  c_dc->add_flag("--simulate", dc.simulate, "input is clean: blur and add noise first");
  c_dc->add_option("--noise-sigma", dc.noise, "with --simulate")->capture_default_str();
  c_dc->add_option("--seed", dc.seed)->capture_default_str();
  c_dc->add_option("--degraded-out", dc.degraded_out);
  c_dc->callback([&] { run = [&] { return cmd_deconv(dc); }; });

  UpscaleArgs us;
  auto* c_us = c_ap->add_subcommand("upscale", "upscaling");
  add_io(c_us, us.io);
  c_us->add_option("--bank", us.bank)->required();
  c_us->add_option("--factor", us.factor)->capture_default_str();
  c_us->add_option("--psf-sigma", us.psf_sigma, "fine pixels")->capture_default_str();
  c_us->add_option("--lambda", us.lambda)->capture_default_str();
  c_us->add_option("--dt", us.dt)->capture_default_str();
  c_us->add_option("--steps", us.steps)->capture_default_str();
  c_us->add_flag("--projected", us.projected, "exact data consistency");
  c_us->add_flag("--simulate", us.simulate, "input is high resolution: degrade first");
  c_us->add_option("--lanczos-out", us.lanczos_out);
  c_us->callback([&] { run = [&] { return cmd_upscale(us); }; });

  SegmentArgs sg;
  auto* c_sg = c_ap->add_subcommand("segment", "Chan-Vese segmentation");
  add_io(c_sg, sg.io);
  c_sg->add_option("--bank", sg.bank, "TV bank for the curvature term");
  c_sg->add_flag("--reference", sg.reference, "semi-implicit reference scheme");
  c_sg->add_option("--mu", sg.mu)->capture_default_str();
  c_sg->add_option("--nu", sg.nu)->capture_default_str();
  c_sg->add_option("--lambda1", sg.lambda1)->capture_default_str();
  c_sg->add_option("--lambda2", sg.lambda2)->capture_default_str();
  c_sg->add_option("--dt", sg.dt)->capture_default_str();
  c_sg->add_option("--epsilon", sg.epsilon)->capture_default_str();
  c_sg->add_option("--iters", sg.iters)->capture_default_str();
  c_sg->add_option("--phi-scale", sg.phi_scale)->capture_default_str();
  c_sg->add_flag("--color", sg.color);
  c_sg->add_flag("--smoothed-weights", sg.smoothed);
  c_sg->add_option("--phi-out", sg.phi_out, "level set as a flow file (vx plane)");
  c_sg->callback([&] { run = [&] { return cmd_segment(sg); }; });

  ResampleArgs rs;
  auto* c_rs = c_ap->add_subcommand("resample", "resampling at displaced positions");
  add_io(c_rs, rs.io);
  c_rs->add_option("--bank-x", rs.bank_x);
  c_rs->add_option("--bank-y", rs.bank_y);
  c_rs->add_option("--flow", rs.flow, "BLFLOW01 file");
  c_rs->add_option("--shift", rs.shift, "uniform displacement DX DY")->expected(2);
  c_rs->add_flag("--bicubic", rs.bicubic, "Catmull-Rom baseline");
  c_rs->callback([&] { run = [&] { return cmd_resample(rs); }; });

  TrainResamplerArgs trs;
  auto* c_trs = app.add_subcommand("train-resampler", "fit resampling banks");
  c_trs->add_option("--data", trs.data, "directory of images")->required();
  c_trs->add_option("--out-x", trs.out_x)->required();
  c_trs->add_option("--out-y", trs.out_y)->required();
  c_trs->add_option("--factor", trs.factor)->capture_default_str();
  c_trs->add_option("--psf-sigma", trs.psf_sigma, "observed pixels")->capture_default_str();
  c_trs->add_option("--fp", trs.fp)->capture_default_str();
  c_trs->add_option("--ridge", trs.ridge)->capture_default_str();
  c_trs->add_option("--orientations", trs.bank.orientations)->capture_default_str();
  c_trs->add_option("--strengths", trs.bank.strengths)->capture_default_str();
  c_trs->add_option("--coherences", trs.bank.coherences)->capture_default_str();
  c_trs->add_option("--manifest", trs.manifest);
  c_trs->callback([&] { run = [&] { return cmd_train_resampler(trs); }; });

  MakeFlowArgs mf;
  auto* c_mf = app.add_subcommand("make-flow", "uniform flow field file");
  c_mf->add_option("--width", mf.width)->required();
  c_mf->add_option("--height", mf.height)->required();
  c_mf->add_option("--vx", mf.vx)->capture_default_str();
  c_mf->add_option("--vy", mf.vy)->capture_default_str();
  c_mf->add_option("--out", mf.out)->required();
  c_mf->callback([&] { run = [&] { return cmd_make_flow(mf); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run ? run() : 2;
  } catch (const InstabilityError& e) {
    std::cerr << "error: instability detected at step " << e.step() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
