#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "blade/apps.hpp"
#include "blade/formats.hpp"
#include "blade/grid.hpp"
#include "blade/integrate.hpp"
#include "blade/pipeline.hpp"
#include "blade/refsolve.hpp"
#include "blade/train.hpp"

namespace py = pybind11;
using namespace blade;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Image(w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Image& img) {
  Array out({img.height(), img.width()});
  std::copy(img.storage().begin(), img.storage().end(), out.mutable_data());
  return out;
}

std::vector<Array> to_arrays(const FrameSequence& s) {
  std::vector<Array> out;
  for (const Image& f : s.frames) out.push_back(to_array(f));
  return out;
}

SequenceModel make_model(const FilterBank& bank, const std::optional<FilterBank>& bank_y,
                         const std::string& integrator, double dt) {
  if (bank_y) return SequenceModel::flux(bank, *bank_y, parse_integrator(integrator), dt);
  return SequenceModel::plain(bank, parse_integrator(integrator), dt);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive-filter PDE solvers for images";

  auto base = py::register_exception<Error>(m, "BladeError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  static py::handle instability =
      py::exception<InstabilityError>(m, "InstabilityError", base.ptr()).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InstabilityError& e) {
      py::object cls = py::reinterpret_borrow<py::object>(instability);
      py::object exc = cls(e.what());
      exc.attr("step") = e.step();
      PyErr_SetObject(cls.ptr(), exc.ptr());
    }
  });

  py::class_<FilterBank>(m, "FilterBank")
      .def_property_readonly("num_filters", &FilterBank::num_filters)
      .def_property_readonly("footprint",
                             [](const FilterBank& b) {
                               return py::make_tuple(b.footprint.width, b.footprint.height);
                             })
      .def_property(
          "taps",
          [](const FilterBank& b) {
            Array a({b.num_filters(), b.footprint.height, b.footprint.width});
            std::copy(b.taps.begin(), b.taps.end(), a.mutable_data());
            return a;
          },
          [](FilterBank& b, const Array& a) {
            if (static_cast<std::size_t>(a.size()) != b.taps.size()) {
              throw InvalidArgument("tap array has the wrong size");
            }
            std::copy(a.data(), a.data() + a.size(), b.taps.begin());
          })
      .def("__repr__", [](const FilterBank& b) {
        return "<FilterBank " + std::to_string(b.num_filters()) + " filters, " +
               std::to_string(b.footprint.width) + "x" + std::to_string(b.footprint.height) + ">";
      });

  m.def("load_bank", [](const std::filesystem::path& p) { return read_bank(p); }, py::arg("path"));
  m.def("save_bank", [](const std::filesystem::path& p, const FilterBank& b) { write_bank(p, b); },
        py::arg("path"), py::arg("bank"));
  m.def(
      "zero_bank",
      [](int footprint, int orientations, int strengths, int coherences,
         const std::vector<Array>& calibrate) {
        std::vector<Image> imgs;
        for (const Array& a : calibrate) imgs.push_back(to_image(a));
        SelectionConfig sel = SelectionConfig::with_counts(orientations, strengths, coherences);
        if (!imgs.empty()) sel = calibrate_thresholds(imgs, sel);
        return FilterBank(Footprint{footprint, footprint}, sel);
      },
      py::arg("footprint") = 5, py::arg("orientations") = 24, py::arg("strengths") = 3,
      py::arg("coherences") = 3, py::arg("calibrate") = std::vector<Array>{});

  m.def(
      "reference",
      [](const Array& u, const std::string& pde, int steps, std::optional<double> dt) {
        SchemeConfig cfg = SchemeConfig::defaults(parse_pde(pde));
        if (dt) cfg.dt = *dt;
        if (steps < 0) steps = static_cast<int>(std::lround(cfg.stop_time / cfg.dt));
        return to_arrays(run_reference(to_image(u), cfg, steps));
      },
      py::arg("u"), py::arg("pde"), py::arg("steps") = -1, py::arg("dt") = py::none(),
      "Reference scheme frames u(0) .. u(steps).");

  m.def(
      "target_sequence",
      [](const Array& u, const std::string& pde, int factor, int m_sub, int steps) {
        const SchemeConfig cfg = SchemeConfig::defaults(parse_pde(pde));
        TrainConfig tc;
        tc.spatial_factor = factor;
        tc.temporal_factor = m_sub;
        const FrameSequence s = make_target_sequence(to_image(u), cfg, tc, steps);
        return py::make_tuple(to_arrays(s), s.dt);
      },
      py::arg("u"), py::arg("pde"), py::arg("factor") = 4, py::arg("subsample_m") = 10,
      py::arg("steps") = 200, "Coarse training frames and their time step.");

  m.def(
      "evolve",
      [](const FilterBank& bank, const Array& u, int steps, double dt,
         const std::string& integrator, const std::optional<FilterBank>& bank_y) {
        return to_arrays(evolve(make_model(bank, bank_y, integrator, dt), to_image(u), steps));
      },
      py::arg("bank"), py::arg("u"), py::arg("steps"), py::arg("dt") = 1.0,
      py::arg("integrator") = "euler", py::arg("bank_y") = py::none());

  m.def(
      "train",
      [](const std::vector<std::vector<Array>>& sequences, double dt, int iterations,
         double lr, int unroll, int batch, std::uint64_t seed, int footprint, int orientations,
         int strengths, int coherences, bool least_squares_init) {
        std::vector<FrameSequence> seqs;
        for (const auto& s : sequences) {
          FrameSequence f;
          f.dt = dt;
          for (const Array& a : s) f.frames.push_back(to_image(a));
          seqs.push_back(std::move(f));
        }
        TrainConfig tc;
        tc.iterations = iterations;
        tc.learning_rate = lr;
        tc.unroll_steps = unroll;
        tc.batch_size = batch;
        tc.seed = seed;
        tc.least_squares_init = least_squares_init;
        BankSpec spec;
        spec.footprint = {footprint, footprint};
        spec.orientations = orientations;
        spec.strengths = strengths;
        spec.coherences = coherences;
        TrainResult r;
        {
          py::gil_scoped_release nogil;
          r = train_bank(collect_windows(seqs, unroll), tc, spec);
        }
        std::vector<std::pair<int, double>> curve;
        for (const LossPoint& p : r.curve) curve.emplace_back(p.iteration, p.loss);
        return py::make_tuple(r.model.bank, curve);
      },
      py::arg("sequences"), py::arg("dt"), py::arg("iterations") = 1000, py::arg("lr") = 1e-4,
      py::arg("unroll") = 10, py::arg("batch") = 8, py::arg("seed") = 0, py::arg("footprint") = 5,
      py::arg("orientations") = 24, py::arg("strengths") = 3, py::arg("coherences") = 3,
      py::arg("least_squares_init") = true, "Returns (bank, [(iteration, loss), ...]).");

  m.def("psnr", [](const Array& a, const Array& b, double peak) {
    return psnr(to_image(a), to_image(b), peak);
  }, py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);
  m.def("ssim", [](const Array& a, const Array& b, double peak) {
    return mean_ssim(to_image(a), to_image(b), peak);
  }, py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);

  m.def(
      "deconvolve",
      [](const FilterBank& bank, const Array& f, double psf_sigma, double lam, int steps,
         double dt) {
        const DegradationModel dm = DegradationModel::gaussian(psf_sigma, 1, lam);
        return to_array(deconvolve(SequenceModel::plain(bank, Integrator::euler, dt), to_image(f),
                                   dm, steps));
      },
      py::arg("bank"), py::arg("f"), py::arg("psf_sigma") = 1.0, py::arg("lam") = 2.0,
      py::arg("steps") = 10, py::arg("dt") = 0.5);
  m.def(
      "upscale",
      [](const FilterBank& bank, const Array& f, int factor, double psf_sigma, double lam,
         int steps, double dt) {
        const DegradationModel dm = DegradationModel::gaussian(psf_sigma, factor, lam);
        return to_array(upscale(SequenceModel::plain(bank, Integrator::euler, dt), to_image(f), dm,
                                steps));
      },
      py::arg("bank"), py::arg("f"), py::arg("factor") = 4, py::arg("psf_sigma") = 0.4,
      py::arg("lam") = 0.35, py::arg("steps") = 10, py::arg("dt") = 0.5);
  m.def("lanczos_upscale", [](const Array& f, int factor) {
    return to_array(lanczos_upscale(to_image(f), factor));
  }, py::arg("f"), py::arg("factor"));

  m.def(
      "chan_vese",
      [](const Array& f, int steps, double mu, const std::optional<FilterBank>& bank, double dt) {
        const Image img = to_image(f);
        LevelSet ls;
        ls.phi = checkerboard_phi(img.width(), img.height());
        ls.mu = mu;
        ChanVeseConfig cfg;
        cfg.dt = dt;
        const LevelSet r =
            bank ? chan_vese_evolve(SequenceModel::plain(*bank, Integrator::euler, 1.0), img, ls,
                                    steps, cfg)
                 : chan_vese_reference(img, ls, steps, cfg);
        return py::make_tuple(to_array(r.phi), r.c1.at(0), r.c2.at(0));
      },
      py::arg("f"), py::arg("steps") = 300, py::arg("mu") = 0.2, py::arg("bank") = py::none(),
      py::arg("dt") = 0.5, "Returns (phi, c1, c2); with a bank the curvature term is BLADE.");

  m.def(
      "resample",
      [](const FilterBank& bx, const FilterBank& by, const Array& u, const Array& vx,
         const Array& vy) {
        return to_array(resample(bx, by, to_image(u), FlowField(to_image(vx), to_image(vy))));
      },
      py::arg("bank_x"), py::arg("bank_y"), py::arg("u"), py::arg("vx"), py::arg("vy"));
  m.def("bicubic_resample", [](const Array& u, const Array& vx, const Array& vy) {
    return to_array(bicubic_resample(to_image(u), FlowField(to_image(vx), to_image(vy))));
  }, py::arg("u"), py::arg("vx"), py::arg("vy"));
}
