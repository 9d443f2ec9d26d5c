// Python bindings. Cubes cross the boundary as float64 arrays of shape
// (B, H, W), images as (H, W).

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deqsci/analysis.hpp"
#include "deqsci/implicit_grad.hpp"
#include "deqsci/iteration_maps.hpp"
#include "deqsci/metrics.hpp"
#include "deqsci/synth.hpp"
#include "deqsci/tensor_io.hpp"

namespace py = pybind11;
using namespace deqsci;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

VideoCube to_cube(const Array &a) {
  if (a.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "expected a (B, H, W) array");
  const auto b = static_cast<std::size_t>(a.shape(0)), h = static_cast<std::size_t>(a.shape(1)),
             w = static_cast<std::size_t>(a.shape(2));
  return VideoCube(h, w, b, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_cube(const VideoCube &x) {
  Array out({x.frames(), x.height(), x.width()});
  std::copy(x.data().begin(), x.data().end(), out.mutable_data());
  return out;
}

Image to_image(const Array &a) {
  if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected an (H, W) array");
  Image y(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), y.data.begin());
  return y;
}

Array from_image(const Image &y) {
  Array out({y.height, y.width});
  std::copy(y.data.begin(), y.data.end(), out.mutable_data());
  return out;
}

DeadPixelPolicy policy_of(const std::string &name, double tau) {
  if (name == "reject") return DeadPixelPolicy::reject();
  if (name == "floor") return DeadPixelPolicy::floor(tau);
  throw Error(ErrorKind::InvalidArgument, "dead pixel policy must be reject or floor, got " + name);
}

SensingMask mask_of(const Array &m, const std::string &dead_pixels, double tau) {
  return SensingMask::from_cube(to_cube(m), policy_of(dead_pixels, tau));
}

Measurement measurement_of(const Array &y) { return Measurement{to_image(y), 0.0, std::nullopt}; }

FixedPointConfig solver_config(double tol, int max_iter, int memory, double damping) {
  FixedPointConfig c;
  c.tol = tol;
  c.max_iter = max_iter;
  c.anderson_memory = memory;
  c.anderson_damping = damping;
  c.validate();
  return c;
}

py::dict result_dict(const SolveResult &r) {
  py::dict d;
  d["x_hat"] = from_cube(r.x_hat);
  d["converged"] = r.converged;
  d["iterations"] = r.iterations;
  std::vector<double> res;
  for (const auto &row : r.trace.rows) res.push_back(row.residual);
  d["residuals"] = res;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep-equilibrium snapshot compressive imaging core";

  static py::exception<Error> base(m, "DeqsciError", PyExc_RuntimeError);
  static py::exception<DivergedError> diverged(m, "DivergedError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DivergedError &e) {
      diverged(e.what());
    } catch (const Error &e) {
      base(e.what());
    }
  });

  m.def(
      "mask_generate",
      [](std::uint64_t seed, std::size_t h, std::size_t w, std::size_t b, double p, bool all_ones) {
        const MaskKind kind = all_ones ? MaskKind::all_ones() : MaskKind::bernoulli(p);
        return from_cube(mask_generate(seed, h, w, b, kind, DeadPixelPolicy::floor()).as_cube());
      },
      py::arg("seed"), py::arg("h"), py::arg("w"), py::arg("b"), py::arg("p") = 0.5, py::arg("all_ones") = false,
      "Binary mask frames as a (B, H, W) array.");

  m.def(
      "forward", [](const Array &mask, const Array &x) { return from_image(forward(mask_of(mask, "floor", 1e-6), to_cube(x)).data); },
      py::arg("mask"), py::arg("x"), "Snapshot measurement y = sum_b m_b * x_b.");
  m.def(
      "adjoint", [](const Array &mask, const Array &y) { return from_cube(adjoint(mask_of(mask, "floor", 1e-6), to_image(y))); },
      py::arg("mask"), py::arg("y"));
  m.def(
      "gap_project",
      [](const Array &mask, const Array &y, const Array &v, const std::string &dead_pixels, double tau) {
        return from_cube(gap_project(mask_of(mask, dead_pixels, tau), to_image(y), to_cube(v)));
      },
      py::arg("mask"), py::arg("y"), py::arg("v"), py::arg("dead_pixels") = "reject", py::arg("tau") = 1e-6);
  m.def(
      "admm_x_update",
      [](const Array &mask, const Array &y, const Array &z, double rho) {
        return from_cube(admm_x_update(mask_of(mask, "floor", 1e-6), to_image(y), to_cube(z), rho));
      },
      py::arg("mask"), py::arg("y"), py::arg("z"), py::arg("rho"));

  m.def(
      "synth_video",
      [](const std::string &kind, std::uint64_t seed, std::size_t h, std::size_t w, std::size_t b, int amplitude) {
        return from_cube(synth_video({parse_scene_kind(kind), seed, h, w, b, amplitude}));
      },
      py::arg("kind") = "moving_square", py::arg("seed") = 0, py::arg("h") = 64, py::arg("w") = 64, py::arg("b") = 8,
      py::arg("amplitude") = 1);

  m.def(
      "psnr", [](const Array &x, const Array &ref, double peak) { return psnr(to_cube(x), to_cube(ref), peak).mean; },
      py::arg("x"), py::arg("ref"), py::arg("peak") = 1.0, "Mean of per-frame PSNR in dB.");
  m.def(
      "ssim", [](const Array &x, const Array &ref) { return ssim(to_cube(x), to_cube(ref)).mean; }, py::arg("x"),
      py::arg("ref"), "Mean of per-frame SSIM.");

  m.def(
      "fixed_point",
      [](const std::function<Array(const Array &)> &f, const Array &x0, const std::string &solver, double tol,
         int max_iter, int memory, double damping) {
        const CubeMap map = [&](const VideoCube &x) { return to_cube(f(from_cube(x))); };
        const FixedPointConfig c = solver_config(tol, max_iter, memory, damping);
        if (solver != "picard" && solver != "anderson")
          throw Error(ErrorKind::InvalidArgument, "solver must be picard or anderson, got " + solver);
        return result_dict(run_solver(solver == "picard" ? SolverKind::Picard : SolverKind::Anderson, map,
                                      to_cube(x0), c));
      },
      py::arg("f"), py::arg("x0"), py::arg("solver") = "anderson", py::arg("tol") = 1e-6, py::arg("max_iter") = 150,
      py::arg("memory") = 3, py::arg("damping") = 1.0, "Solve x = f(x) for a Python callable on (B, H, W) arrays.");

  m.def(
      "pnp_gap",
      [](const Array &mask, const Array &y, std::vector<double> schedule, int K) {
        return result_dict(pnp_gap_solve(mask_of(mask, "floor", 1e-6), measurement_of(y), schedule, K));
      },
      py::arg("mask"), py::arg("y"), py::arg("schedule") = std::vector<double>{0.05}, py::arg("K") = 50);

  m.def(
      "reconstruct",
      [](const std::string &checkpoint, const Array &mask, const Array &y, double tol, int max_iter) {
        const auto model = load_model(checkpoint);
        GradientConfig g;
        g.forward = solver_config(tol, max_iter, 3, 1.0);
        return result_dict(reconstruct(*model, mask_of(mask, "floor", 1e-6), measurement_of(y), g));
      },
      py::arg("checkpoint"), py::arg("mask"), py::arg("y"), py::arg("tol") = 1e-6, py::arg("max_iter") = 150,
      "Equilibrium reconstruction with a trained checkpoint.");

  m.def(
      "projection_spectrum",
      [](const Array &mask) {
        const ProjectionSpectrum s = projection_spectrum(mask_of(mask, "floor", 1e-6));
        py::dict d;
        d["eigenvalues"] = s.eigenvalues;
        d["trace"] = s.trace;
        d["idempotence_defect"] = s.idempotence_defect;
        return d;
      },
      py::arg("mask"));
  m.def("gap_contraction_bound", &gap_contraction_bound, py::arg("epsilon"), py::arg("eigenvalues"));

  m.def(
      "write_tensor",
      [](const std::string &path, const Array &a, const std::string &dtype) {
        Tensor t;
        for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
        t.data.assign(a.data(), a.data() + a.size());
        if (dtype != "float32" && dtype != "float64")
          throw Error(ErrorKind::InvalidArgument, "dtype must be float32 or float64, got " + dtype);
        t.dtype = dtype == "float32" ? Dtype::Float32 : Dtype::Float64;
        write_tensor(path, t);
      },
      py::arg("path"), py::arg("array"), py::arg("dtype") = "float64");
  m.def(
      "read_tensor",
      [](const std::string &path) {
        const Tensor t = read_tensor(path);
        std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
        Array out(shape);
        std::copy(t.data.begin(), t.data.end(), out.mutable_data());
        return out;
      },
      py::arg("path"));
}
