// Python bindings. Arrays follow the library layout: (dim, batch), one
// sample per column.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adjd/adjoint.hpp"
#include "adjd/checkpoint.hpp"
#include "adjd/cli.hpp"
#include "adjd/config.hpp"
#include "adjd/errors.hpp"
#include "adjd/rng.hpp"
#include "adjd/sampler.hpp"
#include "adjd/training.hpp"

namespace py = pybind11;
using namespace adjd;

namespace {

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Eigen::MatrixXd condition(const Denoiser& m, std::optional<long> label) {
  return m.embed(label ? std::optional<Eigen::Index>(*label) : std::nullopt);
}

SampleRequest make_sample_request(const Denoiser& m, const NoiseSchedule& s, const Eigen::MatrixXd& x_T,
                                  std::optional<long> label, std::size_t steps, const std::string& solver,
                                  const std::string& mode, const std::string& grid, double cfg_scale) {
  SampleRequest r;
  r.x_T = x_T;
  r.cond = condition(m, label);
  r.cfg.scale = cfg_scale;
  r.grid = time_grid(s, steps, parse_grid_scheme(grid));
  r.solver.kind = parse_solver_kind(solver);
  r.mode = parse_sample_mode(mode);
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Adjoint sensitivities for diffusion-model sampling on a 2-D toy";
  py::register_exception<Error>(mod, "AdjdError", PyExc_ValueError);

  py::class_<NoiseSchedule>(mod, "NoiseSchedule")
      .def(py::init<>())
      .def_property(
          "kind", [](const NoiseSchedule& s) { return to_string(s.kind); },
          [](NoiseSchedule& s, const std::string& k) { s.kind = parse_schedule_kind(k); })
      .def_readwrite("beta_min", &NoiseSchedule::beta_min)
      .def_readwrite("beta_max", &NoiseSchedule::beta_max)
      .def_readwrite("t_end", &NoiseSchedule::t_end)
      .def_readwrite("t_start", &NoiseSchedule::t_start)
      .def("alpha_sigma", [](const NoiseSchedule& s, double t) {
        const auto as = alpha_sigma(s, t);
        return py::make_tuple(as.alpha, as.sigma);
      })
      .def("gamma", [](const NoiseSchedule& s, double t) { return gamma(s, t); })
      .def("gamma_inv", [](const NoiseSchedule& s, double rho) { return gamma_inv(s, rho); });

  py::class_<Denoiser>(mod, "Denoiser")
      .def(py::init([](std::vector<long> hidden, long n_classes, std::uint64_t seed) {
             DenoiserConfig cfg;
             cfg.hidden.assign(hidden.begin(), hidden.end());
             cfg.n_classes = n_classes;
             Denoiser m(cfg);
             Rng rng(seed);
             m.init(rng);
             return m;
           }),
           py::arg("hidden") = std::vector<long>{64, 64}, py::arg("n_classes") = 8, py::arg("seed") = 0)
      .def_property_readonly("state_dim", &Denoiser::state_dim)
      .def_property_readonly("cond_dim", &Denoiser::cond_dim)
      .def_property_readonly("n_classes", &Denoiser::n_classes)
      .def_property_readonly("num_params", &Denoiser::num_params)
      .def("params", &Denoiser::flatten)
      .def("set_params", &Denoiser::unflatten)
      .def("embed", &condition, py::arg("label") = py::none())
      .def(
          "train",
          [](Denoiser& m, const NoiseSchedule& s, long steps, long n_points, double lr, std::uint64_t seed) {
            Rng rng(seed);
            Rng data_rng = rng.substream("data");
            const LabeledSamples data = sample_mixture(MixtureConfig{.n_modes = m.n_classes()}, n_points, data_rng);
            TrainConfig tc;
            tc.steps = steps;
            tc.opt.lr = lr;
            Rng train_rng = rng.substream("train");
            py::gil_scoped_release release;
            return train_score_matching(m, data, s, tc, train_rng).loss_curve;
          },
          py::arg("schedule"), py::arg("steps") = 2000, py::arg("n_points") = 8192, py::arg("lr") = 2e-3,
          py::arg("seed") = 0)
      .def(
          "save",
          [](const Denoiser& m, const std::string& path, const NoiseSchedule& s) {
            Checkpoint ck;
            ck.schedule = s;
            put_denoiser(ck, m);
            save_checkpoint(path, ck);
          },
          py::arg("path"), py::arg("schedule"))
      .def_static("load", [](const std::string& path) { return get_denoiser(load_checkpoint(path)); });

  mod.def(
      "initial_noise",
      [](const NoiseSchedule& s, long dim, long batch, std::uint64_t seed) {
        Rng rng(seed);
        return draw_initial_noise(s, dim, batch, rng);
      },
      py::arg("schedule"), py::arg("dim"), py::arg("batch"), py::arg("seed") = 0);

  mod.def(
      "sample",
      [](const Denoiser& m, const NoiseSchedule& s, const Eigen::MatrixXd& x_T, std::optional<long> label,
         std::size_t steps, const std::string& solver, const std::string& mode, const std::string& grid,
         double cfg_scale) {
        const SampleRequest r = make_sample_request(m, s, x_T, label, steps, solver, mode, grid, cfg_scale);
        SampleResult out;
        {
          py::gil_scoped_release release;
          out = sample(m, s, r);
        }
        return py::make_tuple(out.x0, out.stats.nfe);
      },
      "Returns (x0, nfe).", py::arg("model"), py::arg("schedule"), py::arg("x_T"), py::arg("label") = py::none(),
      py::arg("steps") = 50, py::arg("solver") = "rk4", py::arg("mode") = "reparam", py::arg("grid") = "uniform",
      py::arg("cfg_scale") = 1.0);

  mod.def(
      "adjoint_gradients",
      [](const Denoiser& m, const NoiseSchedule& s, const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& dL_dx0,
         std::optional<long> label, std::size_t steps, const std::string& solver, double cfg_scale) {
        const SampleRequest fwd =
            make_sample_request(m, s, x_T, label, steps, solver, "reparam", "uniform", cfg_scale);
        AdjointResult g;
        {
          py::gil_scoped_release release;
          const SampleResult out = sample(m, s, fwd);
          AdjointRequest a;
          a.cond = fwd.cond;
          a.cfg = fwd.cfg;
          a.grid = fwd.grid;
          a.solver = fwd.solver;
          a.final_y = out.final_y;
          a.dL_dx0 = dL_dx0;
          g = adjoint_backward(m, s, a);
        }
        py::dict d;
        d["x_T"] = g.x_T;
        d["theta"] = g.theta;
        d["cond"] = g.cond;
        d["nfe"] = g.stats.nfe;
        d["max_retained_states"] = g.stats.max_retained_states;
        return d;
      },
      "Gradients of <dL_dx0, x0> with respect to x_T, the weights and the condition.", py::arg("model"),
      py::arg("schedule"), py::arg("x_T"), py::arg("dL_dx0"), py::arg("label") = py::none(), py::arg("steps") = 50,
      py::arg("solver") = "rk4", py::arg("cfg_scale") = 1.0);

  mod.def("default_config", [] { return from_json(to_json(RunConfig{})); });
  mod.def("normalize_config", [](const std::string& text) { return serialize(parse_config(text)); },
          "Parses, validates and re-serializes a config with every default filled in.");
  mod.def("commands", &command_names);
  mod.def(
      "run",
      [](const std::string& command, const std::string& config, const std::string& output,
         std::optional<std::uint64_t> seed) {
        RunConfig cfg = parse_config(config);
        if (seed) cfg.seed = *seed;
        nlohmann::json report;
        {
          py::gil_scoped_release release;
          report = run_command(command, cfg, output);
        }
        return from_json(report);
      },
      "Runs one adjd subcommand and returns its report.", py::arg("command"), py::arg("config") = "{}",
      py::arg("output"), py::arg("seed") = py::none());
}
