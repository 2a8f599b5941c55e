#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "optex/errors.hpp"
#include "optex/estimation.hpp"
#include "optex/nmpc.hpp"
#include "optex/oed_env.hpp"
#include "optex/profiles.hpp"
#include "optex/sensitivity.hpp"
#include "optex/td3.hpp"

namespace py = pybind11;
using namespace optex;

namespace {

ExcitationProfile make_profile(std::vector<double> currents, double dt, double temperature) {
  ExcitationProfile p;
  p.currents = std::move(currents);
  p.dt = dt;
  p.temperature = temperature;
  p.validate();
  return p;
}

py::dict fisher_dict(const FisherSummary& f) {
  py::dict d;
  d["parameter"] = to_string(f.parameter);
  d["fi_raw"] = f.fi_raw;
  d["fi_scaled"] = f.fi_scaled;
  d["cramer_rao"] = f.cramer_rao;
  d["n_samples"] = f.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Battery excitation design: cell model, sensitivities, TD3, NMPC and estimation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);

  py::enum_<Param>(m, "Param").value("kp", Param::kp).value("kn", Param::kn);

  py::class_<CellParameters>(m, "CellParameters")
      .def_static("default", &default_cell_parameters)
      .def_static("load", [](const std::string& path) { return load_cell_parameters(path); })
      .def("rate_constant", &CellParameters::rate_constant)
      .def("set_rate_constant", &CellParameters::set_rate_constant)
      .def_readwrite("capacity_Ah", &CellParameters::capacity_Ah)
      .def_readwrite("sigma_y", &CellParameters::sigma_y)
      .def_readwrite("R_c", &CellParameters::R_c);

  py::class_<SimulationResult>(m, "SimulationResult")
      .def_readonly("voltage", &SimulationResult::voltage)
      .def_readonly("limit_crossings", &SimulationResult::limit_crossings);

  py::class_<CellModel>(m, "CellModel")
      .def(py::init<CellParameters>())
      .def(
          "simulate",
          [](const CellModel& model, std::vector<double> currents, double soc0, double dt, double temperature) {
            return model.simulate(make_profile(std::move(currents), dt, temperature), soc0);
          },
          py::arg("currents"), py::arg("soc0") = 1.0, py::arg("dt") = 1.0, py::arg("temperature") = 298.15)
      .def(
          "soc_trace",
          [](const CellModel& model, std::vector<double> currents, double soc0, double dt) {
            const auto sim = model.simulate(make_profile(std::move(currents), dt, 298.15), soc0);
            std::vector<double> out;
            for (const auto& s : sim.states) out.push_back(model.soc(s));
            return out;
          },
          py::arg("currents"), py::arg("soc0") = 1.0, py::arg("dt") = 1.0);

  m.def(
      "sensitivity",
      [](const CellParameters& params, std::vector<double> currents, Param p, double soc0, double dt) {
        return analytic_sensitivity(CellModel(params), make_profile(std::move(currents), dt, 298.15), soc0, p)
            .values;
      },
      py::arg("params"), py::arg("currents"), py::arg("parameter"), py::arg("soc0") = 1.0, py::arg("dt") = 1.0,
      "Analytic dV/dk along a profile, one value per sample.");
  m.def(
      "fisher_information",
      [](const CellParameters& params, std::vector<double> currents, Param p, double soc0, double dt) {
        const auto tr =
            analytic_sensitivity(CellModel(params), make_profile(std::move(currents), dt, 298.15), soc0, p);
        return fisher_dict(fisher_information(tr, params.sigma_y));
      },
      py::arg("params"), py::arg("currents"), py::arg("parameter"), py::arg("soc0") = 1.0, py::arg("dt") = 1.0);

  py::class_<EnvConfig>(m, "EnvConfig")
      .def(py::init<>())
      .def_readwrite("target", &EnvConfig::target)
      .def_readwrite("i_min", &EnvConfig::i_min)
      .def_readwrite("i_max", &EnvConfig::i_max)
      .def_readwrite("v_min", &EnvConfig::v_min)
      .def_readwrite("v_max", &EnvConfig::v_max)
      .def_readwrite("penalty_M", &EnvConfig::penalty_M)
      .def_readwrite("episode_len", &EnvConfig::episode_len)
      .def_readwrite("dt", &EnvConfig::dt)
      .def_readwrite("soc0", &EnvConfig::soc0)
      .def_readwrite("temperature", &EnvConfig::temperature);

  py::class_<Observation>(m, "Observation")
      .def_readonly("v", &Observation::v)
      .def_readonly("c_bar_se_p", &Observation::c_bar_se_p);

  py::class_<OedEnv>(m, "OedEnv")
      .def(py::init<CellParameters, EnvConfig>())
      .def("reset", &OedEnv::reset, py::arg("seed") = 0)
      .def("step",
           [](OedEnv& env, double action) {
             const auto o = env.step(action);
             return py::make_tuple(o.observation, o.reward, o.terminated, o.truncated,
                                   std::string(to_string(o.info.violation)));
           })
      .def_property_readonly("done", &OedEnv::done)
      .def_property_readonly("steps_taken", &OedEnv::steps_taken);

  m.def(
      "rollout",
      [](const std::function<double(const Observation&)>& policy, const EnvConfig& cfg, const CellParameters& p) {
        const auto r = rollout(policy, cfg, p);
        py::dict d;
        d["currents"] = r.profile.currents;
        d["violations"] = r.violations;
        d["fisher"] = fisher_dict(r.fisher);
        return d;
      },
      py::arg("policy"), py::arg("config"), py::arg("params"));

  py::class_<NetworkWeights>(m, "PolicyWeights")
      .def_static("load", [](const std::string& path) { return load_weights(path); })
      .def("save", [](const NetworkWeights& w, const std::string& path) { save_weights(path, w); })
      .def("act", &NetworkWeights::act)
      .def_readonly("config_fingerprint", &NetworkWeights::config_fingerprint);

  m.def(
      "train",
      [](const CellParameters& params, const EnvConfig& env, std::size_t episodes, std::uint64_t seed) {
        Td3Config cfg;
        cfg.max_episodes = episodes;
        cfg.seed = seed;
        TrainingResult r;
        {
          py::gil_scoped_release release;
          r = train(env, params, cfg);
        }
        return py::make_tuple(r.weights, r.best_eval_fi_raw, r.log.size());
      },
      py::arg("params"), py::arg("env"), py::arg("episodes"), py::arg("seed") = 0,
      "Trains with default TD3 settings; returns (weights, best_eval_fi_raw, episodes_run).");

  m.def(
      "run_nmpc",
      [](const CellParameters& params, const EnvConfig& env, std::size_t horizon) {
        NmpcConfig cfg;
        cfg.horizon = horizon;
        NmpcRun r;
        {
          py::gil_scoped_release release;
          r = run_nmpc(params, env, cfg, env.target);
        }
        py::dict d;
        d["currents"] = r.profile.currents;
        d["violations"] = r.violations;
        d["aborted"] = r.aborted;
        d["fisher"] = fisher_dict(r.fisher);
        return d;
      },
      py::arg("params"), py::arg("env"), py::arg("horizon") = 20);

  m.def(
      "cc_discharge",
      [](const CellParameters& params, double c_rate, double total_length_s, double cutoff_v) {
        CcDischargeSpec s;
        s.c_rate = c_rate;
        s.total_length_s = total_length_s;
        s.cutoff_v = cutoff_v;
        return cc_discharge(s, params).currents;
      },
      py::arg("params"), py::arg("c_rate") = 1.0, py::arg("total_length_s") = 3800.0, py::arg("cutoff_v") = 3.0);

  m.def(
      "estimate",
      [](const CellParameters& params, std::vector<double> currents, Param p, double soc0, double noise_sigma,
         std::uint64_t seed) {
        auto task = EstimationTask::defaults(p);
        task.profile = make_profile(std::move(currents), 1.0, 298.15);
        task.soc0 = soc0;
        task.noise_sigma = noise_sigma;
        task.seed = seed;
        const auto r = run_task(task, params);
        py::dict d;
        std::vector<double> est;
        for (const auto& s : r.starts) est.push_back(s.estimate);
        d["estimates"] = est;
        d["median_pct"] = r.median;
        d["identifiable"] = r.identifiable;
        d["n_used"] = r.n_used;
        return d;
      },
      py::arg("params"), py::arg("currents"), py::arg("parameter"), py::arg("soc0") = 1.0,
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "optex");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
