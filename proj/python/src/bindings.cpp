#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cfs/bench.hpp"
#include "cfs/crb.hpp"
#include "cfs/dict_learning.hpp"
#include "cfs/dictionary.hpp"
#include "cfs/sensing.hpp"

namespace py = pybind11;
using namespace cfs;

namespace {

BenchConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return parse_bench_config(in, "<python>");
}

py::dict estimation_dict(const EstimationResult& r) {
  py::dict d;
  d["strategy"] = r.strategy;
  d["ok"] = r.ok();
  d["diagnostic"] = r.diagnostic;
  d["support"] = r.support;
  d["x_map"] = r.x_map;
  d["x_mean"] = r.x_mean;
  d["theta_hat"] = r.theta_hat;
  d["theta_index"] = r.theta_index;
  d["theta_init_index"] = r.theta_init_index;
  d["sigma_hat"] = r.sigma_hat;
  d["em_iters"] = r.em_iters;
  d["divergences"] = r.divergences;
  d["mean_accept_stat"] = r.mean_accept_stat;
  return d;
}

py::dict row_dict(const RmseRow& r) {
  py::dict d;
  d["strategy"] = r.strategy;
  d["matrix_kind"] = to_string(r.matrix_kind);
  d["m_over_l"] = r.m_over_l;
  d["snr_db"] = r.snr_db;
  d["rmse_s"] = r.rmse_s;
  d["rmse_x_support"] = r.rmse_x_support;
  d["rmse_theta"] = r.rmse_theta;
  d["rmse_sigma"] = r.rmse_sigma;
  d["rcrb_x"] = r.rcrb_x;
  d["rcrb_theta"] = r.rcrb_theta;
  d["n_trials_ok"] = r.n_trials_ok;
  d["n_trials"] = r.n_trials;
  d["degraded"] = r.degraded;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compressed sensing with a parametric pulse dictionary and Bayesian estimation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CrbError>(m, "CrbError", PyExc_ArithmeticError);

  py::class_<DictionaryGeometry>(m, "Geometry")
      .def(py::init<>())
      .def_readwrite("L", &DictionaryGeometry::L)
      .def_readwrite("N", &DictionaryGeometry::N)
      .def_readwrite("Td", &DictionaryGeometry::Td)
      .def_readwrite("dt", &DictionaryGeometry::dt);

  m.def(
      "pulse", [](double t, double theta) { return generating_pulse(t, theta, GeneratingPulse{}); }, py::arg("t"),
      py::arg("theta"), "Gaussian generating pulse r(t, theta).");
  m.def(
      "dictionary", [](double theta, const DictionaryGeometry& g) { return build_dictionary(theta, g).atoms; },
      py::arg("theta"), py::arg("geometry") = DictionaryGeometry{}, "L x N atom matrix A(theta).");
  m.def(
      "dictionary_derivative",
      [](double theta, double delta, const DictionaryGeometry& g) { return dictionary_derivative(theta, delta, g); },
      py::arg("theta"), py::arg("delta_theta"), py::arg("geometry") = DictionaryGeometry{});
  m.def(
      "theta_grid",
      [](double theta_true, double lo, double hi, Index count) { return theta_grid(theta_true, lo, hi, count).values(); },
      py::arg("theta_true") = 1.0, py::arg("lo_frac") = 0.3, py::arg("hi_frac") = 1.5, py::arg("count") = 100);
  m.def(
      "sensing_matrix",
      [](const std::string& kind, Index M, Index L, std::uint64_t seed) {
        return make_cs_matrix(matrix_kind_from_string(kind), M, L, seed).entries;
      },
      py::arg("kind"), py::arg("M"), py::arg("L"), py::arg("seed"));
  m.def(
      "count_peaks",
      [](const VectorXd& x, double threshold, Index radius) { return count_peaks(x, PeakRule{threshold, radius}); },
      py::arg("x"), py::arg("relative_threshold") = 0.2, py::arg("merge_radius") = 2);

  py::class_<MeasurementScenario>(m, "Scenario")
      .def_readonly("geometry", &MeasurementScenario::geometry)
      .def_readonly("support", &MeasurementScenario::support)
      .def_readonly("amplitude", &MeasurementScenario::amplitude)
      .def_readonly("theta_true", &MeasurementScenario::theta_true)
      .def_readonly("snr_db", &MeasurementScenario::snr_db)
      .def_property_readonly("phi", [](const MeasurementScenario& s) { return s.phi.entries; })
      .def_property_readonly("matrix_kind", [](const MeasurementScenario& s) { return to_string(s.phi.kind); })
      .def_readonly("x_true", &MeasurementScenario::x_true)
      .def_readonly("clean", &MeasurementScenario::clean)
      .def_readonly("y", &MeasurementScenario::y)
      .def_readonly("sigma_n", &MeasurementScenario::sigma_n)
      .def_readonly("seed", &MeasurementScenario::seed)
      .def_property_readonly("K", &MeasurementScenario::K);

  m.def(
      "synthesize",
      [](const std::string& config, std::optional<std::uint64_t> seed) {
        ScenarioConfig sc = config_from_text(config).single_scenario();
        if (seed) sc.seed = *seed;
        return synthesize_scenario(sc);
      },
      py::arg("config") = "", py::arg("seed") = py::none(),
      "Synthesise one scenario from config text (INI-style, same format as the CLI).");
  m.def(
      "load_scenario", [](const std::string& path) { return load_scenario(path); }, py::arg("path"));

  m.def(
      "estimate",
      [](const MeasurementScenario& sc, const std::string& strategy, const std::string& config,
         std::optional<std::uint64_t> seed) {
        if (strategy != "s1" && strategy != "s2") throw py::value_error("strategy must be 's1' or 's2'");
        const BenchConfig cfg = config_from_text(config);
        EstimationResult r;
        {
          py::gil_scoped_release release;
          const DictionaryCache cache(cfg.grid(), sc.geometry);
          const ProjectedBank bank(cache, sc.phi.entries);
          const std::uint64_t s = seed.value_or(sc.seed);
          r = strategy == "s1" ? s1_estimate(sc.y, bank, sc.K(), cfg.em, s) : s2_estimate(sc.y, bank, sc.K(), cfg.em, s);
        }
        return estimation_dict(r);
      },
      py::arg("scenario"), py::arg("strategy") = "s2", py::arg("config") = "", py::arg("seed") = py::none());

  m.def(
      "joint_crb",
      [](const VectorXd& x, const std::vector<Index>& support, const MatrixXd& phi, const MatrixXd& atoms,
         const MatrixXd& derivative, double sigma_n) {
        const CrbReport r = joint_crb(x, support, phi, atoms, derivative, sigma_n);
        py::dict d;
        d["fisher_theta"] = r.fisher_theta;
        d["mixed_v"] = r.mixed_v;
        d["reduced_fim"] = r.reduced_fim;
        d["reduced_inverse"] = r.reduced_inverse;
        d["b_breve"] = r.b_breve;
        d["condition_number"] = r.condition_number;
        d["mse_bound_x"] = r.mse_bound_x;
        d["mse_bound_theta"] = r.mse_bound_theta;
        d["rcrb_x"] = r.rcrb_x();
        d["rcrb_theta"] = r.rcrb_theta();
        return d;
      },
      py::arg("x"), py::arg("support"), py::arg("phi"), py::arg("atoms"), py::arg("derivative"), py::arg("sigma_n"));

  m.def(
      "run_bench",
      [](const std::string& config, unsigned threads) {
        const BenchConfig cfg = config_from_text(config);
        BenchOptions opts;
        opts.threads = threads;
        BenchResult r;
        {
          py::gil_scoped_release release;
          r = run_bench(cfg, opts);
        }
        py::list rows;
        for (const RmseRow& row : r.table.rows) rows.append(row_dict(row));
        return rows;
      },
      py::arg("config"), py::arg("threads") = 1, "Monte Carlo benchmark; returns one dict per cell.");
}
