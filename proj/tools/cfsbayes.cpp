#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfs/bench.hpp"
#include "cfs/crb.hpp"
#include "cfs/dict_learning.hpp"
#include "cfs/sensing.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitDegraded = 4;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

cfs::BenchConfig load_config(const GlobalOptions& g) {
  return g.config.empty() ? cfs::BenchConfig{} : cfs::load_bench_config(g.config);
}

// Opens <out>/<name> when --out is given, otherwise returns nullptr (write to stdout).
std::unique_ptr<std::ofstream> open_output(const GlobalOptions& g, const std::string& name) {
  if (g.out.empty()) return nullptr;
  fs::create_directories(g.out);
  const fs::path path = fs::path(g.out) / name;
  auto file = std::make_unique<std::ofstream>(path);
  if (!*file) throw std::runtime_error("cannot write '" + path.string() + "'");
  return file;
}

std::ostream& sink(const std::unique_ptr<std::ofstream>& file) { return file ? *file : std::cout; }

cfs::MeasurementScenario obtain_scenario(const cfs::BenchConfig& cfg, const GlobalOptions& g,
                                         const std::string& scenario_path) {
  if (!scenario_path.empty()) return cfs::load_scenario(scenario_path);
  cfs::ScenarioConfig sc = cfg.single_scenario();
  if (g.seed) sc.seed = *g.seed;
  return cfs::synthesize_scenario(sc);
}

int cmd_simulate(const GlobalOptions& g) {
  const cfs::BenchConfig cfg = load_config(g);
  cfs::ScenarioConfig sc = cfg.single_scenario();
  if (g.seed) sc.seed = *g.seed;
  const cfs::MeasurementScenario scenario = cfs::synthesize_scenario(sc);
  const auto file = open_output(g, "scenario.txt");
  cfs::write_scenario(sink(file), scenario);
  if (file) std::cerr << "wrote " << (fs::path(g.out) / "scenario.txt").string() << "\n";
  return kExitOk;
}

int run_estimation(const GlobalOptions& g, const std::string& strategy, const std::string& scenario_path,
                   const std::string& trace_path) {
  const cfs::BenchConfig cfg = load_config(g);
  const cfs::MeasurementScenario scenario = obtain_scenario(cfg, g, scenario_path);
  const cfs::DictionaryCache cache(cfg.grid(), scenario.geometry);
  const cfs::ProjectedBank bank(cache, scenario.phi.entries);
  const std::uint64_t seed = g.seed.value_or(scenario.seed);
  const cfs::EstimationResult result = strategy == "s1" ? cfs::s1_estimate(scenario.y, bank, scenario.K(), cfg.em, seed)
                                                        : cfs::s2_estimate(scenario.y, bank, scenario.K(), cfg.em, seed);
  const auto report = open_output(g, "report.txt");
  cfs::write_report(sink(report), result);
  if (!result.ok()) {
    std::cerr << "estimation failed: " << result.diagnostic << "\n";
    return kExitNumerical;
  }
  if (const auto xfile = open_output(g, "x_map.csv")) cfs::write_x_csv(*xfile, result);
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw std::runtime_error("cannot write '" + trace_path + "'");
    cfs::write_trace_csv(trace, result.trace);
  }
  return kExitOk;
}

int cmd_crb(const GlobalOptions& g, double sigma_scale) {
  const cfs::BenchConfig cfg = load_config(g);
  cfs::RcrbSweep sweep;
  sweep.base = cfg.single_scenario();
  if (g.seed) sweep.base.seed = *g.seed;
  sweep.snr_db = cfg.snr_db;
  sweep.m_over_l = cfg.m_over_l;
  sweep.kinds = cfg.matrix_kinds;
  sweep.delta_theta = cfg.grid().spacing();
  sweep.sigma_scale = sigma_scale;
  const auto cells = cfs::rcrb_curves(sweep);
  const auto file = open_output(g, "rcrb.csv");
  cfs::write_rcrb_csv(sink(file), cells);
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      std::cerr << "bound undefined at snr " << c.snr_db << ", M/L " << c.m_over_l << ": " << c.error << "\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

int cmd_bench(const GlobalOptions& g, bool emit_plot_data) {
  cfs::BenchConfig cfg = load_config(g);
  if (g.seed) cfg.master_seed = *g.seed;
  cfs::BenchOptions options;
  options.threads = g.threads;
  options.progress = [](cfs::Index done, cfs::Index total) {
    std::cerr << "\rtrials " << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  };
  const cfs::BenchResult result = cfs::run_bench(cfg, options);
  const auto file = open_output(g, "rmse.csv");
  cfs::write_rmse_csv(sink(file), result.table);
  if (emit_plot_data) {
    const std::string dir = g.out.empty() ? std::string("plot_data") : (fs::path(g.out) / "plot_data").string();
    for (const auto& path : cfs::write_plot_data(dir, result.table)) std::cerr << "wrote " << path << "\n";
  }
  if (result.table.any_degraded()) {
    std::cerr << "warning: one or more cells are degraded (more than 20% failed trials)\n";
    return kExitDegraded;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian sparse estimation and parametric dictionary learning for compressed fiber sensing"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Configuration file (key = value with [sections])");
  app.add_option("--seed", g.seed, "Seed (scenario/estimator seed, or master seed for bench)");
  app.add_option("--out", g.out, "Output directory; results go to stdout when omitted");
  app.add_option("--threads", g.threads, "Worker threads for bench")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Synthesise a measurement scenario file");

  std::string strategy = "s2";
  std::string scenario_path;
  auto* estimate = app.add_subcommand("estimate", "Run one estimation and print its report");
  estimate->add_option("--strategy", strategy, "s1 (Monte Carlo EM) or s2 (joint sampling)")
      ->check(CLI::IsMember({"s1", "s2"}));
  estimate->add_option("--scenario", scenario_path, "Scenario file; synthesised from the config when omitted")
      ->check(CLI::ExistingFile);

  double sigma_scale = 1.0;
  auto* crb = app.add_subcommand("crb", "Emit the RCRB table for the configured sweep");
  crb->add_option("--sigma-scale", sigma_scale, "Multiply the noise level implied by each SNR")
      ->check(CLI::PositiveNumber);

  bool emit_plot_data = false;
  auto* bench = app.add_subcommand("bench", "Monte Carlo sweep to an RMSE table");
  bench->add_flag("--emit-plot-data", emit_plot_data, "Also write per-figure CSVs under <out>/plot_data");

  std::string trace_path;
  auto* trace = app.add_subcommand("trace", "Re-run an estimation and dump the chain");
  trace->add_option("--strategy", strategy, "s1 or s2")->check(CLI::IsMember({"s1", "s2"}));
  trace->add_option("--scenario", scenario_path, "Scenario file")->check(CLI::ExistingFile);
  trace->add_option("--dump-trace", trace_path, "CSV file receiving the post burn-in samples")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(g);
    if (*estimate) return run_estimation(g, strategy, scenario_path, "");
    if (*crb) return cmd_crb(g, sigma_scale);
    if (*bench) return cmd_bench(g, emit_plot_data);
    if (*trace) return run_estimation(g, strategy, scenario_path, trace_path);
  } catch (const cfs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cfs::CrbError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
