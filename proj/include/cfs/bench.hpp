#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfs/dict_learning.hpp"
#include "cfs/sensing.hpp"

namespace cfs {

/// Configuration problem; line is 0 when not tied to a line of a file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

struct BenchConfig {
  std::vector<double> snr_db{20.0};
  std::vector<double> m_over_l{0.5};
  std::vector<MatrixKind> matrix_kinds{MatrixKind::gauss};
  std::vector<std::string> strategies{"s2"};
  Index trials = 20;
  std::uint64_t master_seed = 1;

  ScenarioConfig scenario{};        // single-scenario commands; bench overrides M, SNR, kind, seed
  double scenario_m_over_l = 0.5;   // M = round(m_over_l * L) for single-scenario commands
  double theta_lo_frac = 0.3;
  double theta_hi_frac = 1.5;
  Index theta_count = 100;
  EmConfig em{};

  void validate() const;
  ThetaGrid grid() const;
  /// Scenario of one trial: seed = master_seed + trial.
  ScenarioConfig trial_scenario(MatrixKind kind, double m_over_l, double snr_db, Index trial) const;
  /// The [scenario] section as a ScenarioConfig with M resolved.
  ScenarioConfig single_scenario() const;
};

/// Flat key=value text with [section] headers. Blank lines and lines starting
/// with '#' or ';' are ignored. Unknown sections or keys are errors.
BenchConfig parse_bench_config(std::istream& in, const std::string& source = "<config>");
BenchConfig load_bench_config(const std::string& path);

/// sqrt of the mean squared l2 error over trials.
double rmse(const std::vector<VectorXd>& estimates, const VectorXd& truth);

struct TrialOutcome {
  bool ok = false;
  std::string error;
  std::vector<Index> support;
  VectorXd support_amplitudes;  // x_map on the estimated support
  double theta_hat = 0.0;
  double sigma_hat = 0.0;
  double sigma_true = 0.0;
  Index em_iters = 0;
  double crb_mse_x = 0.0;      // NaN when the bound does not exist
  double crb_mse_theta = 0.0;  // NaN when the bound does not exist
};

struct RmseRow {
  std::string strategy;
  MatrixKind matrix_kind = MatrixKind::gauss;
  double m_over_l = 0.0;
  double snr_db = 0.0;
  double rmse_s = 0.0;
  double rmse_x_support = 0.0;
  double rmse_theta = 0.0;  // relative to the true theta
  double rmse_sigma = 0.0;
  double rcrb_x = 0.0;
  double rcrb_theta = 0.0;
  Index n_trials_ok = 0;
  Index n_trials = 0;
  bool degraded = false;  // more than 20 % of the trials failed
};

struct RmseTable {
  std::vector<RmseRow> rows;
  bool any_degraded() const;
};

struct BenchResult {
  RmseTable table;
  std::vector<std::vector<TrialOutcome>> trials;  // parallel to table.rows
};

struct BenchOptions {
  unsigned threads = 1;
  std::function<void(Index done, Index total)> progress;
};

/// Runs one trial: synthesise, estimate, score against the truth.
TrialOutcome run_trial(const BenchConfig& cfg, const DictionaryCache& cache, const std::string& strategy,
                       const ScenarioConfig& scenario);

/// Aggregates trials of one cell into a row.
RmseRow summarise_cell(const std::vector<TrialOutcome>& trials, const ScenarioConfig& reference);

/// Cells are ordered strategy, matrix kind, M/L, SNR (outer to inner). Trials run
/// on a worker pool and land in indexed slots, so results do not depend on the
/// thread count.
BenchResult run_bench(const BenchConfig& cfg, const BenchOptions& options = {});

/// strategy,matrix_kind,m_over_l,snr_db,rmse_s,rmse_x_support,rmse_theta,rmse_sigma,
/// rcrb_x,rcrb_theta,n_trials_ok,n_trials,degraded
void write_rmse_csv(std::ostream& out, const RmseTable& table);
RmseTable read_rmse_csv(std::istream& in);

/// Per-figure CSVs (support, amplitude, theta) written to `directory`.
std::vector<std::string> write_plot_data(const std::string& directory, const RmseTable& table);

}  // namespace cfs
