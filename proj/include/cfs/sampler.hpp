#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cfs/hmc.hpp"
#include "cfs/random.hpp"
#include "cfs/sparse_prior.hpp"

namespace cfs {

struct GibbsConfig {
  HyperPriorConfig prior{};
  KernelConfig kernel{};
  HmcConfig hmc{};
  double kw_proposal_scale = 0.1;            // initial log-scale random-walk step
  double lambda_delta_proposal_scale = 0.3;  // initial log-scale random-walk step
  double rw_target_accept = 0.44;
  bool update_sigma = true;
  bool update_lambda_w = true;
  bool update_k_w = true;
  bool update_lambda_delta = true;
  bool update_x = true;
};

struct ChainState {
  VectorXd x;
  HyperState hyper;
  Index theta_index = -1;  // grid index when theta is sampled, otherwise -1
  double theta = std::numeric_limits<double>::quiet_NaN();
};

/// Step sizes and acceptance counters carried between sweeps.
struct SweepAdaptation {
  DualAveraging step_adapter{};
  double hmc_step = 0.05;
  double kw_log_step = 0.1;
  double lambda_delta_log_step = 0.3;
  long sweeps = 0;
  long adapt_sweeps = 0;
  long hmc_accepts = 0;
  long divergences = 0;
  long kw_accepts = 0;
  long lambda_delta_accepts = 0;
  double hmc_accept_stat_sum = 0.0;
  long leapfrog_evals = 0;
  VectorXd masses;  // adapted diagonal masses; empty means cfg.hmc.masses

  // Running moments of log x used to estimate the mass matrix.
  long moment_count = 0;
  VectorXd moment_mean;
  VectorXd moment_m2;

  void reset_counters();
  void accumulate_moments(const VectorXd& z);
  /// Sets masses to the regularised inverse sample variance and clears the window.
  bool apply_moments();
};

struct SweepInfo {
  bool hmc_accepted = false;
  bool divergent = false;
  double accept_stat = 0.0;
  int leapfrog_evals = 0;
};

/// Draw sigma_n2 from Inv-Gamma(a_sigma + M/2, b_sigma + RSS/2).
double draw_sigma_n2(double rss, Index M, const HyperPriorConfig& prior, Rng& rng);

/// Draw beta = lambda_w^k_w from Inv-Gamma(a_w + N, b_w + sum x^k_w); returns lambda_w.
double draw_lambda_w(const VectorXd& x, double k_w, const HyperPriorConfig& prior, Rng& rng);

/// Unnormalised log conditional of k_w (hyperprior times Weibull likelihood of x).
double kw_conditional_log(double k_w, const VectorXd& x, double lambda_w, const HyperPriorConfig& prior);

/// Unnormalised log conditional of lambda_delta (kernel terms times Inv-Gamma prior).
double lambda_delta_conditional_log(double lambda_delta, double variation, const HyperPriorConfig& prior);

/// Log-space target for x: log_posterior_x(exp z) + sum z, with its gradient.
LogDensityFn log_space_target(const VectorXd& y, const MatrixXd& B, const HyperState& hyper, const KernelConfig& kernel);

/// One Gibbs sweep over (sigma_n2, lambda_w, k_w, lambda_delta, x) given the
/// projected dictionary B = Phi A(theta). When `adapt` is set the HMC step
/// and the random-walk scales are tuned.
SweepInfo gibbs_sweep(ChainState& state, const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg,
                      SweepAdaptation& adaptation, bool adapt, Rng& rng);

/// Unnormalised log p(x, C | y, theta): likelihood, modified prior and hyperpriors.
double log_joint_posterior(const ChainState& state, const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg);

struct TraceSample {
  VectorXd x;
  HyperState hyper;
  double theta = std::numeric_limits<double>::quiet_NaN();
  Index theta_index = -1;
  double log_post = 0.0;
};

struct ChainTrace {
  std::vector<TraceSample> samples;  // post burn-in only
  std::vector<char> accepted;        // HMC accept flag per stored sample
  Index burn_in = 0;
  std::uint64_t seed = 0;
  long divergences = 0;
  double mean_accept_stat = 0.0;
  bool has_theta = false;

  bool empty() const { return samples.empty(); }
  Index size() const { return static_cast<Index>(samples.size()); }
};

/// Starting point: a few projected-gradient steps of non-negative least squares.
ChainState initial_state(const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg);

class GibbsSampler;

/// Extra Gibbs step appended to every sweep (used for the theta update).
using SweepHook = std::function<void(GibbsSampler&)>;

/// Sequential Gibbs/HMC chain bound to one observation vector.
class GibbsSampler {
 public:
  GibbsSampler(VectorXd y, GibbsConfig cfg, std::uint64_t seed);

  /// Projected dictionary for the current theta; the matrix must outlive use.
  void set_design(const MatrixXd& B);
  const MatrixXd& design() const { return *design_; }
  const VectorXd& y() const { return y_; }
  const GibbsConfig& config() const { return cfg_; }

  void initialize();
  void set_sweep_hook(SweepHook hook) { hook_ = std::move(hook); }
  void set_state(ChainState state) { state_ = std::move(state); initialized_ = true; }
  ChainState& state() { return state_; }
  const ChainState& state() const { return state_; }
  SweepAdaptation& adaptation() { return adaptation_; }
  Rng& rng() { return rng_; }

  SweepInfo sweep(bool adapt);
  /// Called once before an adaptation phase; re-tunes the HMC step size.
  void begin_adaptation();
  void end_adaptation();
  void burn(Index sweeps);

  /// Runs burn_in adaptive sweeps, then stores `samples` sweeps. With
  /// cfg.hmc.adapt_mass the middle of the burn-in estimates diagonal masses.
  ChainTrace run(Index burn_in, Index samples);

  double log_joint() const { return log_joint_posterior(state_, y_, *design_, cfg_); }

 private:
  VectorXd y_;
  GibbsConfig cfg_;
  const MatrixXd* design_ = nullptr;
  ChainState state_;
  SweepAdaptation adaptation_;
  Rng rng_;
  SweepHook hook_;
  std::uint64_t seed_;
  bool initialized_ = false;
};

enum class TraceField { x, k_w, lambda_w, lambda_delta, sigma_n2, theta };

/// Plain Monte Carlo average of a field over the stored samples.
VectorXd posterior_mean(const ChainTrace& trace, TraceField field);

/// Stored sample with the largest joint log-posterior.
const TraceSample& empirical_map(const ChainTrace& trace);

/// Indices of the K largest entries, ascending; ties go to the lower index.
std::vector<Index> extract_support(const VectorXd& x, Index K);

/// CSV: iteration,log_post,k_w,lambda_w,lambda_delta,sigma_n2[,theta],x0..x{N-1}
void write_trace_csv(std::ostream& out, const ChainTrace& trace);

}  // namespace cfs
