#pragma once

#include <functional>

#include <Eigen/Dense>

#include "cfs/random.hpp"

namespace cfs {

using Eigen::Index;
using Eigen::VectorXd;

/// Returns log density at z and writes its gradient into grad.
using LogDensityFn = std::function<double(const VectorXd& z, VectorXd& grad)>;

struct HmcConfig {
  double step_size = 0.05;
  int leapfrog_steps = 20;    // static-length variant only
  VectorXd masses;            // empty means unit masses
  int max_tree_depth = 10;    // no-U-turn variant
  double adapt_target_accept = 0.8;
  bool no_u_turn = true;
  bool adapt_mass = true;  // estimate diagonal masses during burn-in
  double max_energy_error = 1000.0;  // divergence threshold
};

struct PhasePoint {
  VectorXd z;
  VectorXd p;
  VectorXd grad;
  double log_density = 0.0;
};

struct HmcTransition {
  VectorXd z;
  double log_density = 0.0;
  bool accepted = false;
  bool divergent = false;
  double hamiltonian_delta = 0.0;  // H(proposal) - H(start)
  double accept_stat = 0.0;        // Metropolis probability or NUTS average
  int leapfrog_evals = 0;
  int tree_depth = 0;
};

VectorXd inverse_masses(const HmcConfig& cfg, Index dim);

double kinetic_energy(const VectorXd& p, const VectorXd& inv_mass);

/// One leapfrog step of size eps (negative eps integrates backwards).
void leapfrog(PhasePoint& point, double eps, const VectorXd& inv_mass, const LogDensityFn& target);

/// Static trajectory HMC with cfg.leapfrog_steps steps and a Metropolis
/// accept on exp(-dH). Non-finite energies are rejected and flagged divergent.
HmcTransition hmc_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng);

/// No-U-turn transition with doubling up to max_tree_depth. Points are drawn in
/// proportion to exp(-H) (multinomial variant) with biased progressive sampling
/// between doublings.
HmcTransition nuts_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng);

/// Dispatches on cfg.no_u_turn.
HmcTransition sample_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng);

/// Dual-averaging step-size adaptation (Nesterov primal-dual scheme).
class DualAveraging {
 public:
  explicit DualAveraging(double initial_step = 0.05, double target_accept = 0.8);

  void restart(double initial_step);
  void update(double accept_stat);
  double step() const { return step_; }
  double adapted_step() const { return adapted_step_; }
  int iterations() const { return iteration_; }

 private:
  double target_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_step_bar_ = 0.0;
  double step_ = 0.05;
  double adapted_step_ = 0.05;
  int iteration_ = 0;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
};

/// Doubles or halves eps until a single leapfrog step has acceptance around 1/2.
double find_reasonable_step(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng);

}  // namespace cfs
