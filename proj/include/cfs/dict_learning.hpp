#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfs/dictionary.hpp"
#include "cfs/sampler.hpp"

namespace cfs {

/// Projected dictionaries B_r = Phi A(theta_r) for every grid value.
class ProjectedBank {
 public:
  ProjectedBank(const DictionaryCache& cache, const MatrixXd& phi);

  const MatrixXd& operator[](Index r) const { return designs_[static_cast<std::size_t>(r)]; }
  Index size() const { return static_cast<Index>(designs_.size()); }
  const ThetaGrid& grid() const { return *grid_; }

 private:
  const ThetaGrid* grid_;
  std::vector<MatrixXd> designs_;
};

struct PeakRule {
  double relative_threshold = 0.2;  // fraction of max(x)
  Index merge_radius = 2;           // peaks at most this many indices apart count once
};

/// Local maxima of x above threshold * max(x), merging neighbours within the radius.
Index count_peaks(const VectorXd& x, const PeakRule& rule = {});

struct BisectionResult {
  Index index = 0;            // selected grid index
  Index start = 0;            // random starting index
  std::vector<Index> probes;  // indices probed after the start, in order
  std::vector<Index> counts;  // peak count at the start followed by each probe
};

/// Bisection on grid indices [0, R). Too many peaks moves to the median of the
/// lower part, too few to the median of the upper part. Stops at the first index
/// with exactly K peaks or when the remaining interval is empty.
BisectionResult bisection_search(Index R, Index K, Index start, const std::function<Index(Index)>& peak_count);

struct EmConfig {
  Index d_max = 35;
  Index L_MC = 500;
  double burn_in_fraction = 0.5;       // first chain, relative to L_MC
  double warm_burn_in_fraction = 0.2;  // chains warm-started from the previous iteration
  Index bisection_burn_in = 40;
  Index bisection_samples = 20;
  PeakRule peaks{};
  double nu = 1.0;  // Dirichlet prior count per grid value
  GibbsConfig gibbs{};
};

/// Mean over samples of the Gaussian log-likelihood log p(y | x_l, sigma_l^2, theta_r), for every r.
VectorXd q_function(const ProjectedBank& bank, const VectorXd& y, const ChainTrace& trace);

/// Single-theta variant.
double q_function(const MatrixXd& B, const VectorXd& y, const ChainTrace& trace);

/// Argmax of q over the grid; ties go to the smallest index.
Index m_step(const VectorXd& q);

/// Categorical weights proportional to p(y | x, theta_r, sigma^2) * xi_r, normalised in log space.
VectorXd theta_weights(const ProjectedBank& bank, const VectorXd& y, const VectorXd& x, double sigma_n2,
                       const VectorXd& xi);

struct EmIteration {
  Index d = 0;
  Index theta_prev = 0;
  Index theta_next = 0;
  double q_prev = 0.0;  // Q(theta_prev | theta_prev)
  double q_next = 0.0;  // Q(theta_next | theta_prev)
};

enum class EstimationStatus { ok, numerical_failure };

struct EstimationResult {
  std::string strategy;
  EstimationStatus status = EstimationStatus::ok;
  std::string diagnostic;
  std::vector<Index> support;
  VectorXd x_map;
  VectorXd x_mean;
  double theta_hat = 0.0;
  Index theta_index = 0;
  double theta_mode = 0.0;  // S2 only: most frequent sampled value
  Index theta_init_index = 0;
  HyperState hyper_hat{};
  double sigma_hat = 0.0;
  Index em_iters = 0;
  double ee = 0.0;
  std::vector<EmIteration> history;  // S1 only
  long divergences = 0;
  double mean_accept_stat = 0.0;
  ChainTrace trace;  // last chain

  bool ok() const { return status == EstimationStatus::ok; }
};

/// Runs the bisection with short sampler bursts at each probed theta.
BisectionResult bisection_init(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                               std::uint64_t seed);

/// Monte Carlo EM over the theta grid.
EstimationResult s1_estimate(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                             std::uint64_t seed);

/// Joint sampling of (x, hyperparameters, Xi, theta) in one chain.
EstimationResult s2_estimate(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                             std::uint64_t seed);

std::string to_string(EstimationStatus status);

/// key=value report.
void write_report(std::ostream& out, const EstimationResult& result);

/// index,x_map,x_mean
void write_x_csv(std::ostream& out, const EstimationResult& result);

}  // namespace cfs
