#include "cfs/dict_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "cfs/textio.hpp"

namespace cfs {

namespace {

constexpr std::uint64_t kBisectionTag = 1;
constexpr std::uint64_t kChainTag = 2;

MatrixXd stack_samples(const ChainTrace& trace) {
  const Index N = trace.samples.front().x.size();
  MatrixXd X(N, trace.size());
  for (Index l = 0; l < trace.size(); ++l) X.col(l) = trace.samples[static_cast<std::size_t>(l)].x;
  return X;
}

VectorXd sample_noise_variances(const ChainTrace& trace) {
  VectorXd s2(trace.size());
  for (Index l = 0; l < trace.size(); ++l) s2[l] = trace.samples[static_cast<std::size_t>(l)].hyper.sigma_n2;
  return s2;
}

double mean_log_likelihood(const MatrixXd& B, const VectorXd& y, const MatrixXd& X, const VectorXd& s2) {
  const MatrixXd residual = (-(B * X)).colwise() + y;
  const VectorXd rss = residual.colwise().squaredNorm().transpose();
  const double M = static_cast<double>(y.size());
  const VectorXd terms =
      -0.5 * M * (2.0 * std::numbers::pi * s2.array()).log() - rss.array() / (2.0 * s2.array());
  return terms.mean();
}

Index draw_categorical(const VectorXd& weights, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (Index r = 0; r < weights.size(); ++r) {
    cumulative += weights[r];
    if (u < cumulative) return r;
  }
  // Rounding can leave the cumulative sum just below 1.
  for (Index r = weights.size() - 1; r >= 0; --r) {
    if (weights[r] > 0.0) return r;
  }
  return weights.size() - 1;
}

void check_inputs(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg) {
  if (bank.size() < 1) throw std::domain_error("empty theta grid");
  if (bank[0].rows() != y.size()) throw std::domain_error("measurement length does not match Phi rows");
  if (K < 1 || K > bank[0].cols()) throw std::domain_error("K must lie in [1, N]");
  if (cfg.d_max < 1) throw std::domain_error("d_max must be at least 1");
  if (cfg.L_MC < 2) throw std::domain_error("L_MC must be at least 2");
  if (!(cfg.nu > 0.0)) throw std::domain_error("nu must be positive");
}

Index burn_length(double fraction, Index L_MC) {
  return static_cast<Index>(std::llround(fraction * static_cast<double>(L_MC)));
}

void summarise(EstimationResult& result, const ChainTrace& trace, const VectorXd& y, const ProjectedBank& bank,
               Index K) {
  result.x_mean = posterior_mean(trace, TraceField::x);
  result.support = extract_support(result.x_mean, K);
  result.x_map = empirical_map(trace).x;
  result.hyper_hat.k_w = posterior_mean(trace, TraceField::k_w)[0];
  result.hyper_hat.lambda_w = posterior_mean(trace, TraceField::lambda_w)[0];
  result.hyper_hat.lambda_delta = posterior_mean(trace, TraceField::lambda_delta)[0];
  result.hyper_hat.sigma_n2 = posterior_mean(trace, TraceField::sigma_n2)[0];
  result.sigma_hat = std::sqrt(result.hyper_hat.sigma_n2);
  result.theta_hat = bank.grid()[result.theta_index];
  result.ee = (y - bank[result.theta_index] * result.x_map).squaredNorm();
  result.divergences = trace.divergences;
  result.mean_accept_stat = trace.mean_accept_stat;
}

}  // namespace

ProjectedBank::ProjectedBank(const DictionaryCache& cache, const MatrixXd& phi) : grid_(&cache.grid()) {
  if (phi.cols() != cache.geometry().L) throw std::domain_error("ProjectedBank: Phi columns != L");
  designs_.reserve(static_cast<std::size_t>(cache.size()));
  for (Index r = 0; r < cache.size(); ++r) designs_.push_back(phi * cache.atoms(r));
}

Index count_peaks(const VectorXd& x, const PeakRule& rule) {
  const Index N = x.size();
  if (N == 0) return 0;
  const double threshold = rule.relative_threshold * x.maxCoeff();
  Index count = 0;
  Index last_peak = std::numeric_limits<Index>::min() / 2;
  for (Index i = 0; i < N; ++i) {
    const bool left = i == 0 || x[i] > x[i - 1];
    const bool right = i + 1 == N || x[i] >= x[i + 1];
    if (!(left && right && x[i] > threshold)) continue;
    if (i - last_peak > rule.merge_radius) ++count;
    last_peak = i;
  }
  return count;
}

BisectionResult bisection_search(Index R, Index K, Index start, const std::function<Index(Index)>& peak_count) {
  if (R < 1) throw std::domain_error("bisection_search: empty grid");
  if (start < 0 || start >= R) throw std::out_of_range("bisection_search: start outside the grid");
  BisectionResult out;
  out.start = start;
  Index lo = 0;
  Index hi = R - 1;
  Index current = start;
  while (true) {
    const Index count = peak_count(current);
    out.counts.push_back(count);
    out.index = current;
    if (count == K) break;
    if (count > K) {
      hi = current - 1;
    } else {
      lo = current + 1;
    }
    if (lo > hi) break;
    current = lo + (hi - lo) / 2;
    out.probes.push_back(current);
  }
  return out;
}

VectorXd q_function(const ProjectedBank& bank, const VectorXd& y, const ChainTrace& trace) {
  if (trace.empty()) throw std::domain_error("q_function: empty trace");
  const MatrixXd X = stack_samples(trace);
  const VectorXd s2 = sample_noise_variances(trace);
  VectorXd q(bank.size());
  for (Index r = 0; r < bank.size(); ++r) q[r] = mean_log_likelihood(bank[r], y, X, s2);
  return q;
}

double q_function(const MatrixXd& B, const VectorXd& y, const ChainTrace& trace) {
  if (trace.empty()) throw std::domain_error("q_function: empty trace");
  return mean_log_likelihood(B, y, stack_samples(trace), sample_noise_variances(trace));
}

Index m_step(const VectorXd& q) {
  if (q.size() == 0) throw std::domain_error("m_step: empty grid");
  Index best = 0;
  for (Index r = 1; r < q.size(); ++r) {
    if (q[r] > q[best]) best = r;
  }
  return best;
}

VectorXd theta_weights(const ProjectedBank& bank, const VectorXd& y, const VectorXd& x, double sigma_n2,
                       const VectorXd& xi) {
  if (xi.size() != bank.size()) throw std::domain_error("theta_weights: xi size != grid size");
  VectorXd log_w(bank.size());
  for (Index r = 0; r < bank.size(); ++r) {
    log_w[r] = -(y - bank[r] * x).squaredNorm() / (2.0 * sigma_n2) + std::log(xi[r]);
  }
  const double top = log_w.maxCoeff();
  if (!std::isfinite(top)) throw std::domain_error("theta_weights: no finite weight");
  VectorXd w = (log_w.array() - top).exp().matrix();
  return w / w.sum();
}

BisectionResult bisection_init(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                               std::uint64_t seed) {
  Rng rng = make_rng(seed, stream::init);
  const Index R = bank.size();
  const Index start = std::uniform_int_distribution<Index>(0, R - 1)(rng);
  auto peaks_at = [&](Index r) {
    GibbsSampler burst(y, cfg.gibbs, derive_seed(seed, kBisectionTag + 16 * static_cast<std::uint64_t>(r)));
    burst.set_design(bank[r]);
    const ChainTrace trace = burst.run(cfg.bisection_burn_in, std::max<Index>(cfg.bisection_samples, 1));
    return count_peaks(empirical_map(trace).x, cfg.peaks);
  };
  return bisection_search(R, K, start, peaks_at);
}

EstimationResult s1_estimate(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                             std::uint64_t seed) {
  check_inputs(y, bank, K, cfg);
  EstimationResult result;
  result.strategy = "s1";
  try {
    const BisectionResult init = bisection_init(y, bank, K, cfg, seed);
    result.theta_init_index = init.index;
    Index current = init.index;
    GibbsSampler sampler(y, cfg.gibbs, derive_seed(seed, kChainTag));
    sampler.set_design(bank[current]);
    Index burn = burn_length(cfg.burn_in_fraction, cfg.L_MC);
    for (Index d = 1; d <= cfg.d_max; ++d) {
      ChainTrace trace = sampler.run(burn, cfg.L_MC);
      const VectorXd q = q_function(bank, y, trace);
      const Index next = m_step(q);
      result.history.push_back({d, current, next, q[current], q[next]});
      if (!(q[next] >= q[current])) throw std::logic_error("EM grid ascent violated");
      result.em_iters = d;
      result.trace = std::move(trace);
      const bool converged = next == current;
      current = next;
      if (converged || d == cfg.d_max) break;
      sampler.set_design(bank[current]);
      burn = burn_length(cfg.warm_burn_in_fraction, cfg.L_MC);
    }
    result.theta_index = current;
    result.theta_mode = bank.grid()[current];
    summarise(result, result.trace, y, bank, K);
  } catch (const std::domain_error& e) {
    result.status = EstimationStatus::numerical_failure;
    result.diagnostic = e.what();
  }
  return result;
}

EstimationResult s2_estimate(const VectorXd& y, const ProjectedBank& bank, Index K, const EmConfig& cfg,
                             std::uint64_t seed) {
  check_inputs(y, bank, K, cfg);
  EstimationResult result;
  result.strategy = "s2";
  try {
    const BisectionResult init = bisection_init(y, bank, K, cfg, seed);
    result.theta_init_index = init.index;
    const Index R = bank.size();
    const ThetaGrid& grid = bank.grid();

    GibbsSampler sampler(y, cfg.gibbs, derive_seed(seed, kChainTag));
    sampler.set_design(bank[init.index]);
    sampler.initialize();
    sampler.state().theta_index = init.index;
    sampler.state().theta = grid[init.index];

    const VectorXd nu = VectorXd::Constant(R, cfg.nu);
    sampler.set_sweep_hook([&](GibbsSampler& s) {
      ChainState& state = s.state();
      VectorXd alpha = nu;
      alpha[state.theta_index] += 1.0;
      const VectorXd xi = dirichlet_draw(alpha, s.rng());
      const VectorXd w = theta_weights(bank, y, state.x, state.hyper.sigma_n2, xi);
      const Index r = draw_categorical(w, s.rng());
      state.theta_index = r;
      state.theta = grid[r];
      s.set_design(bank[r]);
    });

    result.trace = sampler.run(burn_length(cfg.burn_in_fraction, cfg.L_MC), cfg.L_MC);
    result.em_iters = 1;
    const double theta_mean = posterior_mean(result.trace, TraceField::theta)[0];
    result.theta_index = grid.nearest_index(theta_mean);

    std::vector<Index> counts(static_cast<std::size_t>(R), 0);
    for (const auto& sample : result.trace.samples) ++counts[static_cast<std::size_t>(sample.theta_index)];
    const auto mode = std::max_element(counts.begin(), counts.end()) - counts.begin();
    result.theta_mode = grid[static_cast<Index>(mode)];
    summarise(result, result.trace, y, bank, K);
  } catch (const std::domain_error& e) {
    result.status = EstimationStatus::numerical_failure;
    result.diagnostic = e.what();
  }
  return result;
}

std::string to_string(EstimationStatus status) {
  return status == EstimationStatus::ok ? "ok" : "numerical_failure";
}

void write_report(std::ostream& out, const EstimationResult& result) {
  out << "strategy=" << result.strategy << "\n";
  out << "status=" << to_string(result.status) << "\n";
  if (!result.diagnostic.empty()) out << "diagnostic=" << result.diagnostic << "\n";
  if (!result.ok()) return;
  out << "support=";
  for (std::size_t k = 0; k < result.support.size(); ++k) out << (k ? "," : "") << result.support[k];
  out << "\n";
  out << "theta_hat=" << format_double(result.theta_hat) << "\n";
  out << "theta_index=" << result.theta_index << "\n";
  out << "theta_mode=" << format_double(result.theta_mode) << "\n";
  out << "theta_init_index=" << result.theta_init_index << "\n";
  out << "sigma_hat=" << format_double(result.sigma_hat) << "\n";
  out << "k_w=" << format_double(result.hyper_hat.k_w) << "\n";
  out << "lambda_w=" << format_double(result.hyper_hat.lambda_w) << "\n";
  out << "lambda_delta=" << format_double(result.hyper_hat.lambda_delta) << "\n";
  out << "sigma_n2=" << format_double(result.hyper_hat.sigma_n2) << "\n";
  out << "em_iters=" << result.em_iters << "\n";
  out << "ee=" << format_double(result.ee) << "\n";
  out << "divergences=" << result.divergences << "\n";
  out << "mean_accept_stat=" << format_double(result.mean_accept_stat) << "\n";
  for (const EmIteration& it : result.history) {
    out << "em_step=" << it.d << "," << it.theta_prev << "," << it.theta_next << "," << format_double(it.q_prev)
        << "," << format_double(it.q_next) << "\n";
  }
}

void write_x_csv(std::ostream& out, const EstimationResult& result) {
  out << "index,x_map,x_mean\n";
  for (Index i = 0; i < result.x_map.size(); ++i) {
    out << i << ',' << format_double(result.x_map[i]) << ',' << format_double(result.x_mean[i]) << "\n";
  }
}

}  // namespace cfs
