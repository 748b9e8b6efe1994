#include "cfs/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "cfs/textio.hpp"

namespace cfs {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Robbins-Monro update of a log-scale random-walk step towards the target rate.
void adapt_rw_step(double& log_step, bool accepted, double target, long iteration) {
  const double gain = std::pow(static_cast<double>(std::max<long>(iteration, 1)), -0.6);
  log_step *= std::exp(gain * ((accepted ? 1.0 : 0.0) - target));
  log_step = std::clamp(log_step, 1e-4, 5.0);
}

template <typename LogTarget>
bool log_scale_metropolis(double& value, double step, const LogTarget& target, Rng& rng) {
  const double current = target(value) + std::log(value);
  const double proposal = value * std::exp(step * standard_normal(rng));
  const double proposed = target(proposal) + std::log(proposal);
  if (std::isfinite(proposed) && std::log(uniform01(rng)) < proposed - current) {
    value = proposal;
    return true;
  }
  return false;
}

}  // namespace

void SweepAdaptation::reset_counters() {
  sweeps = 0;
  hmc_accepts = 0;
  divergences = 0;
  kw_accepts = 0;
  lambda_delta_accepts = 0;
  hmc_accept_stat_sum = 0.0;
  leapfrog_evals = 0;
}

void SweepAdaptation::accumulate_moments(const VectorXd& z) {
  if (moment_count == 0) {
    moment_mean = VectorXd::Zero(z.size());
    moment_m2 = VectorXd::Zero(z.size());
  }
  ++moment_count;
  const VectorXd delta = z - moment_mean;
  moment_mean += delta / static_cast<double>(moment_count);
  moment_m2 += delta.cwiseProduct(z - moment_mean);
}

bool SweepAdaptation::apply_moments() {
  if (moment_count < 3) {
    moment_count = 0;
    return false;
  }
  const double n = static_cast<double>(moment_count);
  // Shrink towards a small isotropic variance, as in Stan's windowed adaptation.
  const VectorXd variance = moment_m2 / (n - 1.0);
  const VectorXd regularised = (n / (n + 5.0)) * variance.array() + 1e-3 * (5.0 / (n + 5.0));
  masses = regularised.cwiseInverse();
  moment_count = 0;
  return true;
}

double draw_sigma_n2(double rss, Index M, const HyperPriorConfig& prior, Rng& rng) {
  return inverse_gamma_draw(prior.a_sigma + 0.5 * static_cast<double>(M), prior.b_sigma + 0.5 * rss, rng);
}

double draw_lambda_w(const VectorXd& x, double k_w, const HyperPriorConfig& prior, Rng& rng) {
  const double sum_pow = x.array().pow(k_w).sum();
  const double beta = inverse_gamma_draw(prior.a_w + static_cast<double>(x.size()), prior.b_w + sum_pow, rng);
  // For tiny k_w, beta^(1/k_w) leaves the double range; keep it representable.
  return std::clamp(std::pow(beta, 1.0 / k_w), std::numeric_limits<double>::min(),
                    std::numeric_limits<double>::max());
}

double kw_conditional_log(double k_w, const VectorXd& x, double lambda_w, const HyperPriorConfig& prior) {
  if (!(k_w > 0.0)) return kNegInf;
  double value = kw_prior_logpdf(k_w, prior.a_k, prior.b_k, prior.d_k, lambda_w);
  const double n = static_cast<double>(x.size());
  const VectorXd log_ratio = (x.array().log() - std::log(lambda_w)).matrix();
  value += n * std::log(k_w / lambda_w) + (k_w - 1.0) * log_ratio.sum() - (k_w * log_ratio.array()).exp().sum();
  return value;
}

double lambda_delta_conditional_log(double lambda_delta, double variation, const HyperPriorConfig& prior) {
  if (!(lambda_delta > 0.0)) return kNegInf;
  return inv_gamma_logpdf(lambda_delta, prior.a_delta, prior.b_delta) - lambda_delta * variation;
}

LogDensityFn log_space_target(const VectorXd& y, const MatrixXd& B, const HyperState& hyper,
                              const KernelConfig& kernel) {
  return [&y, &B, hyper, kernel](const VectorXd& z, VectorXd& grad) -> double {
    return log_posterior_z_with_grad(z, y, B, hyper, kernel, grad);
  };
}

SweepInfo gibbs_sweep(ChainState& state, const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg,
                      SweepAdaptation& adaptation, bool adapt, Rng& rng) {
  if (B.rows() != y.size() || B.cols() != state.x.size()) throw std::domain_error("gibbs_sweep: dimension mismatch");
  HyperState& h = state.hyper;
  ++adaptation.sweeps;
  if (adapt) ++adaptation.adapt_sweeps;

  if (cfg.update_sigma) {
    const double rss = (y - B * state.x).squaredNorm();
    h.sigma_n2 = draw_sigma_n2(rss, y.size(), cfg.prior, rng);
  }
  if (cfg.update_lambda_w) h.lambda_w = draw_lambda_w(state.x, h.k_w, cfg.prior, rng);
  if (cfg.update_k_w) {
    auto target = [&](double k) { return kw_conditional_log(k, state.x, h.lambda_w, cfg.prior); };
    const bool ok = log_scale_metropolis(h.k_w, adaptation.kw_log_step, target, rng);
    adaptation.kw_accepts += ok;
    if (adapt) adapt_rw_step(adaptation.kw_log_step, ok, cfg.rw_target_accept, adaptation.adapt_sweeps);
  }
  if (cfg.update_lambda_delta) {
    const double variation = kernel_variation(state.x, cfg.kernel);
    auto target = [&](double ld) { return lambda_delta_conditional_log(ld, variation, cfg.prior); };
    const bool ok = log_scale_metropolis(h.lambda_delta, adaptation.lambda_delta_log_step, target, rng);
    adaptation.lambda_delta_accepts += ok;
    if (adapt) adapt_rw_step(adaptation.lambda_delta_log_step, ok, cfg.rw_target_accept, adaptation.adapt_sweeps);
  }

  SweepInfo info;
  if (cfg.update_x) {
    HmcConfig hmc = cfg.hmc;
    if (adaptation.masses.size() == state.x.size()) hmc.masses = adaptation.masses;
    hmc.step_size = adapt ? adaptation.step_adapter.step() : adaptation.hmc_step;
    const LogDensityFn target = log_space_target(y, B, h, cfg.kernel);
    const VectorXd z = state.x.array().log().matrix();
    const HmcTransition tr = sample_transition(z, target, hmc, rng);
    if (adapt) {
      adaptation.step_adapter.update(tr.accept_stat);
      adaptation.hmc_step = adaptation.step_adapter.adapted_step();
    }
    // Coordinates far in the left tail may underflow; keep x strictly positive.
    const VectorXd x_new = tr.z.array().exp().cwiseMax(std::numeric_limits<double>::min()).matrix();
    if (x_new.allFinite()) state.x = x_new;
    info.hmc_accepted = tr.accepted;
    info.divergent = tr.divergent;
    info.accept_stat = tr.accept_stat;
    info.leapfrog_evals = tr.leapfrog_evals;
    adaptation.hmc_accepts += tr.accepted;
    adaptation.divergences += tr.divergent;
    adaptation.hmc_accept_stat_sum += tr.accept_stat;
    adaptation.leapfrog_evals += tr.leapfrog_evals;
  }
  return info;
}

double log_joint_posterior(const ChainState& state, const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg) {
  return log_posterior_x(state.x, y, B, state.hyper, cfg.kernel) + hyper_logpdfs(state.hyper, cfg.prior).total();
}

ChainState initial_state(const VectorXd& y, const MatrixXd& B, const GibbsConfig& cfg) {
  const Index N = B.cols();
  const Index M = B.rows();
  // Lipschitz constant of the least-squares gradient via power iteration.
  VectorXd v = VectorXd::Ones(N) / std::sqrt(static_cast<double>(N));
  double lipschitz = 1.0;
  for (int it = 0; it < 30; ++it) {
    VectorXd w = B.transpose() * (B * v);
    lipschitz = w.norm();
    if (!(lipschitz > 0.0)) break;
    v = w / lipschitz;
  }
  VectorXd x = VectorXd::Zero(N);
  if (lipschitz > 0.0) {
    for (int it = 0; it < 200; ++it) {
      x = (x + B.transpose() * (y - B * x) / lipschitz).cwiseMax(0.0);
    }
  }
  const double peak = x.maxCoeff();
  const double floor = peak > 0.0 ? 1e-3 * peak : 1e-6;
  x = x.cwiseMax(floor);

  ChainState state;
  state.x = x;
  const double rss = (y - B * x).squaredNorm();
  state.hyper.sigma_n2 = std::max(rss / static_cast<double>(M), 1e-6 * y.squaredNorm() / static_cast<double>(M));
  if (!(state.hyper.sigma_n2 > 0.0)) state.hyper.sigma_n2 = 1e-6;
  state.hyper.k_w = 0.5;
  state.hyper.lambda_w = std::pow(x.array().pow(state.hyper.k_w).mean(), 1.0 / state.hyper.k_w);
  state.hyper.lambda_delta =
      cfg.prior.a_delta > 1.0 ? cfg.prior.b_delta / (cfg.prior.a_delta - 1.0) : cfg.prior.b_delta / cfg.prior.a_delta;
  return state;
}

GibbsSampler::GibbsSampler(VectorXd y, GibbsConfig cfg, std::uint64_t seed)
    : y_(std::move(y)), cfg_(std::move(cfg)), rng_(make_rng(seed, stream::sampler)), seed_(seed) {
  adaptation_.hmc_step = cfg_.hmc.step_size;
  adaptation_.kw_log_step = cfg_.kw_proposal_scale;
  adaptation_.lambda_delta_log_step = cfg_.lambda_delta_proposal_scale;
  adaptation_.step_adapter = DualAveraging(cfg_.hmc.step_size, cfg_.hmc.adapt_target_accept);
}

void GibbsSampler::set_design(const MatrixXd& B) {
  if (B.rows() != y_.size()) throw std::domain_error("GibbsSampler: design rows != measurements");
  design_ = &B;
}

void GibbsSampler::initialize() {
  if (design_ == nullptr) throw std::logic_error("GibbsSampler: design not set");
  state_ = initial_state(y_, *design_, cfg_);
  initialized_ = true;
}

SweepInfo GibbsSampler::sweep(bool adapt) {
  if (design_ == nullptr) throw std::logic_error("GibbsSampler: design not set");
  if (!initialized_) initialize();
  const SweepInfo info = gibbs_sweep(state_, y_, *design_, cfg_, adaptation_, adapt, rng_);
  if (hook_) hook_(*this);
  return info;
}

void GibbsSampler::begin_adaptation() {
  if (!initialized_) initialize();
  if (!cfg_.update_x) return;
  const LogDensityFn target = log_space_target(y_, *design_, state_.hyper, cfg_.kernel);
  HmcConfig probe = cfg_.hmc;
  if (adaptation_.masses.size() == state_.x.size()) probe.masses = adaptation_.masses;
  probe.step_size = adaptation_.hmc_step;
  const double eps = find_reasonable_step(state_.x.array().log().matrix(), target, probe, rng_);
  adaptation_.step_adapter = DualAveraging(eps, cfg_.hmc.adapt_target_accept);
  adaptation_.adapt_sweeps = 0;
}

void GibbsSampler::end_adaptation() { adaptation_.hmc_step = adaptation_.step_adapter.adapted_step(); }

void GibbsSampler::burn(Index sweeps) {
  if (sweeps <= 0) return;
  begin_adaptation();
  const bool windows = cfg_.hmc.adapt_mass && cfg_.update_x && sweeps >= 40;
  if (!windows) {
    for (Index s = 0; s < sweeps; ++s) sweep(true);
    end_adaptation();
    return;
  }
  // Step-size-only buffers at both ends; mass windows double in length in between.
  const Index head = std::max<Index>(sweeps * 15 / 100, 5);
  const Index tail = std::max<Index>(sweeps / 10, 5);
  Index remaining = sweeps - head - tail;
  for (Index s = 0; s < head; ++s) sweep(true);
  Index window = std::max<Index>(remaining / 7, 10);
  while (remaining > 0) {
    const Index len = (remaining < 3 * window) ? remaining : window;
    for (Index s = 0; s < len; ++s) {
      sweep(true);
      adaptation_.accumulate_moments(state_.x.array().log().matrix());
    }
    remaining -= len;
    window *= 2;
    if (adaptation_.apply_moments()) begin_adaptation();
  }
  for (Index s = 0; s < tail; ++s) sweep(true);
  end_adaptation();
}

ChainTrace GibbsSampler::run(Index burn_in, Index samples) {
  if (!initialized_) initialize();
  burn(burn_in);
  adaptation_.reset_counters();

  ChainTrace trace;
  trace.burn_in = burn_in;
  trace.seed = seed_;
  trace.samples.reserve(static_cast<std::size_t>(samples));
  for (Index s = 0; s < samples; ++s) {
    const SweepInfo info = sweep(false);
    TraceSample sample;
    sample.x = state_.x;
    sample.hyper = state_.hyper;
    sample.theta = state_.theta;
    sample.theta_index = state_.theta_index;
    sample.log_post = log_joint();
    trace.samples.push_back(std::move(sample));
    trace.accepted.push_back(info.hmc_accepted ? 1 : 0);
  }
  trace.has_theta = state_.theta_index >= 0;
  trace.divergences = adaptation_.divergences;
  trace.mean_accept_stat = samples > 0 ? adaptation_.hmc_accept_stat_sum / static_cast<double>(samples) : 0.0;
  return trace;
}

VectorXd posterior_mean(const ChainTrace& trace, TraceField field) {
  if (trace.empty()) throw std::domain_error("posterior_mean: empty trace");
  const double n = static_cast<double>(trace.samples.size());
  if (field == TraceField::x) {
    VectorXd sum = VectorXd::Zero(trace.samples.front().x.size());
    for (const auto& s : trace.samples) sum += s.x;
    return sum / n;
  }
  double sum = 0.0;
  for (const auto& s : trace.samples) {
    switch (field) {
      case TraceField::k_w: sum += s.hyper.k_w; break;
      case TraceField::lambda_w: sum += s.hyper.lambda_w; break;
      case TraceField::lambda_delta: sum += s.hyper.lambda_delta; break;
      case TraceField::sigma_n2: sum += s.hyper.sigma_n2; break;
      case TraceField::theta: sum += s.theta; break;
      case TraceField::x: break;
    }
  }
  return VectorXd::Constant(1, sum / n);
}

const TraceSample& empirical_map(const ChainTrace& trace) {
  if (trace.empty()) throw std::domain_error("empirical_map: empty trace");
  auto best = std::max_element(trace.samples.begin(), trace.samples.end(),
                               [](const TraceSample& a, const TraceSample& b) { return a.log_post < b.log_post; });
  return *best;
}

std::vector<Index> extract_support(const VectorXd& x, Index K) {
  if (K < 0 || K > x.size()) throw std::domain_error("extract_support: K must lie in [0, N]");
  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&x](Index a, Index b) { return x[a] > x[b]; });
  order.resize(static_cast<std::size_t>(K));
  std::sort(order.begin(), order.end());
  return order;
}

void write_trace_csv(std::ostream& out, const ChainTrace& trace) {
  const Index N = trace.empty() ? 0 : trace.samples.front().x.size();
  out << "iteration,log_post,k_w,lambda_w,lambda_delta,sigma_n2";
  if (trace.has_theta) out << ",theta";
  for (Index i = 0; i < N; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t s = 0; s < trace.samples.size(); ++s) {
    const TraceSample& t = trace.samples[s];
    out << (trace.burn_in + static_cast<Index>(s)) << ',' << format_double(t.log_post) << ','
        << format_double(t.hyper.k_w) << ',' << format_double(t.hyper.lambda_w) << ','
        << format_double(t.hyper.lambda_delta) << ',' << format_double(t.hyper.sigma_n2);
    if (trace.has_theta) out << ',' << format_double(t.theta);
    for (Index i = 0; i < N; ++i) out << ',' << format_double(t.x[i]);
    out << "\n";
  }
}

}  // namespace cfs
