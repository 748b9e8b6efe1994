#include "cfs/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfs {

VectorXd inverse_masses(const HmcConfig& cfg, Index dim) {
  if (cfg.masses.size() == 0) return VectorXd::Ones(dim);
  if (cfg.masses.size() != dim) throw std::domain_error("HMC masses: dimension mismatch");
  if ((cfg.masses.array() <= 0.0).any()) throw std::domain_error("HMC masses must be positive");
  return cfg.masses.cwiseInverse();
}

double kinetic_energy(const VectorXd& p, const VectorXd& inv_mass) {
  return 0.5 * p.cwiseProduct(p).dot(inv_mass);
}

void leapfrog(PhasePoint& point, double eps, const VectorXd& inv_mass, const LogDensityFn& target) {
  point.p += 0.5 * eps * point.grad;
  point.z += eps * point.p.cwiseProduct(inv_mass);
  point.log_density = target(point.z, point.grad);
  point.p += 0.5 * eps * point.grad;
}

namespace {

VectorXd draw_momentum(const VectorXd& inv_mass, Rng& rng) {
  VectorXd p(inv_mass.size());
  for (Index i = 0; i < p.size(); ++i) p[i] = standard_normal(rng) / std::sqrt(inv_mass[i]);
  return p;
}

double hamiltonian(const PhasePoint& point, const VectorXd& inv_mass) {
  return -point.log_density + kinetic_energy(point.p, inv_mass);
}

bool finite_point(const PhasePoint& point) {
  return std::isfinite(point.log_density) && point.grad.allFinite() && point.z.allFinite();
}

PhasePoint start_point(const VectorXd& z, const LogDensityFn& target) {
  PhasePoint point;
  point.z = z;
  point.grad.resize(z.size());
  point.log_density = target(point.z, point.grad);
  if (!finite_point(point)) throw std::domain_error("HMC: target not finite at the current state");
  return point;
}

}  // namespace

HmcTransition hmc_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng) {
  const VectorXd inv_mass = inverse_masses(cfg, z.size());
  PhasePoint point = start_point(z, target);
  point.p = draw_momentum(inv_mass, rng);
  const double h0 = hamiltonian(point, inv_mass);

  HmcTransition out;
  out.z = z;
  out.log_density = point.log_density;
  for (int s = 0; s < cfg.leapfrog_steps; ++s) {
    leapfrog(point, cfg.step_size, inv_mass, target);
    ++out.leapfrog_evals;
    if (!finite_point(point)) {
      out.divergent = true;
      out.hamiltonian_delta = std::numeric_limits<double>::infinity();
      return out;
    }
  }
  const double dh = hamiltonian(point, inv_mass) - h0;
  out.hamiltonian_delta = dh;
  out.accept_stat = std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
  out.divergent = !(dh < cfg.max_energy_error);
  if (uniform01(rng) < out.accept_stat) {
    out.accepted = true;
    out.z = point.z;
    out.log_density = point.log_density;
  }
  return out;
}

namespace {

struct Subtree {
  PhasePoint minus;
  PhasePoint plus;
  PhasePoint proposal;
  double log_weight = -std::numeric_limits<double>::infinity();  // log sum of exp(h0 - H) over leaves
  bool keep_going = true;
  double alpha_sum = 0.0;
  int n_alpha = 0;
  bool divergent = false;
};

struct NutsContext {
  const LogDensityFn& target;
  const VectorXd& inv_mass;
  double h0;
  double eps;
  double max_energy_error;
  Rng& rng;
  int evals = 0;
};

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

bool no_u_turn(const PhasePoint& minus, const PhasePoint& plus, const VectorXd& inv_mass) {
  const VectorXd span = plus.z - minus.z;
  return span.dot(minus.p.cwiseProduct(inv_mass)) >= 0.0 && span.dot(plus.p.cwiseProduct(inv_mass)) >= 0.0;
}

Subtree build_tree(const PhasePoint& from, int direction, int depth, NutsContext& ctx) {
  if (depth == 0) {
    Subtree leaf;
    PhasePoint next = from;
    leapfrog(next, direction * ctx.eps, ctx.inv_mass, ctx.target);
    ++ctx.evals;
    const double h = finite_point(next) ? hamiltonian(next, ctx.inv_mass) : std::numeric_limits<double>::infinity();
    leaf.keep_going = h - ctx.h0 < ctx.max_energy_error;
    leaf.divergent = !leaf.keep_going;
    if (std::isfinite(h)) {
      leaf.log_weight = ctx.h0 - h;
      leaf.alpha_sum = std::min(1.0, std::exp(ctx.h0 - h));
    }
    leaf.n_alpha = 1;
    leaf.minus = next;
    leaf.plus = next;
    leaf.proposal = std::move(next);
    return leaf;
  }

  Subtree tree = build_tree(from, direction, depth - 1, ctx);
  if (!tree.keep_going) return tree;

  Subtree second = build_tree(direction < 0 ? tree.minus : tree.plus, direction, depth - 1, ctx);
  if (direction < 0) {
    tree.minus = std::move(second.minus);
  } else {
    tree.plus = std::move(second.plus);
  }
  // Multinomial choice inside the subtree: proportional to the summed weights.
  const double total = log_add(tree.log_weight, second.log_weight);
  if (second.log_weight > -std::numeric_limits<double>::infinity() &&
      uniform01(ctx.rng) < std::exp(second.log_weight - total)) {
    tree.proposal = std::move(second.proposal);
  }
  tree.log_weight = total;
  tree.alpha_sum += second.alpha_sum;
  tree.n_alpha += second.n_alpha;
  tree.divergent = tree.divergent || second.divergent;
  tree.keep_going = second.keep_going && no_u_turn(tree.minus, tree.plus, ctx.inv_mass);
  return tree;
}

}  // namespace

HmcTransition nuts_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng) {
  const VectorXd inv_mass = inverse_masses(cfg, z.size());
  PhasePoint start = start_point(z, target);
  start.p = draw_momentum(inv_mass, rng);
  const double h0 = hamiltonian(start, inv_mass);

  NutsContext ctx{target, inv_mass, h0, cfg.step_size, cfg.max_energy_error, rng};

  PhasePoint minus = start;
  PhasePoint plus = start;
  PhasePoint proposal = start;
  double log_weight = 0.0;  // the starting point has weight exp(h0 - h0) = 1
  bool keep_going = true;
  double alpha_sum = 0.0;
  int n_alpha = 0;
  bool divergent = false;
  bool moved = false;
  int depth = 0;

  while (keep_going && depth < cfg.max_tree_depth) {
    const int direction = uniform01(rng) < 0.5 ? -1 : 1;
    Subtree tree = build_tree(direction < 0 ? minus : plus, direction, depth, ctx);
    if (direction < 0) {
      minus = tree.minus;
    } else {
      plus = tree.plus;
    }
    // Biased progressive sampling favours the newer half of the trajectory.
    if (tree.keep_going && uniform01(rng) < std::exp(tree.log_weight - log_weight)) {
      proposal = std::move(tree.proposal);
      moved = true;
    }
    log_weight = log_add(log_weight, tree.log_weight);
    alpha_sum += tree.alpha_sum;
    n_alpha += tree.n_alpha;
    divergent = divergent || tree.divergent;
    keep_going = tree.keep_going && no_u_turn(minus, plus, inv_mass);
    ++depth;
  }

  HmcTransition out;
  out.z = proposal.z;
  out.log_density = proposal.log_density;
  out.accepted = moved;
  out.divergent = divergent;
  out.hamiltonian_delta = hamiltonian(proposal, inv_mass) - h0;
  out.accept_stat = n_alpha > 0 ? alpha_sum / n_alpha : 0.0;
  out.leapfrog_evals = ctx.evals;
  out.tree_depth = depth;
  return out;
}

HmcTransition sample_transition(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng) {
  return cfg.no_u_turn ? nuts_transition(z, target, cfg, rng) : hmc_transition(z, target, cfg, rng);
}

DualAveraging::DualAveraging(double initial_step, double target_accept) : target_(target_accept) {
  restart(initial_step);
}

void DualAveraging::restart(double initial_step) {
  mu_ = std::log(10.0 * initial_step);
  h_bar_ = 0.0;
  log_step_bar_ = std::log(initial_step);
  step_ = initial_step;
  adapted_step_ = initial_step;
  iteration_ = 0;
}

void DualAveraging::update(double accept_stat) {
  ++iteration_;
  const double t = static_cast<double>(iteration_);
  const double w = 1.0 / (t + kT0);
  h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_stat);
  const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
  const double eta = std::pow(t, -kKappa);
  log_step_bar_ = eta * log_step + (1.0 - eta) * log_step_bar_;
  step_ = std::exp(log_step);
  adapted_step_ = std::exp(log_step_bar_);
}

double find_reasonable_step(const VectorXd& z, const LogDensityFn& target, const HmcConfig& cfg, Rng& rng) {
  const VectorXd inv_mass = inverse_masses(cfg, z.size());
  PhasePoint start = start_point(z, target);
  start.p = draw_momentum(inv_mass, rng);
  const double h0 = hamiltonian(start, inv_mass);
  double eps = cfg.step_size;

  auto log_accept = [&](double e) {
    PhasePoint trial = start;
    leapfrog(trial, e, inv_mass, target);
    if (!finite_point(trial)) return -std::numeric_limits<double>::infinity();
    return h0 - hamiltonian(trial, inv_mass);
  };
  const double first = log_accept(eps);
  const double direction = first > std::log(0.5) ? 1.0 : -1.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double la = log_accept(eps);
    if (direction * la <= direction * std::log(0.5)) break;
    eps *= std::pow(2.0, direction);
  }
  return eps;
}

}  // namespace cfs
