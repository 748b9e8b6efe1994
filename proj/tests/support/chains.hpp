#pragma once

#include <vector>

#include "cfs/hmc.hpp"

namespace cfs::testing {

// Tuned chain mirroring the sampler's warm-up: step-size adaptation, one
// diagonal mass window, re-tuned step size, then `n` draws every `thin` transitions.
inline std::vector<VectorXd> run_chain(const LogDensityFn& target, VectorXd z, HmcConfig cfg, int burn, int n,
                                       int thin, Rng& rng) {
  auto adapt = [&](int sweeps, std::vector<VectorXd>* window) {
    cfg.step_size = find_reasonable_step(z, target, cfg, rng);
    DualAveraging adapter(cfg.step_size, cfg.adapt_target_accept);
    for (int b = 0; b < sweeps; ++b) {
      cfg.step_size = adapter.step();
      const HmcTransition t = sample_transition(z, target, cfg, rng);
      adapter.update(t.accept_stat);
      z = t.z;
      if (window && b >= sweeps / 5) window->push_back(z);
    }
    cfg.step_size = adapter.adapted_step();
  };
  std::vector<VectorXd> window;
  adapt(burn / 2, &window);
  VectorXd mean = VectorXd::Zero(z.size());
  for (const auto& v : window) mean += v;
  mean /= static_cast<double>(window.size());
  VectorXd var = VectorXd::Zero(z.size());
  for (const auto& v : window) var += (v - mean).cwiseAbs2();
  cfg.masses = (var / static_cast<double>(window.size() - 1)).cwiseInverse();
  adapt(burn - burn / 2, nullptr);

  std::vector<VectorXd> out;
  for (int s = 0; s < n * thin; ++s) {
    z = sample_transition(z, target, cfg, rng).z;
    if ((s + 1) % thin == 0) out.push_back(z);
  }
  return out;
}

}  // namespace cfs::testing
