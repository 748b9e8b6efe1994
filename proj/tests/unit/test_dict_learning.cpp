#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cfs/dict_learning.hpp"
#include "cfs/sensing.hpp"

using namespace cfs;

namespace {

ChainTrace fixed_trace(const VectorXd& x, double sigma_n2, int copies) {
  ChainTrace t;
  for (int c = 0; c < copies; ++c) {
    TraceSample s;
    s.x = x;
    s.hyper.sigma_n2 = sigma_n2;
    t.samples.push_back(s);
  }
  return t;
}

struct SmallSetup {
  MeasurementScenario scenario;
  ThetaGrid grid;
  DictionaryCache cache;
  ProjectedBank bank;

  explicit SmallSetup(double snr_db, double theta = 1.0, Index R = 12, std::uint64_t seed = 5)
      : scenario(make(snr_db, theta, seed)),
        grid(theta_grid(1.0, 0.3, 1.5, R)),
        cache(grid, scenario.geometry),
        bank(cache, scenario.phi.entries) {}

  static MeasurementScenario make(double snr_db, double theta, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.geometry.L = 40;
    cfg.geometry.N = 80;
    cfg.M = 20;
    cfg.support = {10, 14, 50};
    cfg.snr_db = snr_db;
    cfg.theta_true = theta;
    cfg.seed = seed;
    return synthesize_scenario(cfg);
  }
};

EmConfig small_em() {
  EmConfig cfg;
  cfg.L_MC = 60;
  cfg.d_max = 4;
  cfg.bisection_burn_in = 20;
  cfg.bisection_samples = 10;
  return cfg;
}

}  // namespace

TEST_CASE("peak counting") {
  PeakRule rule;
  CHECK(count_peaks(VectorXd()) == 0);
  CHECK(count_peaks((VectorXd(7) << 0, 1, 0, 0, 0, 1, 0).finished(), rule) == 2);
  // Neighbouring maxima within the merge radius count once.
  CHECK(count_peaks((VectorXd(7) << 0, 1, 0, 1, 0, 0, 0).finished(), rule) == 1);
  CHECK(count_peaks((VectorXd(7) << 0, 1, 0, 0, 1, 0, 0).finished(), rule) == 2);
  // Small bumps below 0.2 of the maximum are ignored.
  CHECK(count_peaks((VectorXd(7) << 0, 1, 0, 0, 0.1, 0, 0).finished(), rule) == 1);
  // Edges count as peaks.
  CHECK(count_peaks((VectorXd(5) << 1, 0, 0, 0, 1).finished(), rule) == 2);
  // A plateau is one peak.
  CHECK(count_peaks((VectorXd(5) << 0, 1, 1, 1, 0).finished(), rule) == 1);
}

TEST_CASE("bisection on a monotone stub finds the K-peak index within seven probes") {
  const Index R = 100;
  const Index K = 3;
  int worst = 0;
  for (Index target = 0; target < R; ++target) {
    // Too many peaks sends the search to lower indices, so the count rises with
    // the index. Exactly one index has K peaks.
    const auto stub = [target](Index r) { return r < target ? K - 1 : (r == target ? K : K + 1 + (r - target) / 10); };
    for (Index start = 0; start < R; ++start) {
      const BisectionResult res = bisection_search(R, K, start, stub);
      CHECK(res.index == target);
      CHECK(res.counts.back() == K);
      CHECK(res.counts.size() == res.probes.size() + 1);
      worst = std::max(worst, static_cast<int>(res.probes.size()));
    }
  }
  CHECK(worst <= 7);
}

TEST_CASE("bisection edge cases") {
  const auto never = [](Index) -> Index { return 5; };
  for (Index start : {0, 1}) CHECK(bisection_search(2, 3, start, never).probes.size() <= 1);
  const BisectionResult one = bisection_search(1, 3, 0, never);
  CHECK(one.index == 0);
  CHECK(one.probes.empty());
  // Too many peaks everywhere walks down to the first index.
  CHECK(bisection_search(100, 3, 63, never).index == 0);
  CHECK_THROWS_AS(bisection_search(0, 3, 0, never), std::domain_error);
  CHECK_THROWS_AS(bisection_search(10, 3, 10, never), std::out_of_range);
}

TEST_CASE("bisection on noiseless data starts near the true theta") {
  int close = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScenarioConfig sc;
    sc.snr_db = 80.0;
    sc.seed = 40 + seed;
    const MeasurementScenario scenario = synthesize_scenario(sc);
    const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 100);
    const DictionaryCache cache(grid, scenario.geometry);
    const ProjectedBank bank(cache, scenario.phi.entries);
    const BisectionResult res = bisection_init(scenario.y, bank, 3, EmConfig{}, seed);
    if (std::abs(grid[res.index] - 1.0) <= 0.3) ++close;
  }
  CHECK(close >= 18);
}

TEST_CASE("Q function") {
  const SmallSetup s(30.0);
  const VectorXd& y = s.scenario.y;
  SUBCASE("one sample gives its log-likelihood") {
    const ChainTrace t = fixed_trace(s.scenario.x_true, 0.3, 1);
    const VectorXd q = q_function(s.bank, y, t);
    for (Index r = 0; r < s.bank.size(); ++r) {
      CHECK(q[r] == doctest::Approx(log_likelihood(y, s.bank[r], s.scenario.x_true, 0.3)).epsilon(1e-12));
      CHECK(q_function(s.bank[r], y, t) == doctest::Approx(q[r]).epsilon(1e-12));
    }
  }
  SUBCASE("average over samples") {
    ChainTrace t = fixed_trace(s.scenario.x_true, 0.3, 1);
    t.samples.push_back(fixed_trace(0.5 * s.scenario.x_true, 0.7, 1).samples.front());
    const double expected = 0.5 * (log_likelihood(y, s.bank[3], s.scenario.x_true, 0.3) +
                                   log_likelihood(y, s.bank[3], 0.5 * s.scenario.x_true, 0.7));
    CHECK(q_function(s.bank[3], y, t) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("differences ignore theta-free terms") {
    // Adding a prior term that depends only on x shifts every grid value equally.
    Rng rng = make_rng(1);
    ChainTrace t;
    double shift = 0.0;
    for (int l = 0; l < 5; ++l) {
      TraceSample sample;
      sample.x = s.scenario.x_true;
      for (Index i = 0; i < sample.x.size(); ++i) sample.x[i] += 0.01 + 0.05 * uniform01(rng);
      sample.hyper.sigma_n2 = 0.2;
      shift += joint_log_prior(sample.x, HyperState{0.7, 0.3, 0.8, 0.2}, KernelConfig{}) / 5.0;
      t.samples.push_back(sample);
    }
    const VectorXd q = q_function(s.bank, y, t);
    VectorXd full = q;
    for (Index r = 0; r < full.size(); ++r) full[r] += shift;
    CHECK(full[2] - full[7] == doctest::Approx(q[2] - q[7]).epsilon(1e-12));
    CHECK(m_step(full) == m_step(q));
  }
  SUBCASE("noiseless data at the truth peaks at the true theta") {
    const SmallSetup exact(300.0, s.grid[7]);
    const VectorXd q = q_function(exact.bank, exact.scenario.y, fixed_trace(exact.scenario.x_true, 1e-2, 3));
    CHECK(m_step(q) == 7);
  }
  CHECK_THROWS_AS(q_function(s.bank, y, ChainTrace{}), std::domain_error);
}

TEST_CASE("M-step") {
  CHECK(m_step((VectorXd(1) << -4.0).finished()) == 0);
  CHECK(m_step((VectorXd(5) << 1, 3, 7, 2, 0).finished()) == 2);
  CHECK(m_step((VectorXd(4) << 1, 5, 5, 2).finished()) == 1);
  CHECK_THROWS_AS(m_step(VectorXd()), std::domain_error);
}

TEST_CASE("categorical theta weights") {
  const SmallSetup s(20.0);
  Rng rng = make_rng(2);
  const VectorXd xi = dirichlet_draw(VectorXd::Ones(s.bank.size()), rng);
  const VectorXd w = theta_weights(s.bank, s.scenario.y, s.scenario.x_true, 0.05, xi);
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
  CHECK((w.array() >= 0.0).all());
  // Ratios follow likelihood times xi.
  const auto logw = [&](Index r) {
    return log_likelihood(s.scenario.y, s.bank[r], s.scenario.x_true, 0.05) + std::log(xi[r]);
  };
  const Index best = m_step(w);
  for (Index r : {0, 4, 9}) {
    if (w[r] > 1e-250) CHECK(std::log(w[r] / w[best]) == doctest::Approx(logw(r) - logw(best)).epsilon(1e-9));
  }
  // Tiny noise variance still normalises.
  const VectorXd sharp = theta_weights(s.bank, s.scenario.y, s.scenario.x_true, 1e-12, xi);
  CHECK(std::abs(sharp.sum() - 1.0) < 1e-12);
  CHECK_THROWS_AS(theta_weights(s.bank, s.scenario.y, s.scenario.x_true, 0.05, VectorXd::Ones(3)), std::domain_error);
}

TEST_CASE("Dirichlet update with a one-hot count") {
  const Index R = 100;
  const Index current = 17;
  for (double nu : {1.0, 1000.0}) {
    VectorXd alpha = VectorXd::Constant(R, nu);
    alpha[current] += 1.0;
    const VectorXd expected = alpha / alpha.sum();
    Rng rng = make_rng(3);
    VectorXd mean = VectorXd::Zero(R);
    const int draws = 4000;
    for (int d = 0; d < draws; ++d) {
      const VectorXd xi = dirichlet_draw(alpha, rng);
      CHECK(std::abs(xi.sum() - 1.0) < 1e-12);
      mean += xi / draws;
    }
    CHECK(std::abs(mean.sum() - 1.0) < 1e-12);
    // Posterior mean of Dir(nu + c) within Monte Carlo error.
    const VectorXd sd = (expected.array() * (1.0 - expected.array()) / (alpha.sum() + 1.0) / draws).sqrt();
    CHECK(((mean - expected).array() / sd.array()).abs().maxCoeff() < 5.0);
    if (nu == 1000.0) {
      // A new count leaves the distribution almost invariant.
      CHECK((expected.array() - 1.0 / R).abs().maxCoeff() < 1e-3);
      CHECK((mean.array() - 1.0 / R).abs().maxCoeff() < 1e-3);
    }
  }
}

TEST_CASE("S1 with one iteration") {
  const SmallSetup s(20.0);
  EmConfig cfg = small_em();
  cfg.d_max = 1;
  const EstimationResult r = s1_estimate(s.scenario.y, s.bank, 3, cfg, 9);
  REQUIRE(r.ok());
  CHECK(r.em_iters == 1);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].theta_prev == r.theta_init_index);
  CHECK(r.history[0].theta_next == r.theta_index);
  CHECK(r.history[0].q_next >= r.history[0].q_prev);
  CHECK(r.support.size() == 3);
  CHECK(r.trace.size() == cfg.L_MC);
}

TEST_CASE("S1 ascends and terminates") {
  const SmallSetup s(20.0);
  const EmConfig cfg = small_em();
  const EstimationResult r = s1_estimate(s.scenario.y, s.bank, 3, cfg, 10);
  REQUIRE(r.ok());
  CHECK(r.em_iters >= 1);
  CHECK(r.em_iters <= cfg.d_max);
  CHECK(static_cast<Index>(r.history.size()) == r.em_iters);
  for (std::size_t d = 0; d < r.history.size(); ++d) {
    CHECK(r.history[d].q_next >= r.history[d].q_prev);
    if (d > 0) CHECK(r.history[d].theta_prev == r.history[d - 1].theta_next);
    // Every iteration but the last moves.
    if (d + 1 < r.history.size()) CHECK(r.history[d].theta_next != r.history[d].theta_prev);
  }
  CHECK(r.theta_hat == s.grid[r.theta_index]);
  CHECK(r.ee == doctest::Approx((s.scenario.y - s.bank[r.theta_index] * r.x_map).squaredNorm()));
  CHECK(r.support.size() == 3);
}

TEST_CASE("S2 runs a single outer iteration") {
  const SmallSetup s(20.0);
  const EmConfig cfg = small_em();
  const EstimationResult r = s2_estimate(s.scenario.y, s.bank, 3, cfg, 11);
  REQUIRE(r.ok());
  CHECK(r.em_iters == 1);
  CHECK(r.history.empty());
  CHECK(r.support.size() == 3);
  CHECK(r.trace.size() == cfg.L_MC);
  double theta_mean = 0.0;
  for (const auto& sample : r.trace.samples) {
    CHECK(sample.theta == s.grid[sample.theta_index]);
    theta_mean += sample.theta / static_cast<double>(cfg.L_MC);
  }
  CHECK(r.theta_index == s.grid.nearest_index(theta_mean));
}

TEST_CASE("strategies recover the support of a nearly noiseless scenario") {
  ScenarioConfig sc;
  sc.snr_db = 60.0;
  sc.seed = 77;
  const MeasurementScenario scenario = synthesize_scenario(sc);
  const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 100);
  const DictionaryCache cache(grid, scenario.geometry);
  const ProjectedBank bank(cache, scenario.phi.entries);
  EmConfig cfg;
  cfg.L_MC = 200;
  cfg.d_max = 10;
  const EstimationResult s2 = s2_estimate(scenario.y, bank, 3, cfg, 1);
  REQUIRE(s2.ok());
  CHECK(s2.support == scenario.support);
  const EstimationResult s1 = s1_estimate(scenario.y, bank, 3, cfg, 1);
  REQUIRE(s1.ok());
  CHECK(s1.support == scenario.support);
}

TEST_CASE("seeded estimates are reproducible") {
  const SmallSetup s(20.0);
  const EmConfig cfg = small_em();
  std::ostringstream a;
  std::ostringstream b;
  write_report(a, s2_estimate(s.scenario.y, s.bank, 3, cfg, 4));
  write_report(b, s2_estimate(s.scenario.y, s.bank, 3, cfg, 4));
  CHECK(a.str() == b.str());
}

TEST_CASE("input validation and numerical failures") {
  const SmallSetup s(20.0);
  EmConfig cfg = small_em();
  CHECK_THROWS_AS(s1_estimate(s.scenario.y, s.bank, 0, cfg, 1), std::domain_error);
  CHECK_THROWS_AS(s2_estimate(s.scenario.y.head(5), s.bank, 3, cfg, 1), std::domain_error);
  cfg.L_MC = 1;
  CHECK_THROWS_AS(s2_estimate(s.scenario.y, s.bank, 3, cfg, 1), std::domain_error);
  cfg = small_em();
  cfg.d_max = 0;
  CHECK_THROWS_AS(s1_estimate(s.scenario.y, s.bank, 3, cfg, 1), std::domain_error);

  VectorXd bad = s.scenario.y;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  const EstimationResult r = s2_estimate(bad, s.bank, 3, small_em(), 1);
  CHECK(r.status == EstimationStatus::numerical_failure);
  CHECK_FALSE(r.diagnostic.empty());
  std::ostringstream report;
  write_report(report, r);
  CHECK(report.str().find("status=numerical_failure") != std::string::npos);
  CHECK(report.str().find("support=") == std::string::npos);
}

TEST_CASE("report and x CSV") {
  const SmallSetup s(20.0);
  const EstimationResult r = s2_estimate(s.scenario.y, s.bank, 3, small_em(), 4);
  std::ostringstream report;
  write_report(report, r);
  for (const char* key : {"strategy=s2\n", "status=ok\n", "support=", "theta_hat=", "sigma_hat=", "em_iters=1\n",
                          "ee=", "theta_mode="}) {
    CHECK(report.str().find(key) != std::string::npos);
  }
  std::ostringstream csv;
  write_x_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "index,x_map,x_mean");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 80);
}
