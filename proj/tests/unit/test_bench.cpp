#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cfs/bench.hpp"

using namespace cfs;

namespace {

BenchConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_bench_config(in, "test.cfg");
}

int error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

BenchConfig tiny_bench() {
  BenchConfig cfg = parse(R"(
[bench]
snr_db = 15, 25
strategies = s1, s2
trials = 3
master_seed = 5

[scenario]
L = 40
N = 80
support = 10, 14, 50

[grid]
count = 13

[em]
d_max = 3
L_MC = 40
bisection_burn_in = 10
bisection_samples = 5
)");
  return cfg;
}

TrialOutcome exact_outcome(const std::vector<Index>& support, double amplitude, double theta) {
  TrialOutcome t;
  t.ok = true;
  t.support = support;
  t.support_amplitudes = VectorXd::Constant(static_cast<Index>(support.size()), amplitude);
  t.theta_hat = theta;
  t.sigma_hat = 0.1;
  t.sigma_true = 0.1;
  t.crb_mse_x = 0.04;
  t.crb_mse_theta = 0.01;
  return t;
}

}  // namespace

TEST_CASE("RMSE over trials") {
  const VectorXd truth = (VectorXd(2) << 1.0, 2.0).finished();
  CHECK(rmse({truth, truth, truth}, truth) == 0.0);
  CHECK(rmse({VectorXd::Constant(1, 4.0)}, VectorXd::Constant(1, 1.0)) == 3.0);
  CHECK(rmse({VectorXd::Constant(1, 3.0), VectorXd::Constant(1, -4.0)}, VectorXd::Zero(1)) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK_THROWS_AS(rmse({}, truth), std::domain_error);
  CHECK_THROWS_AS(rmse({VectorXd::Zero(3)}, truth), std::domain_error);
}

TEST_CASE("config parsing") {
  const BenchConfig cfg = parse(R"(
# comment
; another comment
[bench]
snr_db = 5, 10 , 15
m_over_l = 0.3,0.5
matrix_kinds = gauss, df
strategies = s1
trials = 7
master_seed = 123

[scenario]
support = 1, 5, 9
theta_true = 0.9

[sampler]
no_u_turn = false
a_w = 2.5

[em]
L_MC = 300
nu = 2
)");
  CHECK(cfg.snr_db == std::vector<double>{5, 10, 15});
  CHECK(cfg.m_over_l == std::vector<double>{0.3, 0.5});
  CHECK(cfg.matrix_kinds == std::vector<MatrixKind>{MatrixKind::gauss, MatrixKind::df});
  CHECK(cfg.strategies == std::vector<std::string>{"s1"});
  CHECK(cfg.trials == 7);
  CHECK(cfg.master_seed == 123);
  CHECK(cfg.scenario.support == std::vector<Index>{1, 5, 9});
  CHECK_FALSE(cfg.em.gibbs.hmc.no_u_turn);
  CHECK(cfg.em.gibbs.prior.a_w == 2.5);
  CHECK(cfg.em.L_MC == 300);
  CHECK(cfg.em.nu == 2.0);
  CHECK(cfg.grid().size() == 100);
  CHECK(cfg.grid().max() == doctest::Approx(1.35));

  const ScenarioConfig trial = cfg.trial_scenario(MatrixKind::df, 0.3, 10.0, 4);
  CHECK(trial.seed == 127);
  CHECK(trial.M == 40);
  CHECK(trial.snr_db == 10.0);
  CHECK(trial.matrix_kind == MatrixKind::df);
  CHECK(cfg.single_scenario().M == 67);

  const BenchConfig defaults = parse("");
  CHECK(defaults.trials == 20);
  CHECK(defaults.em.d_max == 35);
  CHECK(defaults.em.L_MC == 500);
}

TEST_CASE("config errors cite line numbers") {
  CHECK(error_line("[bench]\ntrials = 3\nbogus = 1\n") == 3);
  CHECK(error_line("\n\n[nowhere]\n") == 3);
  CHECK(error_line("trials = 3\n") == 1);
  CHECK(error_line("[bench]\ntrials = three\n") == 2);
  CHECK(error_line("[bench]\nmatrix_kinds = gauss, bernoulli\n") == 2);
  CHECK(error_line("[bench\n") == 1);
  CHECK(error_line("[bench]\njust words\n") == 2);
  CHECK(error_line("[sampler]\nno_u_turn = maybe\n") == 2);
  // Whole-config checks are not tied to a line.
  CHECK(error_line("[bench]\ntrials = 0\n") == 0);
  CHECK(error_line("[bench]\nm_over_l = 1.5\n") == 0);
  CHECK(error_line("[bench]\nstrategies = s3\n") == 0);
  CHECK(error_line("[em]\nL_MC = 1\n") == 0);
  try {
    parse("[bench]\ntrials = 3\nbogus = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("test.cfg:3:", 0) == 0);
  }
  CHECK_THROWS_AS(load_bench_config("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("bundled configs parse") {
  for (const char* name : {"demo.cfg", "reference.cfg", "offgrid_k4.cfg"}) {
    const BenchConfig cfg = load_bench_config(std::string(CFS_SOURCE_DIR) + "/configs/" + name);
    CHECK(cfg.trials >= 1);
  }
}

TEST_CASE("cell summary") {
  ScenarioConfig ref;
  ref.support = {180, 60, 64};
  SUBCASE("exact recovery gives zero errors") {
    const std::vector<TrialOutcome> trials(3, exact_outcome({64, 180, 60}, 1.0, 1.0));
    const RmseRow row = summarise_cell(trials, ref);
    CHECK(row.rmse_s == 0.0);
    CHECK(row.rmse_x_support == 0.0);
    CHECK(row.rmse_theta == 0.0);
    CHECK(row.rmse_sigma == 0.0);
    CHECK(row.n_trials_ok == 3);
    CHECK_FALSE(row.degraded);
    CHECK(row.rcrb_x == doctest::Approx(0.2));
    CHECK(row.rcrb_theta == doctest::Approx(0.1));
  }
  SUBCASE("hand-computed errors") {
    std::vector<TrialOutcome> trials;
    trials.push_back(exact_outcome({60, 64, 183}, 1.0, 1.1));  // support error 3
    trials.push_back(exact_outcome({56, 64, 180}, 0.5, 0.9));  // support error 4
    const RmseRow row = summarise_cell(trials, ref);
    CHECK(row.rmse_s == doctest::Approx(std::sqrt(12.5)));
    CHECK(row.rmse_x_support == doctest::Approx(std::sqrt(0.75 / 2.0)));
    CHECK(row.rmse_theta == doctest::Approx(0.1));
  }
  SUBCASE("failures are excluded and counted") {
    std::vector<TrialOutcome> trials(5, exact_outcome({60, 64, 180}, 1.0, 1.0));
    trials[0].ok = false;
    CHECK_FALSE(summarise_cell(trials, ref).degraded);
    trials[1].ok = false;
    const RmseRow row = summarise_cell(trials, ref);
    CHECK(row.degraded);
    CHECK(row.n_trials_ok == 3);
    CHECK(row.n_trials == 5);
    CHECK(row.rmse_s == 0.0);
    for (auto& t : trials) t.ok = false;
    CHECK(std::isnan(summarise_cell(trials, ref).rmse_s));
  }
}

TEST_CASE("RMSE CSV round trip") {
  RmseTable table;
  RmseRow a;
  a.strategy = "s1";
  a.matrix_kind = MatrixKind::df;
  a.m_over_l = 0.3;
  a.snr_db = 12.5;
  a.rmse_s = 1.0 / 3.0;
  a.rmse_x_support = 0.125;
  a.rmse_theta = 1e-17;
  a.rmse_sigma = 2.5;
  a.rcrb_x = std::numeric_limits<double>::quiet_NaN();
  a.rcrb_theta = 0.01;
  a.n_trials_ok = 3;
  a.n_trials = 5;
  a.degraded = true;
  table.rows = {a, RmseRow{}};
  table.rows[1].strategy = "s2";
  std::stringstream csv;
  write_rmse_csv(csv, table);
  const RmseTable back = read_rmse_csv(csv);
  REQUIRE(back.rows.size() == 2);
  const RmseRow& b = back.rows[0];
  CHECK(b.strategy == "s1");
  CHECK(b.matrix_kind == MatrixKind::df);
  CHECK(b.m_over_l == a.m_over_l);
  CHECK(b.rmse_s == a.rmse_s);
  CHECK(b.rmse_theta == a.rmse_theta);
  CHECK(std::isnan(b.rcrb_x));
  CHECK(b.n_trials_ok == 3);
  CHECK(b.degraded);
  CHECK(back.any_degraded());
  std::stringstream again;
  write_rmse_csv(again, back);
  CHECK(again.str() == csv.str());

  std::istringstream wrong_header("a,b\n");
  CHECK_THROWS_AS(read_rmse_csv(wrong_header), std::invalid_argument);
  std::istringstream short_row(csv.str().substr(0, csv.str().find('\n') + 1) + "s1,gauss\n");
  CHECK_THROWS_AS(read_rmse_csv(short_row), std::invalid_argument);
}

TEST_CASE("one nearly noiseless trial recovers the support exactly") {
  BenchConfig cfg;
  cfg.snr_db = {60.0};
  cfg.trials = 1;
  cfg.master_seed = 77;
  cfg.em.L_MC = 200;
  const BenchResult r = run_bench(cfg);
  REQUIRE(r.table.rows.size() == 1);
  const RmseRow& row = r.table.rows[0];
  CHECK(row.n_trials_ok == 1);
  CHECK(row.rmse_s == 0.0);
  CHECK(row.rmse_x_support < 0.2);
  CHECK(std::isfinite(row.rcrb_x));
  CHECK(std::isfinite(row.rcrb_theta));
}

TEST_CASE("bench output does not depend on the thread count") {
  const BenchConfig cfg = tiny_bench();
  std::ostringstream one;
  std::ostringstream three;
  Index calls = 0;
  BenchOptions single;
  single.progress = [&](Index done, Index total) {
    ++calls;
    CHECK(done <= total);
  };
  const BenchResult a = run_bench(cfg, single);
  BenchOptions pool;
  pool.threads = 3;
  const BenchResult b = run_bench(cfg, pool);
  write_rmse_csv(one, a.table);
  write_rmse_csv(three, b.table);
  CHECK(one.str() == three.str());
  CHECK(calls == 2 * 2 * 3);
  // Cells are ordered strategy, kind, M/L, SNR.
  REQUIRE(a.table.rows.size() == 4);
  CHECK(a.table.rows[0].strategy == "s1");
  CHECK(a.table.rows[0].snr_db == 15.0);
  CHECK(a.table.rows[1].snr_db == 25.0);
  CHECK(a.table.rows[2].strategy == "s2");
  for (const RmseRow& row : a.table.rows) {
    CHECK(row.n_trials == 3);
    CHECK(row.n_trials_ok <= row.n_trials);
    CHECK(row.rmse_s >= 0.0);
  }
}

TEST_CASE("plot data files") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "cfs_plot_test";
  std::filesystem::remove_all(dir);
  RmseTable table;
  table.rows.resize(2);
  table.rows[0].strategy = "s1";
  table.rows[1].strategy = "s2";
  const std::vector<std::string> files = write_plot_data(dir.string(), table);
  CHECK(files.size() == 4);
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string header;
    std::getline(in, header);
    CHECK(header == "series,strategy,matrix_kind,m_over_l,snr_db,rmse,rcrb");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 2);
  }
  std::filesystem::remove_all(dir);
}
