#include "cfs/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "cfs/crb.hpp"
#include "cfs/textio.hpp"

namespace cfs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("not a boolean: '" + value + "'");
}

std::vector<Index> parse_index_list(const std::string& value) {
  std::vector<Index> out;
  for (const auto& item : split(value, ',')) out.push_back(parse_index(item));
  return out;
}

std::vector<std::string> parse_word_list(const std::string& value) {
  std::vector<std::string> out = split(value, ',');
  for (const auto& w : out) {
    if (w.empty()) throw std::invalid_argument("empty list entry");
  }
  return out;
}

using Setter = std::function<void(BenchConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"bench.snr_db", [](BenchConfig& c, const std::string& v) { c.snr_db = parse_double_list(v); }},
      {"bench.m_over_l", [](BenchConfig& c, const std::string& v) { c.m_over_l = parse_double_list(v); }},
      {"bench.matrix_kinds",
       [](BenchConfig& c, const std::string& v) {
         c.matrix_kinds.clear();
         for (const auto& w : parse_word_list(v)) c.matrix_kinds.push_back(matrix_kind_from_string(w));
       }},
      {"bench.strategies", [](BenchConfig& c, const std::string& v) { c.strategies = parse_word_list(v); }},
      {"bench.trials", [](BenchConfig& c, const std::string& v) { c.trials = parse_index(v); }},
      {"bench.master_seed", [](BenchConfig& c, const std::string& v) { c.master_seed = parse_u64(v); }},

      {"scenario.L", [](BenchConfig& c, const std::string& v) { c.scenario.geometry.L = parse_index(v); }},
      {"scenario.N", [](BenchConfig& c, const std::string& v) { c.scenario.geometry.N = parse_index(v); }},
      {"scenario.Td", [](BenchConfig& c, const std::string& v) { c.scenario.geometry.Td = parse_double(v); }},
      {"scenario.dt", [](BenchConfig& c, const std::string& v) { c.scenario.geometry.dt = parse_double(v); }},
      {"scenario.pulse_width",
       [](BenchConfig& c, const std::string& v) { c.scenario.geometry.pulse.base_width = parse_double(v); }},
      {"scenario.support", [](BenchConfig& c, const std::string& v) { c.scenario.support = parse_index_list(v); }},
      {"scenario.delays", [](BenchConfig& c, const std::string& v) { c.scenario.delays = parse_double_list(v); }},
      {"scenario.amplitude", [](BenchConfig& c, const std::string& v) { c.scenario.amplitude = parse_double(v); }},
      {"scenario.theta_true", [](BenchConfig& c, const std::string& v) { c.scenario.theta_true = parse_double(v); }},
      {"scenario.snr_db", [](BenchConfig& c, const std::string& v) { c.scenario.snr_db = parse_double(v); }},
      {"scenario.m_over_l", [](BenchConfig& c, const std::string& v) { c.scenario_m_over_l = parse_double(v); }},
      {"scenario.matrix_kind",
       [](BenchConfig& c, const std::string& v) { c.scenario.matrix_kind = matrix_kind_from_string(v); }},
      {"scenario.seed", [](BenchConfig& c, const std::string& v) { c.scenario.seed = parse_u64(v); }},

      {"grid.theta_lo", [](BenchConfig& c, const std::string& v) { c.theta_lo_frac = parse_double(v); }},
      {"grid.theta_hi", [](BenchConfig& c, const std::string& v) { c.theta_hi_frac = parse_double(v); }},
      {"grid.count", [](BenchConfig& c, const std::string& v) { c.theta_count = parse_index(v); }},

      {"sampler.a_w", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.a_w = parse_double(v); }},
      {"sampler.b_w", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.b_w = parse_double(v); }},
      {"sampler.a_delta", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.a_delta = parse_double(v); }},
      {"sampler.b_delta", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.b_delta = parse_double(v); }},
      {"sampler.a_sigma", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.a_sigma = parse_double(v); }},
      {"sampler.b_sigma", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.b_sigma = parse_double(v); }},
      {"sampler.a_k", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.a_k = parse_double(v); }},
      {"sampler.b_k", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.b_k = parse_double(v); }},
      {"sampler.d_k", [](BenchConfig& c, const std::string& v) { c.em.gibbs.prior.d_k = parse_double(v); }},
      {"sampler.r_exp", [](BenchConfig& c, const std::string& v) { c.em.gibbs.kernel.r_exp = parse_double(v); }},
      {"sampler.n_x", [](BenchConfig& c, const std::string& v) { c.em.gibbs.kernel.n_x = parse_double(v); }},
      {"sampler.step_size", [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.step_size = parse_double(v); }},
      {"sampler.leapfrog_steps",
       [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.leapfrog_steps = static_cast<int>(parse_index(v)); }},
      {"sampler.max_tree_depth",
       [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.max_tree_depth = static_cast<int>(parse_index(v)); }},
      {"sampler.target_accept",
       [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.adapt_target_accept = parse_double(v); }},
      {"sampler.no_u_turn", [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.no_u_turn = parse_bool(v); }},
      {"sampler.adapt_mass", [](BenchConfig& c, const std::string& v) { c.em.gibbs.hmc.adapt_mass = parse_bool(v); }},
      {"sampler.kw_step", [](BenchConfig& c, const std::string& v) { c.em.gibbs.kw_proposal_scale = parse_double(v); }},
      {"sampler.lambda_delta_step",
       [](BenchConfig& c, const std::string& v) { c.em.gibbs.lambda_delta_proposal_scale = parse_double(v); }},

      {"em.d_max", [](BenchConfig& c, const std::string& v) { c.em.d_max = parse_index(v); }},
      {"em.L_MC", [](BenchConfig& c, const std::string& v) { c.em.L_MC = parse_index(v); }},
      {"em.burn_in_fraction", [](BenchConfig& c, const std::string& v) { c.em.burn_in_fraction = parse_double(v); }},
      {"em.warm_burn_in_fraction",
       [](BenchConfig& c, const std::string& v) { c.em.warm_burn_in_fraction = parse_double(v); }},
      {"em.bisection_burn_in", [](BenchConfig& c, const std::string& v) { c.em.bisection_burn_in = parse_index(v); }},
      {"em.bisection_samples", [](BenchConfig& c, const std::string& v) { c.em.bisection_samples = parse_index(v); }},
      {"em.peak_threshold",
       [](BenchConfig& c, const std::string& v) { c.em.peaks.relative_threshold = parse_double(v); }},
      {"em.merge_radius", [](BenchConfig& c, const std::string& v) { c.em.peaks.merge_radius = parse_index(v); }},
      {"em.nu", [](BenchConfig& c, const std::string& v) { c.em.nu = parse_double(v); }},
  };
  return table;
}

double cell_rmse(const std::vector<VectorXd>& estimates, const VectorXd& truth) {
  return estimates.empty() ? kNaN : rmse(estimates, truth);
}

VectorXd to_vector(const std::vector<Index>& v) {
  VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<Index>(k)] = static_cast<double>(v[k]);
  return out;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what),
      line_(line) {}

void BenchConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config", 0, what); };
  if (trials < 1) fail("trials must be >= 1");
  if (snr_db.empty() || m_over_l.empty() || matrix_kinds.empty() || strategies.empty()) {
    fail("snr_db, m_over_l, matrix_kinds and strategies must be non-empty");
  }
  for (double f : m_over_l) {
    if (!(f > 0.0 && f <= 1.0)) fail("m_over_l entries must lie in (0, 1]");
  }
  if (!(scenario_m_over_l > 0.0 && scenario_m_over_l <= 1.0)) fail("scenario m_over_l must lie in (0, 1]");
  for (const auto& s : strategies) {
    if (s != "s1" && s != "s2") fail("unknown strategy '" + s + "' (expected s1 or s2)");
  }
  for (double snr : snr_db) {
    if (!std::isfinite(snr)) fail("snr_db entries must be finite");
  }
  if (!(theta_lo_frac > 0.0 && theta_lo_frac < theta_hi_frac)) fail("grid bounds must satisfy 0 < theta_lo < theta_hi");
  if (theta_count < 2) fail("grid count must be >= 2");
  if (!(scenario.theta_true > 0.0)) fail("theta_true must be positive");
  if (em.d_max < 1 || em.L_MC < 2) fail("em: d_max >= 1 and L_MC >= 2 required");
  try {
    scenario.geometry.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
}

ThetaGrid BenchConfig::grid() const {
  return theta_grid(scenario.theta_true, theta_lo_frac, theta_hi_frac, theta_count);
}

ScenarioConfig BenchConfig::trial_scenario(MatrixKind kind, double fraction, double snr, Index trial) const {
  ScenarioConfig s = scenario;
  s.matrix_kind = kind;
  s.M = measurements_for(fraction, s.geometry.L);
  s.snr_db = snr;
  s.seed = master_seed + static_cast<std::uint64_t>(trial);
  return s;
}

ScenarioConfig BenchConfig::single_scenario() const {
  ScenarioConfig s = scenario;
  s.M = measurements_for(scenario_m_over_l, s.geometry.L);
  return s;
}

BenchConfig parse_bench_config(std::istream& in, const std::string& source) {
  BenchConfig cfg;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> known = {"bench", "scenario", "grid", "sampler", "em"};
      if (std::find(known.begin(), known.end(), section) == known.end()) {
        throw ConfigError(source, line_no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected key = value");
    if (section.empty()) throw ConfigError(source, line_no, "key outside of any [section]");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(section + "." + key);
    if (it == setters().end()) throw ConfigError(source, line_no, "unknown key '" + key + "' in [" + section + "]");
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, line_no, "bad value for '" + key + "': " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

BenchConfig load_bench_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  return parse_bench_config(in, path);
}

double rmse(const std::vector<VectorXd>& estimates, const VectorXd& truth) {
  if (estimates.empty()) throw std::domain_error("rmse: no estimates");
  double sum = 0.0;
  for (const VectorXd& e : estimates) {
    if (e.size() != truth.size()) throw std::domain_error("rmse: dimension mismatch");
    sum += (e - truth).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(estimates.size()));
}

bool RmseTable::any_degraded() const {
  return std::any_of(rows.begin(), rows.end(), [](const RmseRow& r) { return r.degraded; });
}

TrialOutcome run_trial(const BenchConfig& cfg, const DictionaryCache& cache, const std::string& strategy,
                       const ScenarioConfig& scenario) {
  TrialOutcome out;
  out.crb_mse_x = kNaN;
  out.crb_mse_theta = kNaN;
  try {
    const MeasurementScenario sc = synthesize_scenario(scenario);
    out.sigma_true = sc.sigma_n;
    if (sc.delays.empty()) {
      try {
        const MatrixXd atoms = build_dictionary(sc.theta_true, sc.geometry).atoms;
        const MatrixXd derivative = dictionary_derivative(sc.theta_true, cache.grid().spacing(), sc.geometry);
        const CrbReport crb = joint_crb(sc.x_true, sc.support, sc.phi.entries, atoms, derivative, sc.sigma_n);
        out.crb_mse_x = crb.mse_bound_x;
        out.crb_mse_theta = crb.mse_bound_theta / (sc.theta_true * sc.theta_true);
      } catch (const std::domain_error&) {
        // Bound undefined for this instance; the cell reports NaN.
      }
    }
    const ProjectedBank bank(cache, sc.phi.entries);
    const EstimationResult r = strategy == "s1" ? s1_estimate(sc.y, bank, sc.K(), cfg.em, sc.seed)
                                                : s2_estimate(sc.y, bank, sc.K(), cfg.em, sc.seed);
    if (!r.ok()) {
      out.error = r.diagnostic;
      return out;
    }
    out.support = r.support;
    out.support_amplitudes.resize(sc.K());
    for (Index k = 0; k < sc.K(); ++k) out.support_amplitudes[k] = r.x_map[r.support[static_cast<std::size_t>(k)]];
    out.theta_hat = r.theta_hat;
    out.sigma_hat = r.sigma_hat;
    out.em_iters = r.em_iters;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

RmseRow summarise_cell(const std::vector<TrialOutcome>& trials, const ScenarioConfig& reference) {
  RmseRow row;
  row.n_trials = static_cast<Index>(trials.size());
  std::vector<VectorXd> s_hat;
  std::vector<VectorXd> x_hat;
  std::vector<VectorXd> theta_hat;
  std::vector<VectorXd> sigma_err;
  double crb_x = 0.0;
  double crb_theta = 0.0;
  Index crb_count = 0;

  std::vector<Index> support = reference.support;
  if (!reference.delays.empty()) {
    support.clear();
    for (double d : reference.delays) support.push_back(nearest_atom(d, reference.geometry));
  }
  std::sort(support.begin(), support.end());
  const VectorXd s_true = to_vector(support);
  const VectorXd x_true = VectorXd::Constant(static_cast<Index>(support.size()), reference.amplitude);

  for (const TrialOutcome& t : trials) {
    if (std::isfinite(t.crb_mse_x) && std::isfinite(t.crb_mse_theta)) {
      crb_x += t.crb_mse_x;
      crb_theta += t.crb_mse_theta;
      ++crb_count;
    }
    if (!t.ok) continue;
    ++row.n_trials_ok;
    std::vector<Index> sorted = t.support;
    std::sort(sorted.begin(), sorted.end());
    s_hat.push_back(to_vector(sorted));
    x_hat.push_back(t.support_amplitudes);
    theta_hat.push_back(VectorXd::Constant(1, t.theta_hat / reference.theta_true));
    sigma_err.push_back(VectorXd::Constant(1, t.sigma_hat - t.sigma_true));
  }
  row.rmse_s = cell_rmse(s_hat, s_true);
  row.rmse_x_support = cell_rmse(x_hat, x_true);
  row.rmse_theta = cell_rmse(theta_hat, VectorXd::Ones(1));
  row.rmse_sigma = cell_rmse(sigma_err, VectorXd::Zero(1));
  row.rcrb_x = crb_count > 0 ? std::sqrt(crb_x / static_cast<double>(crb_count)) : kNaN;
  row.rcrb_theta = crb_count > 0 ? std::sqrt(crb_theta / static_cast<double>(crb_count)) : kNaN;
  const Index failed = row.n_trials - row.n_trials_ok;
  row.degraded = 5 * failed > row.n_trials;
  return row;
}

BenchResult run_bench(const BenchConfig& cfg, const BenchOptions& options) {
  cfg.validate();
  const DictionaryCache cache(cfg.grid(), cfg.scenario.geometry);

  struct Cell {
    std::string strategy;
    MatrixKind kind;
    double m_over_l;
    double snr_db;
  };
  std::vector<Cell> cells;
  for (const auto& strategy : cfg.strategies) {
    for (MatrixKind kind : cfg.matrix_kinds) {
      for (double fraction : cfg.m_over_l) {
        for (double snr : cfg.snr_db) cells.push_back({strategy, kind, fraction, snr});
      }
    }
  }

  BenchResult result;
  result.trials.assign(cells.size(), std::vector<TrialOutcome>(static_cast<std::size_t>(cfg.trials)));
  const std::size_t total = cells.size() * static_cast<std::size_t>(cfg.trials);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      const std::size_t c = job / static_cast<std::size_t>(cfg.trials);
      const Index t = static_cast<Index>(job % static_cast<std::size_t>(cfg.trials));
      const Cell& cell = cells[c];
      const ScenarioConfig scenario = cfg.trial_scenario(cell.kind, cell.m_over_l, cell.snr_db, t);
      result.trials[c][static_cast<std::size_t>(t)] = run_trial(cfg, cache, cell.strategy, scenario);
      const std::size_t finished = done.fetch_add(1) + 1;
      if (options.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        options.progress(static_cast<Index>(finished), static_cast<Index>(total));
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(total)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    RmseRow row = summarise_cell(result.trials[c], cfg.trial_scenario(cell.kind, cell.m_over_l, cell.snr_db, 0));
    row.strategy = cell.strategy;
    row.matrix_kind = cell.kind;
    row.m_over_l = cell.m_over_l;
    row.snr_db = cell.snr_db;
    result.table.rows.push_back(row);
  }
  return result;
}

namespace {

const char* kRmseHeader =
    "strategy,matrix_kind,m_over_l,snr_db,rmse_s,rmse_x_support,rmse_theta,rmse_sigma,rcrb_x,rcrb_theta,"
    "n_trials_ok,n_trials,degraded";

}  // namespace

void write_rmse_csv(std::ostream& out, const RmseTable& table) {
  out << kRmseHeader << "\n";
  for (const RmseRow& r : table.rows) {
    out << r.strategy << ',' << to_string(r.matrix_kind) << ',' << format_double(r.m_over_l) << ','
        << format_double(r.snr_db) << ',' << format_double(r.rmse_s) << ',' << format_double(r.rmse_x_support) << ','
        << format_double(r.rmse_theta) << ',' << format_double(r.rmse_sigma) << ',' << format_double(r.rcrb_x) << ','
        << format_double(r.rcrb_theta) << ',' << r.n_trials_ok << ',' << r.n_trials << ',' << (r.degraded ? 1 : 0)
        << "\n";
  }
}

RmseTable read_rmse_csv(std::istream& in) {
  RmseTable table;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kRmseHeader) {
    throw std::invalid_argument("RMSE table: unexpected header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw std::invalid_argument("RMSE table line " + std::to_string(line_no) + ": expected 13 fields");
    try {
      RmseRow r;
      r.strategy = f[0];
      r.matrix_kind = matrix_kind_from_string(f[1]);
      r.m_over_l = parse_double(f[2]);
      r.snr_db = parse_double(f[3]);
      r.rmse_s = parse_double(f[4]);
      r.rmse_x_support = parse_double(f[5]);
      r.rmse_theta = parse_double(f[6]);
      r.rmse_sigma = parse_double(f[7]);
      r.rcrb_x = parse_double(f[8]);
      r.rcrb_theta = parse_double(f[9]);
      r.n_trials_ok = parse_index(f[10]);
      r.n_trials = parse_index(f[11]);
      r.degraded = parse_index(f[12]) != 0;
      table.rows.push_back(r);
    } catch (const std::exception& e) {
      throw std::invalid_argument("RMSE table line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

std::vector<std::string> write_plot_data(const std::string& directory, const RmseTable& table) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  struct Figure {
    const char* name;
    double RmseRow::*rmse;
    double RmseRow::*rcrb;
  };
  const Figure figures[] = {
      {"plot_support.csv", &RmseRow::rmse_s, nullptr},
      {"plot_amplitude.csv", &RmseRow::rmse_x_support, &RmseRow::rcrb_x},
      {"plot_theta.csv", &RmseRow::rmse_theta, &RmseRow::rcrb_theta},
      {"plot_sigma.csv", &RmseRow::rmse_sigma, nullptr},
  };
  std::vector<std::string> written;
  for (const Figure& fig : figures) {
    const std::string path = (fs::path(directory) / fig.name).string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "series,strategy,matrix_kind,m_over_l,snr_db,rmse,rcrb\n";
    for (const RmseRow& r : table.rows) {
      out << r.strategy << '-' << to_string(r.matrix_kind) << '-' << format_double(r.m_over_l) << ',' << r.strategy
          << ',' << to_string(r.matrix_kind) << ',' << format_double(r.m_over_l) << ',' << format_double(r.snr_db)
          << ',' << format_double(r.*fig.rmse) << ',' << (fig.rcrb ? format_double(r.*fig.rcrb) : "nan") << "\n";
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace cfs
