#include "cfs/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cfs/random.hpp"
#include "cfs/textio.hpp"

namespace cfs {

std::string to_string(MatrixKind kind) { return kind == MatrixKind::gauss ? "gauss" : "df"; }

MatrixKind matrix_kind_from_string(const std::string& name) {
  if (name == "gauss") return MatrixKind::gauss;
  if (name == "df") return MatrixKind::df;
  throw std::invalid_argument("unknown matrix kind '" + name + "' (expected gauss or df)");
}

CsMatrix gauss_matrix(Index M, Index L, std::uint64_t seed) {
  if (M < 1 || L < 1) throw std::domain_error("gauss_matrix: M and L must be >= 1");
  Rng rng = make_rng(seed, stream::cs_matrix);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd phi(M, L);
  // Row-major fill keeps the first M rows identical across different M.
  for (Index m = 0; m < M; ++m) {
    for (Index l = 0; l < L; ++l) phi(m, l) = normal(rng);
  }
  return CsMatrix{std::move(phi), MatrixKind::gauss, seed};
}

CsMatrix df_matrix(Index M, Index L, std::uint64_t seed) {
  if (M < 1 || L < 1) throw std::domain_error("df_matrix: M and L must be >= 1");
  Rng rng = make_rng(seed, stream::cs_matrix);
  std::uniform_int_distribution<int> die(0, 5);
  MatrixXd phi(M, L);
  for (Index m = 0; m < M; ++m) {
    for (Index l = 0; l < L; ++l) {
      const int face = die(rng);
      phi(m, l) = face == 0 ? -1.0 : (face == 5 ? 1.0 : 0.0);
    }
  }
  return CsMatrix{std::move(phi), MatrixKind::df, seed};
}

CsMatrix make_cs_matrix(MatrixKind kind, Index M, Index L, std::uint64_t seed) {
  return kind == MatrixKind::gauss ? gauss_matrix(M, L, seed) : df_matrix(M, L, seed);
}

double noise_sigma_for_snr(const VectorXd& clean, double snr_db) {
  if (!std::isfinite(snr_db)) throw std::domain_error("noise_sigma_for_snr: SNR must be finite");
  const double power = clean.squaredNorm() / static_cast<double>(clean.size());
  return std::sqrt(power / std::pow(10.0, snr_db / 10.0));
}

namespace {

VectorXd sparse_truth(const std::vector<Index>& support, double amplitude, Index N) {
  VectorXd x = VectorXd::Zero(N);
  for (Index i : support) x[i] = amplitude;
  return x;
}

void validate_support(std::vector<Index>& support, Index N) {
  if (support.empty()) throw std::domain_error("scenario: empty support");
  std::sort(support.begin(), support.end());
  if (std::adjacent_find(support.begin(), support.end()) != support.end()) {
    throw std::domain_error("scenario: support indices must be distinct");
  }
  if (support.front() < 0 || support.back() >= N) {
    throw std::domain_error("scenario: support index out of range [0, N)");
  }
}

// Noise-free measurements: on-grid atoms or an off-grid pulse train.
VectorXd clean_signal(const MeasurementScenario& sc) {
  if (!sc.delays.empty()) {
    return sc.phi.entries * off_grid_signal(sc.delays, sc.amplitude, sc.theta_true, sc.geometry);
  }
  return sc.phi.entries * (build_dictionary(sc.theta_true, sc.geometry).atoms * sc.x_true);
}

std::vector<Index> support_from_delays(const std::vector<double>& delays, const DictionaryGeometry& geometry) {
  std::vector<Index> support;
  for (double d : delays) support.push_back(nearest_atom(d, geometry));
  return support;
}

}  // namespace

Index nearest_atom(double delay, const DictionaryGeometry& geometry) {
  if (!std::isfinite(delay)) throw std::domain_error("delay must be finite");
  return static_cast<Index>(std::llround(delay / geometry.dt)) - 1;
}

VectorXd off_grid_signal(const std::vector<double>& delays, double amplitude, double theta,
                         const DictionaryGeometry& geometry) {
  VectorXd s = VectorXd::Zero(geometry.L);
  for (Index l = 0; l < geometry.L; ++l) {
    const double t = static_cast<double>(l + 1) * geometry.Td;
    for (double d : delays) s[l] += amplitude * generating_pulse(t - d, theta, geometry.pulse);
  }
  return s;
}

MeasurementScenario synthesize_scenario(const ScenarioConfig& cfg) {
  cfg.geometry.validate();
  if (!(cfg.amplitude > 0.0)) throw std::domain_error("scenario: amplitude must be positive");
  if (cfg.M < 1) throw std::domain_error("scenario: M must be >= 1");

  MeasurementScenario sc;
  sc.geometry = cfg.geometry;
  sc.delays = cfg.delays;
  sc.support = cfg.delays.empty() ? cfg.support : support_from_delays(cfg.delays, cfg.geometry);
  validate_support(sc.support, cfg.geometry.N);
  sc.amplitude = cfg.amplitude;
  sc.theta_true = cfg.theta_true;
  sc.snr_db = cfg.snr_db;
  sc.seed = cfg.seed;
  sc.phi = make_cs_matrix(cfg.matrix_kind, cfg.M, cfg.geometry.L, cfg.seed);
  sc.x_true = sparse_truth(sc.support, cfg.amplitude, cfg.geometry.N);

  sc.clean = clean_signal(sc);
  sc.sigma_n = noise_sigma_for_snr(sc.clean, cfg.snr_db);
  if (!(sc.sigma_n > 0.0)) throw std::domain_error("scenario: clean signal is zero, SNR undefined");

  Rng rng = make_rng(cfg.seed, stream::noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  sc.y.resize(cfg.M);
  for (Index m = 0; m < cfg.M; ++m) sc.y[m] = sc.clean[m] + sc.sigma_n * normal(rng);
  return sc;
}

void write_scenario(std::ostream& out, const MeasurementScenario& sc) {
  out << "# cfsbayes scenario v1\n";
  out << "L=" << sc.geometry.L << "\n";
  out << "N=" << sc.geometry.N << "\n";
  out << "M=" << sc.M() << "\n";
  out << "Td=" << format_double(sc.geometry.Td) << "\n";
  out << "dt=" << format_double(sc.geometry.dt) << "\n";
  out << "pulse_width=" << format_double(sc.geometry.pulse.base_width) << "\n";
  out << "theta_true=" << format_double(sc.theta_true) << "\n";
  out << "amplitude=" << format_double(sc.amplitude) << "\n";
  out << "snr_db=" << format_double(sc.snr_db) << "\n";
  out << "sigma_n=" << format_double(sc.sigma_n) << "\n";
  out << "matrix_kind=" << to_string(sc.phi.kind) << "\n";
  out << "matrix_seed=" << sc.phi.seed << "\n";
  out << "seed=" << sc.seed << "\n";
  out << "support=";
  for (std::size_t k = 0; k < sc.support.size(); ++k) out << (k ? "," : "") << sc.support[k];
  out << "\n";
  if (!sc.delays.empty()) {
    out << "delays=";
    for (std::size_t k = 0; k < sc.delays.size(); ++k) out << (k ? "," : "") << format_double(sc.delays[k]);
    out << "\n";
  }
  out << "[phi]\n";
  for (Index m = 0; m < sc.phi.entries.rows(); ++m) {
    for (Index l = 0; l < sc.phi.entries.cols(); ++l) {
      out << (l ? "," : "") << format_double(sc.phi.entries(m, l));
    }
    out << "\n";
  }
  out << "[y]\n";
  for (Index m = 0; m < sc.y.size(); ++m) out << format_double(sc.y[m]) << "\n";
}

MeasurementScenario read_scenario(std::istream& in) {
  std::map<std::string, std::string> header;
  std::vector<std::vector<double>> phi_rows;
  std::vector<double> y_values;
  std::string line;
  enum class Block { header, phi, y } block = Block::header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line == "[phi]") { block = Block::phi; continue; }
    if (line == "[y]") { block = Block::y; continue; }
    try {
      switch (block) {
        case Block::header: {
          const auto eq = line.find('=');
          if (eq == std::string::npos) throw std::invalid_argument("expected key=value");
          header[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
          break;
        }
        case Block::phi: phi_rows.push_back(parse_double_list(line)); break;
        case Block::y: y_values.push_back(parse_double(line)); break;
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("scenario line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw std::invalid_argument("scenario: missing header key '" + key + "'");
    return it->second;
  };

  MeasurementScenario sc;
  sc.geometry.L = parse_index(get("L"));
  sc.geometry.N = parse_index(get("N"));
  sc.geometry.Td = parse_double(get("Td"));
  sc.geometry.dt = parse_double(get("dt"));
  sc.geometry.pulse.base_width = parse_double(get("pulse_width"));
  sc.geometry.validate();
  const Index M = parse_index(get("M"));
  sc.theta_true = parse_double(get("theta_true"));
  sc.amplitude = parse_double(get("amplitude"));
  sc.snr_db = parse_double(get("snr_db"));
  sc.sigma_n = parse_double(get("sigma_n"));
  sc.seed = parse_u64(get("seed"));
  sc.phi.kind = matrix_kind_from_string(get("matrix_kind"));
  sc.phi.seed = parse_u64(get("matrix_seed"));
  for (double v : parse_double_list(get("support"))) sc.support.push_back(static_cast<Index>(v));
  if (header.count("delays")) sc.delays = parse_double_list(header.at("delays"));
  validate_support(sc.support, sc.geometry.N);

  if (static_cast<Index>(phi_rows.size()) != M || static_cast<Index>(y_values.size()) != M) {
    throw std::invalid_argument("scenario: [phi]/[y] block sizes disagree with M");
  }
  sc.phi.entries.resize(M, sc.geometry.L);
  for (Index m = 0; m < M; ++m) {
    const auto& row = phi_rows[static_cast<std::size_t>(m)];
    if (static_cast<Index>(row.size()) != sc.geometry.L) {
      throw std::invalid_argument("scenario: [phi] row " + std::to_string(m) + " has wrong length");
    }
    for (Index l = 0; l < sc.geometry.L; ++l) sc.phi.entries(m, l) = row[static_cast<std::size_t>(l)];
  }
  sc.y = Eigen::Map<const VectorXd>(y_values.data(), M);
  sc.x_true = sparse_truth(sc.support, sc.amplitude, sc.geometry.N);
  sc.clean = clean_signal(sc);
  return sc;
}

void save_scenario(const std::string& path, const MeasurementScenario& scenario) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_scenario(out, scenario);
}

MeasurementScenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");
  return read_scenario(in);
}

}  // namespace cfs
