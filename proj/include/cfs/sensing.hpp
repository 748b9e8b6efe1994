#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfs/dictionary.hpp"

namespace cfs {

enum class MatrixKind { gauss, df };

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& name);

/// Compressive sampling matrix Phi (M x L).
struct CsMatrix {
  MatrixXd entries;
  MatrixKind kind = MatrixKind::gauss;
  std::uint64_t seed = 0;
};

/// i.i.d. N(0, 1) entries.
CsMatrix gauss_matrix(Index M, Index L, std::uint64_t seed);
/// i.i.d. entries in {-1, 0, +1} with probabilities {1/6, 2/3, 1/6}.
CsMatrix df_matrix(Index M, Index L, std::uint64_t seed);
CsMatrix make_cs_matrix(MatrixKind kind, Index M, Index L, std::uint64_t seed);

struct ScenarioConfig {
  DictionaryGeometry geometry{};
  Index M = 67;
  std::vector<Index> support{60, 64, 180};  // 0-based atom indices
  double amplitude = 1.0;
  double theta_true = 1.0;
  double snr_db = 20.0;
  MatrixKind matrix_kind = MatrixKind::gauss;
  std::uint64_t seed = 1;
  /// Reflection delays in seconds. When set, the signal is synthesised off the
  /// atom grid and `support` is replaced by the nearest atoms.
  std::vector<double> delays;

  Index K() const { return static_cast<Index>(support.size()); }
};

/// Ground truth and observations of one compressed acquisition.
struct MeasurementScenario {
  DictionaryGeometry geometry{};
  std::vector<Index> support;  // sorted ascending, 0-based
  double amplitude = 1.0;
  double theta_true = 1.0;
  double snr_db = 20.0;
  CsMatrix phi;
  VectorXd x_true;  // N
  VectorXd clean;   // M, Phi A(theta) x
  VectorXd y;       // M
  double sigma_n = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> delays;  // seconds; empty for on-grid scenarios

  Index M() const { return phi.entries.rows(); }
  Index L() const { return geometry.L; }
  Index N() const { return geometry.N; }
  Index K() const { return static_cast<Index>(support.size()); }
};

/// SNR is per-measurement signal power over noise power:
/// 10 log10(||Phi A x||^2 / (M sigma^2)).
double noise_sigma_for_snr(const VectorXd& clean, double snr_db);

/// 0-based index of the atom whose peak lies closest to `delay` (seconds).
Index nearest_atom(double delay, const DictionaryGeometry& geometry);

/// Unprojected pulse train sum_k amplitude * r(l Td - delay_k, theta), l = 1..L.
VectorXd off_grid_signal(const std::vector<double>& delays, double amplitude, double theta,
                         const DictionaryGeometry& geometry);

MeasurementScenario synthesize_scenario(const ScenarioConfig& cfg);

/// Plain-text scenario file: key=value header, then "[phi]" and "[y]" CSV
/// blocks. Doubles are written in shortest round-trip form, so reading a file
/// back reproduces every value bit-for-bit.
void write_scenario(std::ostream& out, const MeasurementScenario& scenario);
MeasurementScenario read_scenario(std::istream& in);

void save_scenario(const std::string& path, const MeasurementScenario& scenario);
MeasurementScenario load_scenario(const std::string& path);

}  // namespace cfs
