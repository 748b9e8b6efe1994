#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace cfs {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class PulseKind { gaussian };

/// Reflection pulse r(t, theta). theta acts as a relative bandwidth: the
/// temporal width is base_width / theta, so larger theta gives narrower pulses.
struct GeneratingPulse {
  double base_width = 50e-9;  // seconds, pulse width at theta = 1
  PulseKind kind = PulseKind::gaussian;
};

double generating_pulse(double t, double theta, const GeneratingPulse& pulse);

/// Any theta-parametrized pulse; used by the derivative routine and test stubs.
using PulseFunction = std::function<double(double t, double theta)>;

/// Sampling layout of the dictionary. Atom i (1-based) sampled at row l
/// (1-based) equals r(l * Td - i * dt, theta).
struct DictionaryGeometry {
  Index L = 134;
  Index N = 268;
  double Td = 100e-9;  // design sampling period
  double dt = 50e-9;   // delay spacing between neighbouring atoms
  GeneratingPulse pulse{};

  void validate() const;
  /// Row (0-based) holding the peak of atom i (0-based), possibly outside [0, L).
  double peak_row(Index atom) const { return static_cast<double>(atom + 1) * dt / Td - 1.0; }
};

struct ParametricDictionary {
  MatrixXd atoms;  // L x N
  double theta = 1.0;
  DictionaryGeometry geometry;

  Index rows() const { return atoms.rows(); }
  Index cols() const { return atoms.cols(); }
};

ParametricDictionary build_dictionary(double theta, const DictionaryGeometry& geometry);

MatrixXd build_atoms(double theta, const DictionaryGeometry& geometry, const PulseFunction& pulse);

/// Backward difference (A(theta0) - A(theta0 - delta)) / delta.
MatrixXd dictionary_derivative(double theta0, double delta_theta, const DictionaryGeometry& geometry);
MatrixXd dictionary_derivative(double theta0, double delta_theta, const DictionaryGeometry& geometry,
                               const PulseFunction& pulse);

/// Equally spaced admissible values of the dictionary parameter.
class ThetaGrid {
 public:
  ThetaGrid() = default;
  explicit ThetaGrid(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  Index size() const { return static_cast<Index>(values_.size()); }
  double operator[](Index r) const { return values_[static_cast<std::size_t>(r)]; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }
  double spacing() const;
  /// Index of the grid value closest to theta; ties resolve to the smaller value.
  Index nearest_index(double theta) const;

 private:
  std::vector<double> values_;
};

ThetaGrid theta_grid(double theta_true, double lo_frac, double hi_frac, Index count);

/// Dictionaries for every grid value, built once and shared read-only.
class DictionaryCache {
 public:
  DictionaryCache(const ThetaGrid& grid, const DictionaryGeometry& geometry);

  const ThetaGrid& grid() const { return grid_; }
  const DictionaryGeometry& geometry() const { return geometry_; }
  const MatrixXd& atoms(Index r) const { return atoms_[static_cast<std::size_t>(r)]; }
  Index size() const { return grid_.size(); }

 private:
  ThetaGrid grid_;
  DictionaryGeometry geometry_;
  std::vector<MatrixXd> atoms_;
};

}  // namespace cfs
