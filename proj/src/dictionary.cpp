#include "cfs/dictionary.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cfs {

double generating_pulse(double t, double theta, const GeneratingPulse& pulse) {
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw std::domain_error("generating_pulse: theta must be positive, got " + std::to_string(theta));
  }
  switch (pulse.kind) {
    case PulseKind::gaussian: {
      const double u = t * theta / pulse.base_width;
      return std::exp(-0.5 * u * u);
    }
  }
  throw std::domain_error("generating_pulse: unknown pulse kind");
}

void DictionaryGeometry::validate() const {
  if (L < 1 || N < 1) {
    throw std::domain_error("dictionary: L and N must be >= 1");
  }
  if (!(Td > 0.0) || !(dt > 0.0)) {
    throw std::domain_error("dictionary: Td and dt must be positive");
  }
  if (!(pulse.base_width > 0.0)) {
    throw std::domain_error("dictionary: pulse base width must be positive");
  }
}

MatrixXd build_atoms(double theta, const DictionaryGeometry& geometry, const PulseFunction& pulse) {
  geometry.validate();
  if (!(theta > 0.0)) {
    throw std::domain_error("build_atoms: theta must be positive");
  }
  // Offsets are formed in units of dt, so integer Td/dt ratios give exactly
  // shifted columns.
  const double ratio = geometry.Td / geometry.dt;
  MatrixXd atoms(geometry.L, geometry.N);
  for (Index i = 0; i < geometry.N; ++i) {
    for (Index l = 0; l < geometry.L; ++l) {
      const double t = geometry.dt * (static_cast<double>(l + 1) * ratio - static_cast<double>(i + 1));
      atoms(l, i) = pulse(t, theta);
    }
  }
  return atoms;
}

ParametricDictionary build_dictionary(double theta, const DictionaryGeometry& geometry) {
  const GeneratingPulse shape = geometry.pulse;
  auto pulse = [shape](double t, double th) { return generating_pulse(t, th, shape); };
  return ParametricDictionary{build_atoms(theta, geometry, pulse), theta, geometry};
}

MatrixXd dictionary_derivative(double theta0, double delta_theta, const DictionaryGeometry& geometry,
                               const PulseFunction& pulse) {
  if (!(delta_theta > 0.0) || delta_theta < 8.0 * std::numeric_limits<double>::epsilon() * std::abs(theta0)) {
    throw std::domain_error("dictionary_derivative: step below machine tolerance");
  }
  if (!(theta0 - delta_theta > 0.0)) {
    throw std::domain_error("dictionary_derivative: theta0 - delta_theta must stay positive");
  }
  const MatrixXd upper = build_atoms(theta0, geometry, pulse);
  const MatrixXd lower = build_atoms(theta0 - delta_theta, geometry, pulse);
  return (upper - lower) / delta_theta;
}

MatrixXd dictionary_derivative(double theta0, double delta_theta, const DictionaryGeometry& geometry) {
  const GeneratingPulse shape = geometry.pulse;
  return dictionary_derivative(theta0, delta_theta, geometry,
                               [shape](double t, double th) { return generating_pulse(t, th, shape); });
}

ThetaGrid::ThetaGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw std::domain_error("ThetaGrid: empty grid");
  }
  if (!(values_.front() > 0.0) || !std::isfinite(values_.back())) {
    throw std::domain_error("ThetaGrid: values must lie in (0, inf)");
  }
  for (std::size_t r = 1; r < values_.size(); ++r) {
    if (!(values_[r] > values_[r - 1])) {
      throw std::domain_error("ThetaGrid: values must be strictly increasing");
    }
  }
}

double ThetaGrid::spacing() const {
  if (values_.size() < 2) {
    return 0.0;
  }
  return (values_.back() - values_.front()) / static_cast<double>(values_.size() - 1);
}

Index ThetaGrid::nearest_index(double theta) const {
  Index best = 0;
  double best_dist = std::abs(values_.front() - theta);
  for (std::size_t r = 1; r < values_.size(); ++r) {
    const double d = std::abs(values_[r] - theta);
    if (d < best_dist) {
      best = static_cast<Index>(r);
      best_dist = d;
    }
  }
  return best;
}

ThetaGrid theta_grid(double theta_true, double lo_frac, double hi_frac, Index count) {
  if (!(lo_frac > 0.0) || !(hi_frac > lo_frac) || count < 2 || !(theta_true > 0.0)) {
    throw std::domain_error("theta_grid: need 0 < lo_frac < hi_frac, count >= 2, theta_true > 0");
  }
  const double lo = lo_frac * theta_true;
  const double hi = hi_frac * theta_true;
  std::vector<double> values(static_cast<std::size_t>(count));
  for (Index r = 0; r < count; ++r) {
    values[static_cast<std::size_t>(r)] = lo + (hi - lo) * static_cast<double>(r) / static_cast<double>(count - 1);
  }
  values.back() = hi;
  return ThetaGrid(std::move(values));
}

DictionaryCache::DictionaryCache(const ThetaGrid& grid, const DictionaryGeometry& geometry)
    : grid_(grid), geometry_(geometry) {
  atoms_.reserve(static_cast<std::size_t>(grid.size()));
  for (Index r = 0; r < grid.size(); ++r) {
    atoms_.push_back(build_dictionary(grid[r], geometry).atoms);
  }
}

}  // namespace cfs
