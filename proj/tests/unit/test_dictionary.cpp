#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "cfs/dictionary.hpp"

using namespace cfs;

namespace {

// Analytic derivative of the Gaussian pulse in theta: -(t^2 theta / w0^2) r(t, theta).
MatrixXd analytic_derivative(double theta, const DictionaryGeometry& g) {
  MatrixXd d(g.L, g.N);
  const double w0 = g.pulse.base_width;
  for (Index i = 0; i < g.N; ++i) {
    for (Index l = 0; l < g.L; ++l) {
      const double t = static_cast<double>(l + 1) * g.Td - static_cast<double>(i + 1) * g.dt;
      d(l, i) = -(t * t * theta / (w0 * w0)) * generating_pulse(t, theta, g.pulse);
    }
  }
  return d;
}

double coherence(const MatrixXd& A, Index i, Index j) {
  return A.col(i).dot(A.col(j)) / (A.col(i).norm() * A.col(j).norm());
}

}  // namespace

TEST_CASE("generating pulse values") {
  const GeneratingPulse p{};
  CHECK(generating_pulse(0.0, 0.7, p) == 1.0);
  CHECK(generating_pulse(50e-9, 1.0, p) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(generating_pulse(25e-9, 1.0, p) == generating_pulse(-25e-9, 1.0, p));
  CHECK_THROWS_AS(generating_pulse(0.0, 0.0, p), std::domain_error);
  CHECK_THROWS_AS(generating_pulse(0.0, -1.0, p), std::domain_error);
}

TEST_CASE("bandwidth ordering: smaller theta gives a pointwise wider pulse") {
  const GeneratingPulse p{};
  for (double t : {-300e-9, -40e-9, 1e-9, 20e-9, 75e-9, 500e-9}) {
    for (double a : {0.3, 0.7, 1.0}) {
      CHECK(generating_pulse(t, a, p) >= generating_pulse(t, a + 0.2, p));
    }
  }
}

TEST_CASE("default dictionary shape and peak rows") {
  const DictionaryGeometry g{};
  const ParametricDictionary d = build_dictionary(1.0, g);
  REQUIRE(d.rows() == 134);
  REQUIRE(d.cols() == 268);
  CHECK(d.cols() >= d.rows());
  CHECK(d.atoms.allFinite());
  // Atoms with an even 1-based index peak exactly on a sample row.
  for (Index i = 1; i < g.N; i += 2) {
    Index row = 0;
    d.atoms.col(i).maxCoeff(&row);
    CHECK(row == std::lround(g.peak_row(i)));
    CHECK(static_cast<double>(row + 1) == std::round(static_cast<double>(i + 1) * g.dt / g.Td));
  }
}

TEST_CASE("column entries follow the sampling formula") {
  const DictionaryGeometry g{};
  const MatrixXd A = build_dictionary(0.8, g).atoms;
  for (Index i : {0, 17, 133, 267}) {
    for (Index l : {0, 5, 66, 133}) {
      const double t = static_cast<double>(l + 1) * g.Td - static_cast<double>(i + 1) * g.dt;
      CHECK(A(l, i) == doctest::Approx(generating_pulse(t, 0.8, g.pulse)).epsilon(1e-12));
    }
  }
}

TEST_CASE("shift invariance on interior rows") {
  const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 100);
  SUBCASE("Td = dt: neighbouring atoms differ by one row") {
    DictionaryGeometry g{};
    g.L = 40;
    g.N = 40;
    g.Td = g.dt;
    for (Index r = 0; r < grid.size(); r += 9) {
      const MatrixXd A = build_dictionary(grid[r], g).atoms;
      for (Index i = 0; i + 1 < g.N; ++i) {
        const double err = (A.col(i).segment(0, g.L - 1) - A.col(i + 1).segment(1, g.L - 1)).cwiseAbs().maxCoeff();
        CHECK(err == 0.0);
      }
    }
  }
  SUBCASE("Td = 2 dt: atoms two apart differ by one row") {
    const DictionaryGeometry g{};
    const MatrixXd A = build_dictionary(1.0, g).atoms;
    for (Index i = 0; i + 2 < g.N; ++i) {
      const double err = (A.col(i).segment(0, g.L - 1) - A.col(i + 2).segment(1, g.L - 1)).cwiseAbs().maxCoeff();
      CHECK(err == 0.0);
    }
  }
}

TEST_CASE("neighbouring atoms are highly coherent") {
  const DictionaryGeometry g{};
  const MatrixXd A = build_dictionary(1.0, g).atoms;
  for (Index i = 20; i < 240; i += 13) CHECK(coherence(A, i, i + 1) > 0.5);
}

TEST_CASE("coherence is non-increasing in atom distance") {
  const DictionaryGeometry g{};
  for (double theta : {0.3, 0.6, 1.0, 1.2}) {
    const MatrixXd A = build_dictionary(theta, g).atoms;
    for (Index i = 40; i < 200; i += 11) {
      double previous = 1.0;
      for (Index j = 1; j < 30; ++j) {
        const double c = coherence(A, i, i + j);
        CHECK(c <= previous + 1e-12);
        previous = c;
      }
    }
  }
}

TEST_CASE("backward difference converges to the analytic derivative at first order") {
  const DictionaryGeometry g{};
  const double theta = 1.0;
  const MatrixXd exact = analytic_derivative(theta, g);
  double previous = 0.0;
  for (double delta : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
    const double err = (dictionary_derivative(theta, delta, g) - exact).cwiseAbs().maxCoeff();
    if (previous > 0.0) CHECK(previous / err == doctest::Approx(2.0).epsilon(0.05));
    previous = err;
  }
  CHECK(previous < 2e-3);
}

TEST_CASE("derivative of a theta-independent pulse is zero") {
  DictionaryGeometry g{};
  g.L = 10;
  g.N = 20;
  const MatrixXd d = dictionary_derivative(1.0, 0.01, g, [](double, double) { return 0.25; });
  CHECK(d.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("derivative with one grid spacing is finite") {
  const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 100);
  const MatrixXd d = dictionary_derivative(1.0, grid.spacing(), DictionaryGeometry{});
  CHECK(d.allFinite());
  CHECK(d.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("invalid inputs are rejected") {
  DictionaryGeometry g{};
  CHECK_THROWS_AS(build_dictionary(0.0, g), std::domain_error);
  g.L = 0;
  CHECK_THROWS_AS(build_dictionary(1.0, g), std::domain_error);
  g = DictionaryGeometry{};
  g.Td = 0.0;
  CHECK_THROWS_AS(build_dictionary(1.0, g), std::domain_error);
  g = DictionaryGeometry{};
  CHECK_THROWS_AS(dictionary_derivative(1.0, 1e-18, g), std::domain_error);
  CHECK_THROWS_AS(dictionary_derivative(0.5, 0.5, g), std::domain_error);
}

TEST_CASE("theta grid") {
  const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 100);
  REQUIRE(grid.size() == 100);
  CHECK(grid.min() == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(grid.max() == 1.5);
  CHECK(grid.spacing() == doctest::Approx(1.2 / 99.0).epsilon(1e-12));
  for (Index r = 1; r < grid.size(); ++r) {
    CHECK(grid[r] - grid[r - 1] == doctest::Approx(grid.spacing()).epsilon(1e-9));
  }
  const Index near = grid.nearest_index(1.0);
  CHECK(std::abs(grid[near] - 1.0) <= 0.5 * grid.spacing());

  const ThetaGrid two = theta_grid(1.0, 0.3, 1.5, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == doctest::Approx(0.3));
  CHECK(two[1] == 1.5);

  CHECK_THROWS_AS(theta_grid(1.0, 0.3, 1.5, 1), std::domain_error);
  CHECK_THROWS_AS(theta_grid(1.0, 1.5, 0.3, 10), std::domain_error);
}

TEST_CASE("nearest index ties go to the smaller value") {
  const ThetaGrid grid({1.0, 2.0, 3.0});
  CHECK(grid.nearest_index(1.5) == 0);
  CHECK(grid.nearest_index(2.6) == 2);
  CHECK(grid.nearest_index(-4.0) == 0);
}

TEST_CASE("dictionary cache matches direct construction") {
  const ThetaGrid grid = theta_grid(1.0, 0.3, 1.5, 5);
  DictionaryGeometry g{};
  g.L = 20;
  g.N = 40;
  const DictionaryCache cache(grid, g);
  REQUIRE(cache.size() == 5);
  for (Index r = 0; r < cache.size(); ++r) CHECK(cache.atoms(r) == build_dictionary(grid[r], g).atoms);
}
