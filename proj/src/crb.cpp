#include "cfs/crb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "cfs/textio.hpp"

namespace cfs {

namespace {

void check_sigma(double sigma_n) {
  if (!(sigma_n > 0.0) || !std::isfinite(sigma_n)) throw std::domain_error("CRB: sigma_n must be positive");
}

void check_shapes(const MatrixXd& phi, const MatrixXd& atoms) {
  if (phi.cols() != atoms.rows()) throw std::domain_error("CRB: Phi columns != dictionary rows");
}

// Unit-noise quantities; every bound scales with sigma_n^2 afterwards.
struct UnitBounds {
  MatrixXd I_K;
  VectorXd v;
  double i_theta = 0.0;
  MatrixXd inverse;
  double b_breve = 0.0;
  double condition = 0.0;
  double mse_x = 0.0;
  double mse_theta = 0.0;
};

UnitBounds unit_bounds(const VectorXd& x, const std::vector<Index>& support, const MatrixXd& phi,
                       const MatrixXd& atoms, const MatrixXd& derivative) {
  const Index K = static_cast<Index>(support.size());
  const Index N = atoms.cols();
  if (K < 1) throw std::domain_error("CRB: empty support");
  if (x.size() != N || derivative.rows() != atoms.rows() || derivative.cols() != N) {
    throw std::domain_error("CRB: dimension mismatch");
  }
  std::vector<char> on(static_cast<std::size_t>(N), 0);
  for (Index i : support) {
    if (i < 0 || i >= N) throw std::domain_error("CRB: support index outside [0, N)");
    if (on[static_cast<std::size_t>(i)]) throw std::domain_error("CRB: repeated support index");
    on[static_cast<std::size_t>(i)] = 1;
  }
  for (Index i = 0; i < N; ++i) {
    if (!on[static_cast<std::size_t>(i)] && x[i] != 0.0) throw std::domain_error("CRB: x is not K-sparse on the support");
  }

  MatrixXd B_S(phi.rows(), K);
  for (Index k = 0; k < K; ++k) B_S.col(k) = phi * atoms.col(support[static_cast<std::size_t>(k)]);
  const VectorXd g = phi * (derivative * x);

  UnitBounds out;
  out.I_K = B_S.transpose() * B_S;
  out.v = B_S.transpose() * g;
  out.i_theta = g.squaredNorm();

  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out.I_K, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > hi * 1e3 * std::numeric_limits<double>::epsilon())) {
    throw CrbError("CRB: reduced Fisher information I_K is singular (condition number " +
                       format_double(out.condition) + ")",
                   out.condition);
  }
  const Eigen::LLT<MatrixXd> llt(out.I_K);
  const VectorXd w = llt.solve(out.v);
  out.b_breve = out.i_theta - out.v.dot(w);
  // Below this level b is cancellation noise: A'x lies in the span of the support atoms.
  if (!(out.b_breve > 1e3 * std::numeric_limits<double>::epsilon() * out.i_theta)) {
    throw CrbError("CRB: information deficit, b = I(theta) - v^T I_K^-1 v = " + format_double(out.b_breve) +
                       " is not positive",
                   out.condition);
  }
  out.inverse = block_inverse(out.I_K, out.v, out.i_theta);
  const MatrixXd I_K_inv = llt.solve(MatrixXd::Identity(K, K));
  out.mse_x = I_K_inv.trace() + w.squaredNorm() / out.b_breve;
  out.mse_theta = 1.0 / out.b_breve;
  return out;
}

}  // namespace

MatrixXd fim_x(const MatrixXd& phi, const MatrixXd& atoms, double sigma_n) {
  check_sigma(sigma_n);
  check_shapes(phi, atoms);
  const MatrixXd B = phi * atoms;
  return B.transpose() * B / (sigma_n * sigma_n);
}

double fisher_theta(const VectorXd& x, const MatrixXd& phi, const MatrixXd& derivative, double sigma_n) {
  check_sigma(sigma_n);
  check_shapes(phi, derivative);
  if (x.size() != derivative.cols()) throw std::domain_error("CRB: x length != dictionary columns");
  return (phi * (derivative * x)).squaredNorm() / (sigma_n * sigma_n);
}

VectorXd mixed_information(const VectorXd& x, const MatrixXd& phi, const MatrixXd& atoms, const MatrixXd& derivative,
                           double sigma_n) {
  check_sigma(sigma_n);
  check_shapes(phi, atoms);
  if (derivative.rows() != atoms.rows() || derivative.cols() != atoms.cols() || x.size() != atoms.cols()) {
    throw std::domain_error("CRB: dimension mismatch");
  }
  const VectorXd g = phi * (derivative * x);
  return (phi * atoms).transpose() * g / (sigma_n * sigma_n);
}

MatrixXd block_inverse(const MatrixXd& I_K, const VectorXd& v, double i_theta) {
  const Index K = I_K.rows();
  if (I_K.cols() != K || v.size() != K) throw std::domain_error("block_inverse: dimension mismatch");
  const Eigen::LLT<MatrixXd> llt(I_K);
  if (llt.info() != Eigen::Success) throw CrbError("block_inverse: I_K is not positive definite", 0.0);
  const MatrixXd I_K_inv = llt.solve(MatrixXd::Identity(K, K));
  const VectorXd w = I_K_inv * v;
  const double b = i_theta - v.dot(w);
  if (!(b > 0.0)) throw CrbError("block_inverse: Schur complement is not positive", 0.0);

  MatrixXd out(K + 1, K + 1);
  out.topLeftCorner(K, K) = I_K_inv + w * w.transpose() / b;
  out.topRightCorner(K, 1) = -w / b;
  out.bottomLeftCorner(1, K) = -w.transpose() / b;
  out(K, K) = 1.0 / b;
  return out;
}

double CrbReport::rcrb_x() const { return std::sqrt(mse_bound_x); }
double CrbReport::rcrb_theta() const { return std::sqrt(mse_bound_theta); }

CrbReport joint_crb(const VectorXd& x, const std::vector<Index>& support, const MatrixXd& phi, const MatrixXd& atoms,
                    const MatrixXd& derivative, double sigma_n) {
  check_sigma(sigma_n);
  check_shapes(phi, atoms);
  const UnitBounds unit = unit_bounds(x, support, phi, atoms, derivative);
  const double s2 = sigma_n * sigma_n;
  const Index K = unit.I_K.rows();

  CrbReport report;
  report.fim_x = fim_x(phi, atoms, sigma_n);
  report.fisher_theta = unit.i_theta / s2;
  report.mixed_v = unit.v / s2;
  report.reduced_fim.resize(K + 1, K + 1);
  report.reduced_fim.topLeftCorner(K, K) = unit.I_K / s2;
  report.reduced_fim.topRightCorner(K, 1) = report.mixed_v;
  report.reduced_fim.bottomLeftCorner(1, K) = report.mixed_v.transpose();
  report.reduced_fim(K, K) = report.fisher_theta;
  report.reduced_inverse = unit.inverse * s2;
  report.b_breve = unit.b_breve / s2;
  report.condition_number = unit.condition;
  report.mse_bound_x = unit.mse_x * s2;
  report.mse_bound_theta = unit.mse_theta * s2;
  return report;
}

Index measurements_for(double m_over_l, Index L) {
  if (!(m_over_l > 0.0 && m_over_l <= 1.0)) throw std::domain_error("M/L must lie in (0, 1]");
  return std::max<Index>(1, static_cast<Index>(std::llround(m_over_l * static_cast<double>(L))));
}

std::vector<RcrbCell> rcrb_curves(const RcrbSweep& sweep) {
  const DictionaryGeometry& geom = sweep.base.geometry;
  const MatrixXd atoms = build_dictionary(sweep.base.theta_true, geom).atoms;
  const MatrixXd derivative = dictionary_derivative(sweep.base.theta_true, sweep.delta_theta, geom);
  std::vector<Index> support = sweep.base.support;
  std::sort(support.begin(), support.end());
  VectorXd x = VectorXd::Zero(geom.N);
  for (Index i : support) x[i] = sweep.base.amplitude;

  std::vector<RcrbCell> cells;
  for (MatrixKind kind : sweep.kinds) {
    for (double fraction : sweep.m_over_l) {
      const Index M = measurements_for(fraction, geom.L);
      const MatrixXd phi = make_cs_matrix(kind, M, geom.L, sweep.base.seed).entries;
      const VectorXd clean = phi * (atoms * x);
      UnitBounds unit;
      std::string error;
      try {
        unit = unit_bounds(x, support, phi, atoms, derivative);
      } catch (const std::domain_error& e) {
        error = e.what();
      }
      for (double snr : sweep.snr_db) {
        RcrbCell cell;
        cell.snr_db = snr;
        cell.m_over_l = fraction;
        cell.kind = kind;
        cell.M = M;
        cell.sigma_n = noise_sigma_for_snr(clean, snr) * sweep.sigma_scale;
        cell.error = error;
        if (error.empty()) {
          cell.rcrb_x = cell.sigma_n * std::sqrt(unit.mse_x);
          cell.rcrb_theta = cell.sigma_n * std::sqrt(unit.mse_theta);
        } else {
          cell.rcrb_x = std::numeric_limits<double>::quiet_NaN();
          cell.rcrb_theta = std::numeric_limits<double>::quiet_NaN();
        }
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

void write_rcrb_csv(std::ostream& out, const std::vector<RcrbCell>& cells) {
  out << "snr_db,m_over_l,matrix_kind,rcrb_x,rcrb_theta\n";
  for (const RcrbCell& c : cells) {
    out << format_double(c.snr_db) << ',' << format_double(c.m_over_l) << ',' << to_string(c.kind) << ','
        << format_double(c.rcrb_x) << ',' << format_double(c.rcrb_theta) << "\n";
  }
}

}  // namespace cfs
