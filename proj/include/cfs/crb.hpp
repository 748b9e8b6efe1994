#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfs/sensing.hpp"

namespace cfs {

/// Raised when the bound does not exist for the given instance.
class CrbError : public std::domain_error {
 public:
  CrbError(const std::string& what, double condition_number)
      : std::domain_error(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

/// (1 / sigma_n^2) B^T B with B = Phi A.
MatrixXd fim_x(const MatrixXd& phi, const MatrixXd& atoms, double sigma_n);

/// (1 / sigma_n^2) || Phi A' x ||^2.
double fisher_theta(const VectorXd& x, const MatrixXd& phi, const MatrixXd& derivative, double sigma_n);

/// Mixed information u_i = (1 / sigma_n^2) x^T A'^T Phi^T Phi a_i for every atom.
VectorXd mixed_information(const VectorXd& x, const MatrixXd& phi, const MatrixXd& atoms, const MatrixXd& derivative,
                           double sigma_n);

/// Inverse of [[I_K, v], [v^T, i_theta]] assembled blockwise through the Schur
/// complement b = i_theta - v^T I_K^-1 v.
MatrixXd block_inverse(const MatrixXd& I_K, const VectorXd& v, double i_theta);

struct CrbReport {
  MatrixXd fim_x;        // N x N
  double fisher_theta = 0.0;
  VectorXd mixed_v;      // K
  MatrixXd reduced_fim;  // (K+1) x (K+1), theta last
  MatrixXd reduced_inverse;
  double b_breve = 0.0;
  double condition_number = 0.0;  // of I_K
  double mse_bound_x = 0.0;
  double mse_bound_theta = 0.0;

  double rcrb_x() const;
  double rcrb_theta() const;
};

/// Bounds for jointly estimating the K support amplitudes and theta. x must be
/// exactly K-sparse on `support`.
CrbReport joint_crb(const VectorXd& x, const std::vector<Index>& support, const MatrixXd& phi, const MatrixXd& atoms,
                    const MatrixXd& derivative, double sigma_n);

struct RcrbSweep {
  ScenarioConfig base{};
  std::vector<double> snr_db{5, 10, 15, 20, 25};
  std::vector<double> m_over_l{0.5};
  std::vector<MatrixKind> kinds{MatrixKind::gauss};
  double delta_theta = 1.2 / 99.0;  // backward-difference step, one grid spacing by default
  double sigma_scale = 1.0;         // multiplies the noise level implied by the SNR
};

struct RcrbCell {
  double snr_db = 0.0;
  double m_over_l = 0.0;
  MatrixKind kind = MatrixKind::gauss;
  Index M = 0;
  double sigma_n = 0.0;
  double rcrb_x = 0.0;      // NaN when the bound does not exist
  double rcrb_theta = 0.0;  // NaN when the bound does not exist
  std::string error;
};

/// M = round(m_over_l * L). Phi comes from base.seed, so rows are nested across M.
Index measurements_for(double m_over_l, Index L);

std::vector<RcrbCell> rcrb_curves(const RcrbSweep& sweep);

/// snr_db,m_over_l,matrix_kind,rcrb_x,rcrb_theta
void write_rcrb_csv(std::ostream& out, const std::vector<RcrbCell>& cells);

}  // namespace cfs
