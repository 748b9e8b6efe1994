#pragma once

#include <Eigen/Dense>

#include "cfs/dictionary.hpp"

namespace cfs {

/// Latent hyperparameters of the sparse model.
struct HyperState {
  double k_w = 0.5;           // Weibull shape
  double lambda_w = 0.1;      // Weibull scale
  double lambda_delta = 1.0;  // kernel strength
  double sigma_n2 = 1e-2;     // noise variance

  bool valid() const;
};

/// Similarity normaliser f_K(a, b) = (a + b)^r / n_x.
struct KernelConfig {
  double r_exp = 0.5;
  double n_x = 1.0;
};

/// Hyperprior parameters. Inverse-Gamma(shape, scale) priors sit on
/// beta = lambda_w^k_w, on lambda_delta and on sigma_n2; k_w has the density
/// k^a_k exp(-b_k k - d_k^k / lambda_w) up to normalisation.
struct HyperPriorConfig {
  double a_w = 1.0;
  double b_w = 0.1;
  double a_delta = 20.0;
  double b_delta = 40.0;
  double a_sigma = 1.0;
  double b_sigma = 1e-3;
  double a_k = 2.0;
  double b_k = 4.0;
  double d_k = 1.0;
};

/// log Weibull(x | k, lambda); -inf outside the support x > 0.
double weibull_logpdf(double x, double k_w, double lambda_w);

/// log Inv-Gamma(x | shape, scale); -inf for x <= 0.
double inv_gamma_logpdf(double x, double shape, double scale);

/// Unnormalised log density of the Weibull shape parameter.
double kw_prior_logpdf(double k_w, double a_k, double b_k, double d_k, double lambda_w);

/// log K(x_i, x_{i+1}) = -lambda_delta |x_{i+1} - x_i| / f_K(x_i, x_{i+1}) <= 0.
double kernel_log(double x_i, double x_next, double lambda_delta, const KernelConfig& cfg);

/// Sum of |x_{i+1} - x_i| / f_K over adjacent pairs, i.e. -sum(kernel_log) / lambda_delta.
double kernel_variation(const VectorXd& x, const KernelConfig& cfg);

/// Unnormalised modified joint prior: Weibull terms plus adjacent-pair kernels.
double joint_log_prior(const VectorXd& x, const HyperState& state, const KernelConfig& cfg);

/// Unnormalised log p(x_i | x_{i-1}, x_{i+1}); depends on the Markov blanket only.
double conditional_log(Index i, const VectorXd& x, const HyperState& state, const KernelConfig& cfg);

/// Gaussian log-likelihood of y given the projected dictionary B = Phi A(theta).
double log_likelihood(const VectorXd& y, const MatrixXd& B, const VectorXd& x, double sigma_n2);

double log_posterior_x(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                       const KernelConfig& cfg);
double log_posterior_x(const VectorXd& x, const VectorXd& y, const ParametricDictionary& dictionary,
                       const MatrixXd& phi, const HyperState& state, const KernelConfig& cfg);

/// Exact gradient of log_posterior_x; |.| contributes 0 at exact ties.
VectorXd grad_log_posterior_x(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                              const KernelConfig& cfg);
VectorXd grad_log_posterior_x(const VectorXd& x, const VectorXd& y, const ParametricDictionary& dictionary,
                              const MatrixXd& phi, const HyperState& state, const KernelConfig& cfg);

/// Value and gradient in one pass, reusing the residual.
double log_posterior_x_with_grad(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                                 const KernelConfig& cfg, VectorXd& grad);

/// log_posterior_x(exp z) + sum z and its gradient in z. The Weibull terms are
/// evaluated in log form, so coordinates whose exp(z) underflows stay finite.
double log_posterior_z_with_grad(const VectorXd& z, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                                 const KernelConfig& cfg, VectorXd& grad);

struct HyperLogPdfs {
  double k_w = 0.0;
  double lambda_w = 0.0;  // Inv-Gamma density of beta = lambda_w^k_w
  double lambda_delta = 0.0;
  double sigma_n2 = 0.0;

  double total() const { return k_w + lambda_w + lambda_delta + sigma_n2; }
};

HyperLogPdfs hyper_logpdfs(const HyperState& state, const HyperPriorConfig& cfg);

}  // namespace cfs
