#include "cfs/sparse_prior.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cfs {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double similarity_norm(double a, double b, const KernelConfig& cfg) { return std::pow(a + b, cfg.r_exp) / cfg.n_x; }

// Gradient of the pair term -lambda |b - a| n_x (a + b)^-r with respect to (a, b).
void kernel_pair_grad(double a, double b, double lambda_delta, const KernelConfig& cfg, double& ga, double& gb) {
  const double s = a + b;
  const double diff = b - a;
  const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  const double inv_pow = cfg.n_x * std::pow(s, -cfg.r_exp);
  const double abs_term = cfg.r_exp * std::abs(diff) * inv_pow / s;
  ga = -lambda_delta * (-sgn * inv_pow - abs_term);
  gb = -lambda_delta * (sgn * inv_pow - abs_term);
}

}  // namespace

bool HyperState::valid() const {
  return k_w > 0.0 && std::isfinite(k_w) && lambda_w > 0.0 && std::isfinite(lambda_w) && lambda_delta >= 0.0 &&
         std::isfinite(lambda_delta) && sigma_n2 > 0.0 && std::isfinite(sigma_n2);
}

double weibull_logpdf(double x, double k_w, double lambda_w) {
  if (!(x > 0.0)) return kNegInf;
  const double log_ratio = std::log(x / lambda_w);
  return std::log(k_w / lambda_w) + (k_w - 1.0) * log_ratio - std::exp(k_w * log_ratio);
}

double inv_gamma_logpdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double kw_prior_logpdf(double k_w, double a_k, double b_k, double d_k, double lambda_w) {
  if (!(k_w > 0.0) || !(lambda_w > 0.0)) return kNegInf;
  return a_k * std::log(k_w) - b_k * k_w - std::pow(d_k, k_w) / lambda_w;
}

double kernel_log(double x_i, double x_next, double lambda_delta, const KernelConfig& cfg) {
  if (x_i < 0.0 || x_next < 0.0) throw std::domain_error("kernel_log: arguments must be non-negative");
  const double norm = similarity_norm(x_i, x_next, cfg);
  if (!(norm > 0.0)) throw std::domain_error("kernel_log: f_K vanishes (both arguments zero)");
  return -lambda_delta * std::abs(x_next - x_i) / norm;
}

double kernel_variation(const VectorXd& x, const KernelConfig& cfg) {
  double total = 0.0;
  for (Index i = 0; i + 1 < x.size(); ++i) {
    total += std::abs(x[i + 1] - x[i]) / similarity_norm(x[i], x[i + 1], cfg);
  }
  return total;
}

double joint_log_prior(const VectorXd& x, const HyperState& state, const KernelConfig& cfg) {
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) return kNegInf;
    total += weibull_logpdf(x[i], state.k_w, state.lambda_w);
  }
  if (state.lambda_delta != 0.0) total -= state.lambda_delta * kernel_variation(x, cfg);
  return total;
}

double conditional_log(Index i, const VectorXd& x, const HyperState& state, const KernelConfig& cfg) {
  const Index N = x.size();
  if (i < 0 || i >= N) throw std::out_of_range("conditional_log: index outside [0, N)");
  if (!(x[i] > 0.0)) return kNegInf;
  double value = weibull_logpdf(x[i], state.k_w, state.lambda_w);
  if (i > 0) value += kernel_log(x[i - 1], x[i], state.lambda_delta, cfg);
  if (i + 1 < N) value += kernel_log(x[i], x[i + 1], state.lambda_delta, cfg);
  return value;
}

namespace {

void check_dims(const VectorXd& x, const VectorXd& y, const MatrixXd& B) {
  if (B.rows() != y.size() || B.cols() != x.size()) {
    throw std::domain_error("dimension mismatch: B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()) +
                            ", y has " + std::to_string(y.size()) + ", x has " + std::to_string(x.size()));
  }
}

MatrixXd project(const ParametricDictionary& dictionary, const MatrixXd& phi) {
  if (phi.cols() != dictionary.rows()) throw std::domain_error("dimension mismatch: Phi columns != L");
  return phi * dictionary.atoms;
}

double gaussian_normaliser(Index M, double sigma_n2) {
  return -static_cast<double>(M) * 0.5 * std::log(2.0 * std::numbers::pi * sigma_n2);
}

}  // namespace

double log_likelihood(const VectorXd& y, const MatrixXd& B, const VectorXd& x, double sigma_n2) {
  check_dims(x, y, B);
  const double rss = (y - B * x).squaredNorm();
  return gaussian_normaliser(y.size(), sigma_n2) - rss / (2.0 * sigma_n2);
}

double log_posterior_x(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                       const KernelConfig& cfg) {
  const double prior = joint_log_prior(x, state, cfg);
  if (prior == kNegInf) {
    check_dims(x, y, B);
    return kNegInf;
  }
  return log_likelihood(y, B, x, state.sigma_n2) + prior;
}

double log_posterior_x(const VectorXd& x, const VectorXd& y, const ParametricDictionary& dictionary,
                       const MatrixXd& phi, const HyperState& state, const KernelConfig& cfg) {
  return log_posterior_x(x, y, project(dictionary, phi), state, cfg);
}

double log_posterior_x_with_grad(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                                 const KernelConfig& cfg, VectorXd& grad) {
  check_dims(x, y, B);
  const Index N = x.size();
  const VectorXd residual = y - B * x;
  grad.noalias() = B.transpose() * residual / state.sigma_n2;
  double value = gaussian_normaliser(y.size(), state.sigma_n2) - residual.squaredNorm() / (2.0 * state.sigma_n2);

  const double k = state.k_w;
  const double lam = state.lambda_w;
  for (Index i = 0; i < N; ++i) {
    const double xi = x[i];
    if (!(xi > 0.0)) {
      grad.setConstant(std::numeric_limits<double>::quiet_NaN());
      return kNegInf;
    }
    const double log_ratio = std::log(xi / lam);
    const double pow_k = std::exp(k * log_ratio);  // (x/lambda)^k
    value += std::log(k / lam) + (k - 1.0) * log_ratio - pow_k;
    grad[i] += ((k - 1.0) - k * pow_k) / xi;
  }
  if (state.lambda_delta != 0.0) {
    for (Index i = 0; i + 1 < N; ++i) {
      value += kernel_log(x[i], x[i + 1], state.lambda_delta, cfg);
      double ga = 0.0;
      double gb = 0.0;
      kernel_pair_grad(x[i], x[i + 1], state.lambda_delta, cfg, ga, gb);
      grad[i] += ga;
      grad[i + 1] += gb;
    }
  }
  return value;
}

double log_posterior_z_with_grad(const VectorXd& z, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                                 const KernelConfig& cfg, VectorXd& grad) {
  const Index N = z.size();
  const VectorXd x = z.array().exp().matrix();
  check_dims(x, y, B);
  if (!z.allFinite() || !x.allFinite()) {
    grad.setConstant(N, std::numeric_limits<double>::quiet_NaN());
    return kNegInf;
  }
  const VectorXd residual = y - B * x;
  grad.noalias() = (B.transpose() * residual / state.sigma_n2).cwiseProduct(x);
  double value = gaussian_normaliser(y.size(), state.sigma_n2) - residual.squaredNorm() / (2.0 * state.sigma_n2);

  const double k = state.k_w;
  const double log_lam = std::log(state.lambda_w);
  const Eigen::ArrayXd log_ratio = z.array() - log_lam;
  const Eigen::ArrayXd pow_k = (k * log_ratio).exp();
  value += static_cast<double>(N) * (std::log(k) - log_lam) + ((k - 1.0) * log_ratio - pow_k + z.array()).sum();
  grad.array() += k - k * pow_k;

  if (state.lambda_delta != 0.0 && N > 1) {
    const Eigen::ArrayXd a = x.head(N - 1).array();
    const Eigen::ArrayXd b = x.tail(N - 1).array();
    // A pair whose coefficients both underflowed contributes nothing; s = 1 keeps it finite.
    const Eigen::ArrayXd s = (a + b > 0.0).select(a + b, 1.0);
    const Eigen::ArrayXd diff = b - a;
    const Eigen::ArrayXd inv_pow =
        cfg.n_x * (cfg.r_exp == 0.5 ? Eigen::ArrayXd(s.rsqrt()) : Eigen::ArrayXd(s.pow(-cfg.r_exp)));
    const Eigen::ArrayXd abs_diff = diff.abs();
    value -= state.lambda_delta * (abs_diff * inv_pow).sum();
    const Eigen::ArrayXd sgn_term = diff.sign() * inv_pow;
    const Eigen::ArrayXd abs_term = cfg.r_exp * abs_diff * inv_pow / s;
    grad.head(N - 1).array() += state.lambda_delta * (sgn_term + abs_term) * a;
    grad.tail(N - 1).array() += state.lambda_delta * (abs_term - sgn_term) * b;
  }
  return value;
}

VectorXd grad_log_posterior_x(const VectorXd& x, const VectorXd& y, const MatrixXd& B, const HyperState& state,
                              const KernelConfig& cfg) {
  VectorXd grad(x.size());
  log_posterior_x_with_grad(x, y, B, state, cfg, grad);
  return grad;
}

VectorXd grad_log_posterior_x(const VectorXd& x, const VectorXd& y, const ParametricDictionary& dictionary,
                              const MatrixXd& phi, const HyperState& state, const KernelConfig& cfg) {
  return grad_log_posterior_x(x, y, project(dictionary, phi), state, cfg);
}

HyperLogPdfs hyper_logpdfs(const HyperState& state, const HyperPriorConfig& cfg) {
  HyperLogPdfs out;
  out.k_w = kw_prior_logpdf(state.k_w, cfg.a_k, cfg.b_k, cfg.d_k, state.lambda_w);
  out.lambda_w =
      state.lambda_w > 0.0 ? inv_gamma_logpdf(std::pow(state.lambda_w, state.k_w), cfg.a_w, cfg.b_w) : kNegInf;
  out.lambda_delta = inv_gamma_logpdf(state.lambda_delta, cfg.a_delta, cfg.b_delta);
  out.sigma_n2 = inv_gamma_logpdf(state.sigma_n2, cfg.a_sigma, cfg.b_sigma);
  return out;
}

}  // namespace cfs
