#include "nlm/gp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nlm {

std::string to_string(KernelKind k) { return k == KernelKind::Matern52 ? "matern52" : "rbf"; }

KernelKind parse_kernel(const std::string& name) {
  if (name == "matern52") return KernelKind::Matern52;
  if (name == "rbf") return KernelKind::Rbf;
  throw std::invalid_argument("unknown kernel '" + name + "' (expected matern52 or rbf)");
}

KernelConfig reference_kernel(const Vector& y_train, double noise_var) {
  KernelConfig cfg;
  cfg.white_noise = noise_var;
  if (y_train.size() > 0) {
    const double var = (y_train.array() - y_train.mean()).square().mean();
    if (var > 0.0) cfg.amplitude = var;
  }
  return cfg;
}

double matern52(double rho) {
  const double s = std::sqrt(5.0) * rho;
  return (1.0 + s + 5.0 * rho * rho / 3.0) * std::exp(-s);
}

namespace {

void check_config(const KernelConfig& cfg) {
  if (!(cfg.length_scale > 0.0) || !(cfg.amplitude > 0.0) || cfg.white_noise < 0.0) {
    throw std::invalid_argument("kernel: length_scale, amplitude must be > 0, white_noise >= 0");
  }
}

double shape(const KernelConfig& cfg, double r) {
  const double rho = r / cfg.length_scale;
  if (cfg.kind == KernelKind::Matern52) return matern52(rho);
  return std::exp(-0.5 * rho * rho);
}

}  // namespace

double kernel_eval(const KernelConfig& cfg, const Vector& x1, const Vector& x2) {
  if (x1.size() != x2.size()) throw DimensionError("kernel_eval: dimension mismatch");
  check_config(cfg);
  return cfg.amplitude * shape(cfg, (x1 - x2).norm());
}

Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("kernel_matrix: dimension mismatch");
  check_config(cfg);
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = cfg.amplitude * shape(cfg, (a.row(i) - b.row(j)).norm());
  return k;
}

PredictiveDistribution gp_fit_predict(const KernelConfig& cfg, const Matrix& x, const Vector& y,
                                      const Matrix& x_star) {
  if (x.rows() != y.size()) throw DimensionError("gp: X rows and y length differ");
  if (x_star.cols() != x.cols() && x.rows() > 0) throw DimensionError("gp: query dimension");

  PredictiveDistribution pred;
  pred.noise_var = cfg.white_noise;
  const Eigen::Index q = x_star.rows();
  if (x.rows() == 0) {
    check_config(cfg);
    pred.mean = Vector::Zero(q);
    pred.epistemic_var = Vector::Constant(q, cfg.amplitude);
    pred.total_var = pred.epistemic_var.array() + cfg.white_noise;
    return pred;
  }

  Matrix gram = kernel_matrix(cfg, x, x);
  gram.diagonal().array() += cfg.white_noise;
  const CholeskyFactor factor = cholesky(gram);
  const Matrix cross = kernel_matrix(cfg, x, x_star);  // N x Q
  const Vector weights = solve_spd(factor, y);
  const Matrix v = solve_lower(factor, cross);

  pred.mean = cross.transpose() * weights;
  pred.epistemic_var = (Vector::Constant(q, cfg.amplitude) - v.colwise().squaredNorm().transpose())
                           .cwiseMax(0.0);
  pred.total_var = pred.epistemic_var.array() + cfg.white_noise;
  return pred;
}

double gp_log_marginal_likelihood(const KernelConfig& cfg, const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw DimensionError("gp: X rows and y length differ");
  if (x.rows() == 0) return 0.0;
  Matrix gram = kernel_matrix(cfg, x, x);
  gram.diagonal().array() += cfg.white_noise;
  const CholeskyFactor factor = cholesky(gram);
  const Vector weights = solve_spd(factor, y);
  const double n = static_cast<double>(y.size());
  return -0.5 * y.dot(weights) - 0.5 * logdet_spd(factor) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

}  // namespace nlm
