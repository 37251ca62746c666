#pragma once

#include <string>

#include "nlm/blr.hpp"
#include "nlm/linalg.hpp"

namespace nlm {

enum class KernelKind { Matern52, Rbf };

std::string to_string(KernelKind k);
KernelKind parse_kernel(const std::string& name);

/// Stationary kernel plus a white-noise term that only enters the training
/// Gram diagonal. Defaults are the cubic-gap reference settings.
struct KernelConfig {
  KernelKind kind = KernelKind::Matern52;
  double length_scale = 1.0;
  double amplitude = 1.0;
  double white_noise = 9.0;
};

/// Matern-5/2 with unit length scale plus white noise `noise_var`; the
/// amplitude is the empirical variance of the training targets.
KernelConfig reference_kernel(const Vector& y_train, double noise_var = 9.0);

/// (1 + sqrt5 rho + 5 rho^2 / 3) exp(-sqrt5 rho).
double matern52(double rho);

/// amplitude * shape(|x1 - x2| / length_scale), without white noise.
double kernel_eval(const KernelConfig& cfg, const Vector& x1, const Vector& x2);

/// Cross-covariance between row sets (no white noise).
Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& a, const Matrix& b);

/// Exact GP conditioning. epistemic_var is the latent posterior variance;
/// total_var adds white_noise.
PredictiveDistribution gp_fit_predict(const KernelConfig& cfg, const Matrix& x, const Vector& y,
                                      const Matrix& x_star);

/// log N(y; 0, K + white_noise I).
double gp_log_marginal_likelihood(const KernelConfig& cfg, const Matrix& x, const Vector& y);

}  // namespace nlm
