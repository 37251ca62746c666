#pragma once

#include <cstdint>
#include <variant>

#include "nlm/linalg.hpp"
#include "nlm/nn.hpp"

namespace nlm {

/// Gaussian posterior over the Bayesian last layer, w ~ N(mean, covariance),
/// under observation noise sigma2 and prior w ~ N(0, alpha I).
struct BlrPosterior {
  Vector mean;
  Matrix covariance;
  double sigma2 = 1.0;
  double alpha = 1.0;

  Eigen::Index dim() const { return mean.size(); }
};

/// Per-point Gaussian predictive. total_var = noise_var + epistemic_var.
struct PredictiveDistribution {
  Vector mean;
  Vector total_var;
  Vector epistemic_var;
  double noise_var = 0.0;

  Eigen::Index size() const { return mean.size(); }
};

BlrPosterior fit_posterior(const Matrix& design, const Vector& y, double sigma2, double alpha);

PredictiveDistribution predict(const BlrPosterior& post, const Matrix& design_star);

/// The five terms of the evidence in feature space. Their sum is the log
/// marginal likelihood; `half_logdet_cov` enters with a plus sign because
/// log|V_N| = -log|V_N^{-1}|.
struct EvidenceTerms {
  double noise_normalizer = 0.0;   // -N/2 log(2 pi sigma2)
  double residual = 0.0;           // -|y - Phi w_N|^2 / (2 sigma2)
  double prior_normalizer = 0.0;   // -(L+1)/2 log(alpha)
  double prior_mean_penalty = 0.0; // -|w_N|^2 / (2 alpha)
  double half_logdet_cov = 0.0;    // +1/2 log|V_N|

  double total() const {
    return noise_normalizer + residual + prior_normalizer + prior_mean_penalty + half_logdet_cov;
  }
};

EvidenceTerms evidence_terms(const Matrix& design, const Vector& y, double sigma2, double alpha);

/// log of the integral of N(y; Phi w, sigma2 I) N(w; 0, alpha I) dw, computed
/// through the feature-space expansion (cost cubic in L, linear in N).
double log_marginal_likelihood(const Matrix& design, const Vector& y, double sigma2, double alpha);

/// Same quantity as the density of y under N(0, sigma2 I + alpha Phi Phi^T)
/// (cost cubic in N).
double log_marginal_likelihood_dense(const Matrix& design, const Vector& y, double sigma2,
                                     double alpha);

struct PriorSource {};
using FunctionSource = std::variant<PriorSource, BlrPosterior>;

/// Draws last-layer weights from the prior or a posterior and returns
/// Phi(x_grid) w for each draw (n_samples x grid size).
Matrix sample_functions(const FeatureMap& params, double alpha, const Matrix& x_grid,
                        std::size_t n_samples, const FunctionSource& source,
                        std::uint64_t rng_seed);

}  // namespace nlm
