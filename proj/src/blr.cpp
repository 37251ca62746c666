#include "nlm/blr.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace nlm {

namespace {

void check_hyper(double sigma2, double alpha) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

void check_rows(const Matrix& design, const Vector& y) {
  if (design.rows() != y.size()) {
    throw DimensionError("design has " + std::to_string(design.rows()) + " rows but y has " +
                         std::to_string(y.size()) + " entries");
  }
}

// V_N^{-1} = I/alpha + Phi^T Phi / sigma2.
Matrix posterior_precision(const Matrix& design, double sigma2, double alpha) {
  Matrix precision = design.transpose() * design / sigma2;
  precision.diagonal().array() += 1.0 / alpha;
  return precision;
}

}  // namespace

BlrPosterior fit_posterior(const Matrix& design, const Vector& y, double sigma2, double alpha) {
  check_hyper(sigma2, alpha);
  check_rows(design, y);
  const CholeskyFactor factor = cholesky(posterior_precision(design, sigma2, alpha));
  BlrPosterior post;
  post.sigma2 = sigma2;
  post.alpha = alpha;
  const Vector rhs = design.transpose() * y / sigma2;
  post.mean = solve_spd(factor, rhs);
  post.covariance = inverse_spd(factor);
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  return post;
}

PredictiveDistribution predict(const BlrPosterior& post, const Matrix& design_star) {
  if (design_star.cols() != post.dim()) {
    throw DimensionError("predict: design has " + std::to_string(design_star.cols()) +
                         " columns, posterior has dimension " + std::to_string(post.dim()));
  }
  PredictiveDistribution pred;
  pred.noise_var = post.sigma2;
  pred.mean = design_star * post.mean;
  const Matrix projected = design_star * post.covariance;
  pred.epistemic_var =
      projected.cwiseProduct(design_star).rowwise().sum().cwiseMax(0.0);
  pred.total_var = pred.epistemic_var.array() + post.sigma2;
  return pred;
}

EvidenceTerms evidence_terms(const Matrix& design, const Vector& y, double sigma2, double alpha) {
  check_hyper(sigma2, alpha);
  check_rows(design, y);
  const auto n = static_cast<double>(design.rows());
  const auto m = static_cast<double>(design.cols());
  const CholeskyFactor factor = cholesky(posterior_precision(design, sigma2, alpha));
  const Vector w = solve_spd(factor, Vector(design.transpose() * y / sigma2));

  EvidenceTerms t;
  t.noise_normalizer = -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2);
  t.residual = -(y - design * w).squaredNorm() / (2.0 * sigma2);
  t.prior_normalizer = -0.5 * m * std::log(alpha);
  t.prior_mean_penalty = -w.squaredNorm() / (2.0 * alpha);
  t.half_logdet_cov = -0.5 * logdet_spd(factor);
  return t;
}

double log_marginal_likelihood(const Matrix& design, const Vector& y, double sigma2,
                               double alpha) {
  if (design.rows() == 0) {
    check_hyper(sigma2, alpha);
    return 0.0;
  }
  return evidence_terms(design, y, sigma2, alpha).total();
}

double log_marginal_likelihood_dense(const Matrix& design, const Vector& y, double sigma2,
                                     double alpha) {
  check_hyper(sigma2, alpha);
  check_rows(design, y);
  if (design.rows() == 0) return 0.0;
  Matrix cov = alpha * design * design.transpose();
  cov.diagonal().array() += sigma2;
  const CholeskyFactor factor = cholesky(cov);
  const Vector z = solve_lower(factor, Matrix(y)).col(0);
  const auto n = static_cast<double>(design.rows());
  return -0.5 * z.squaredNorm() - 0.5 * logdet_spd(factor) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

Matrix sample_functions(const FeatureMap& params, double alpha, const Matrix& x_grid,
                        std::size_t n_samples, const FunctionSource& source,
                        std::uint64_t rng_seed) {
  const Matrix design = design_matrix(params, x_grid);
  const Eigen::Index dim = design.cols();
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector mean = Vector::Zero(dim);
  Matrix scale;  // w = mean + scale * z
  if (const auto* post = std::get_if<BlrPosterior>(&source)) {
    if (post->dim() != dim) throw DimensionError("sample_functions: posterior dimension mismatch");
    mean = post->mean;
    scale = cholesky(post->covariance).lower();
  } else {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    scale = Matrix::Identity(dim, dim) * std::sqrt(alpha);
  }

  const auto n = static_cast<Eigen::Index>(n_samples);
  Matrix z(dim, n);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index d = 0; d < dim; ++d) z(d, s) = normal(rng);
  Matrix w = scale * z;
  w.colwise() += mean;
  return (design * w).transpose();
}

}  // namespace nlm
