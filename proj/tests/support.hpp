#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "nlm/linalg.hpp"
#include "nlm/nn.hpp"
#include "nlm/objectives.hpp"

namespace nlm::testing {

/// M^T M + I for a Gaussian M.
Matrix random_spd(Eigen::Index n, std::mt19937_64& rng);

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                     double sd = 1.0);

/// |a - b| / max(|a|, |b|, floor) in the Euclidean norm.
double relative_error(const Vector& a, const Vector& b, double floor = 1e-8);

/// Central differences of f at x with step h.
Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h);

/// Feature map with Gaussian weights and biases (scale `sd`).
FeatureMap random_net(const std::vector<std::size_t>& widths, Activation act,
                      std::mt19937_64& rng, double sd = 0.7);

LunaParams random_luna(const std::vector<std::size_t>& widths, std::size_t heads, Activation act,
                       std::mt19937_64& rng);

}  // namespace nlm::testing

namespace nlm::testing {

struct GridMoments {
  Vector mean;
  Matrix covariance;
};

/// Posterior mean and covariance of a 3-feature Bayesian linear regression by
/// brute-force midpoint integration of likelihood x prior over [lo, hi]^3.
GridMoments grid_posterior_moments(const Matrix& design, const Vector& y, double sigma2,
                                   double alpha, double lo = -5.0, double hi = 5.0,
                                   double step = 0.05);

/// log E_{w ~ N(0, alpha I)} N(y; design w, sigma2 I) from n prior draws,
/// combined with log-sum-exp.
double monte_carlo_log_evidence(const Matrix& design, const Vector& y, double sigma2,
                                double alpha, std::size_t n, std::uint64_t seed);

}  // namespace nlm::testing
