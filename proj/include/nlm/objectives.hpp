#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "nlm/linalg.hpp"
#include "nlm/nn.hpp"

namespace nlm {

/// Raised when a loss or its gradient stops being finite.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
};

/// Shared trunk plus M auxiliary linear heads. Row m of `heads` is the
/// bias-augmented weight vector of head m (length L+1, bias first).
/// Flat layout is [theta, heads row by row].
struct LunaParams {
  FeatureMap trunk;
  Matrix heads;

  std::size_t head_count() const { return static_cast<std::size_t>(heads.rows()); }
  std::size_t parameter_count() const {
    return trunk.parameter_count() + static_cast<std::size_t>(heads.size());
  }
  Vector flatten() const;
  void assign(const Vector& flat);
};

/// Counts pairs whose cosine was undefined because a gradient vanished.
struct DiversityDiagnostics {
  std::size_t degenerate_pairs = 0;
};

/// Variance of the Gaussian input perturbations used for the
/// forward-difference input gradients, one entry per input dimension.
struct PerturbationConfig {
  Vector epsilon;
  std::uint64_t rng_seed = 0;
};

/// epsilon_d = (0.01 * range of column d)^2; zero-range columns use range 1.
Vector default_epsilon(const Matrix& x, double range_fraction = 0.01);

/// One perturbation per (point, dimension), N(0, epsilon_d), resampled while
/// |delta| < 1e-8.
Matrix sample_perturbations(const PerturbationConfig& cfg, Eigen::Index n_points);

/// Negative of the MAP objective for theta_Full = (trunk, head). gamma = 0
/// gives MLE. Gradient layout: [theta, head].
LossAndGradient map_loss(const FeatureMap& trunk, const Vector& head, const Matrix& x,
                         const Vector& y, double gamma, double sigma2);

/// -log evidence + gamma |theta|^2 with the gradient over theta.
LossAndGradient marginal_loss(const FeatureMap& trunk, const Matrix& x, const Vector& y,
                              double gamma, double sigma2, double alpha);

/// Average negative log-likelihood of the auxiliary heads plus gamma |Psi|^2.
LossAndGradient luna_fit_loss(const LunaParams& psi, const Matrix& x, const Vector& y,
                              double gamma, double sigma2);

/// (u.v)^2 / ((u.u)(v.v)); 0 when either norm is below 1e-12.
double cos_sim_sq(const Vector& u, const Vector& v, DiversityDiagnostics* diag = nullptr);

/// How per-point input gradients are combined before taking cosines.
/// PerPoint: one cosine per point, averaged over points. Stacked: one cosine
/// between the gradients of all batch points concatenated; this is the only
/// form with a non-trivial value when D = 1, where per-point gradients are
/// scalars and every pairwise cosine is +-1. Auto picks Stacked for D = 1
/// and PerPoint otherwise.
enum class DiversityAggregation { PerPoint, Stacked, Auto };

std::string to_string(DiversityAggregation a);
DiversityAggregation parse_aggregation(const std::string& name);
DiversityAggregation resolve_aggregation(DiversityAggregation a, Eigen::Index input_dim);

/// Forward-difference input gradient of head m at x, one perturbed dimension
/// at a time.
Vector fd_input_gradient(const LunaParams& psi, std::size_t head, const Vector& x,
                         const Vector& deltas);
Vector fd_input_gradient(const LunaParams& psi, std::size_t head, const Vector& x,
                         const PerturbationConfig& perturb);

/// Mean over batch points of sum_{i<j} CosSim^2 between the heads' input
/// gradients. `deltas` is (N x D).
LossAndGradient luna_diverse_loss(const LunaParams& psi, const Matrix& x, const Matrix& deltas,
                                  DiversityDiagnostics* diag = nullptr,
                                  DiversityAggregation agg = DiversityAggregation::PerPoint);
LossAndGradient luna_diverse_loss(const LunaParams& psi, const Matrix& x,
                                  const PerturbationConfig& perturb,
                                  DiversityDiagnostics* diag = nullptr,
                                  DiversityAggregation agg = DiversityAggregation::PerPoint);

/// Value only; skips the backward pass.
double luna_diverse_value(const LunaParams& psi, const Matrix& x, const Matrix& deltas,
                          DiversityDiagnostics* diag = nullptr,
                          DiversityAggregation agg = DiversityAggregation::PerPoint);

struct LunaLoss {
  double loss = 0.0;
  double fit = 0.0;
  double diverse = 0.0;
  Vector gradient;
};

/// luna_fit_loss + lambda_eff * luna_diverse_loss.
LunaLoss luna_loss(const LunaParams& psi, const Matrix& x, const Vector& y, double gamma,
                   double lambda_eff, double sigma2, const Matrix& deltas,
                   DiversityDiagnostics* diag = nullptr,
                   DiversityAggregation agg = DiversityAggregation::PerPoint);

enum class AnnealKind { Sqrt, Sigmoid, Tanh, Constant };

std::string to_string(AnnealKind k);
AnnealKind parse_anneal(const std::string& name);

struct AnnealSchedule {
  AnnealKind kind = AnnealKind::Constant;
  double scale = 1.0;  // C
  int horizon = 1;     // T
};

/// C = 2B / (M(M-1)).
double diversity_batch_scale(std::size_t batch_size, std::size_t head_count);

/// lambda * f_kind(t); t is clamped to [0, T].
double anneal_weight(const AnnealSchedule& sched, double t, double lambda);

}  // namespace nlm
