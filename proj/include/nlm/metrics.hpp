#pragma once

#include <stdexcept>
#include <string>

#include "nlm/blr.hpp"

namespace nlm {

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct MetricsReport {
  std::string split;
  double avg_ll = 0.0;
  double rmse = 0.0;
  double avg_epistemic_sd = 0.0;
};

/// Mean log density of y under the per-point Gaussians.
double avg_ll(const PredictiveDistribution& pred, const Vector& y);

double rmse(const PredictiveDistribution& pred, const Vector& y);

/// Mean over points of sqrt(epistemic variance). Negative variances down to
/// -1e-12 are clamped; anything below throws.
double epistemic_sd(const PredictiveDistribution& pred);

/// (eu_gap - eu_not_gap) / eu_gap.
double eurc(double eu_gap, double eu_not_gap);

MetricsReport evaluate(const PredictiveDistribution& pred, const Vector& y, std::string split);

}  // namespace nlm
