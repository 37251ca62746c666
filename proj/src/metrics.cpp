#include "nlm/metrics.hpp"

#include <cmath>
#include <numbers>

namespace nlm {

namespace {

void check_lengths(const PredictiveDistribution& pred, const Vector& y) {
  if (pred.size() != y.size() || pred.total_var.size() != y.size()) {
    throw DimensionError("metric: predictive has " + std::to_string(pred.size()) +
                         " points but y has " + std::to_string(y.size()));
  }
}

}  // namespace

double avg_ll(const PredictiveDistribution& pred, const Vector& y) {
  check_lengths(pred, y);
  if (y.size() == 0) return 0.0;
  const Eigen::ArrayXd var = pred.total_var.array();
  const Eigen::ArrayXd resid = (y - pred.mean).array();
  const Eigen::ArrayXd ll =
      -0.5 * (2.0 * std::numbers::pi * var).log() - resid.square() / (2.0 * var);
  return ll.mean();
}

double rmse(const PredictiveDistribution& pred, const Vector& y) {
  check_lengths(pred, y);
  if (y.size() == 0) return 0.0;
  return std::sqrt((pred.mean - y).squaredNorm() / static_cast<double>(y.size()));
}

double epistemic_sd(const PredictiveDistribution& pred) {
  if (pred.epistemic_var.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.epistemic_var.size(); ++i) {
    double v = pred.epistemic_var[i];
    if (v < -1e-12) {
      throw UndefinedMetricError("epistemic variance " + std::to_string(v) + " at point " +
                                 std::to_string(i));
    }
    total += std::sqrt(std::max(v, 0.0));
  }
  return total / static_cast<double>(pred.epistemic_var.size());
}

double eurc(double eu_gap, double eu_not_gap) {
  if (!(eu_gap > 0.0)) throw UndefinedMetricError("eurc: gap epistemic uncertainty must be > 0");
  return (eu_gap - eu_not_gap) / eu_gap;
}

MetricsReport evaluate(const PredictiveDistribution& pred, const Vector& y, std::string split) {
  MetricsReport r;
  r.split = std::move(split);
  r.avg_ll = avg_ll(pred, y);
  r.rmse = rmse(pred, y);
  r.avg_epistemic_sd = epistemic_sd(pred);
  return r;
}

}  // namespace nlm
