#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "nlm/blr.hpp"
#include "nlm/metrics.hpp"
#include "support.hpp"

using namespace nlm;
using nlm::testing::random_matrix;

TEST_CASE("avg_ll matches numerical integration of the log density") {
  // log N(y; m, v) = log of the derivative of the Gaussian CDF; integrate the
  // density's derivative of log form by Simpson on d/dy log p = -(y-m)/v from m.
  std::mt19937_64 rng(40);
  PredictiveDistribution p;
  p.mean = random_matrix(5, 1, rng).col(0);
  p.total_var = (random_matrix(5, 1, rng).col(0).array().square() + 0.3).matrix();
  p.epistemic_var = Vector::Zero(5);
  const Vector y = random_matrix(5, 1, rng, 2.0).col(0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double m = p.mean[i], v = p.total_var[i];
    const double peak = -0.5 * std::log(2.0 * std::numbers::pi * v);
    // integral from m to y of -(t - m)/v dt, Simpson with 2000 panels.
    const int n = 2000;
    const double h = (y[i] - m) / n;
    double s = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double t = m + k * h;
      const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      s += w * (-(t - m) / v);
    }
    total += peak + s * h / 3.0;
  }
  CHECK(std::abs(avg_ll(p, y) - total / 5.0) < 1e-10);
  CHECK_THROWS(avg_ll(p, Vector::Zero(4)));
}

TEST_CASE("avg_ll is maximized at mean = y") {
  std::mt19937_64 rng(41);
  PredictiveDistribution p;
  const Vector y = random_matrix(6, 1, rng).col(0);
  p.mean = y;
  p.total_var = Vector::Constant(6, 1.3);
  p.epistemic_var = Vector::Zero(6);
  const double best = avg_ll(p, y);
  for (int k = 0; k < 20; ++k) {
    PredictiveDistribution q = p;
    q.mean += random_matrix(6, 1, rng, 0.1).col(0);
    CHECK(avg_ll(q, y) <= best);
  }
}

TEST_CASE("epistemic_sd clamps tiny negatives and rejects large ones") {
  PredictiveDistribution p;
  p.mean = Vector::Zero(2);
  p.total_var = Vector::Ones(2);
  p.epistemic_var = (Vector(2) << -1e-13, 4.0).finished();
  CHECK(epistemic_sd(p) == doctest::Approx(1.0));
  p.epistemic_var[0] = -1e-6;
  CHECK_THROWS(epistemic_sd(p));
}

TEST_CASE("epistemic_sd matches Monte Carlo posterior function samples") {
  std::mt19937_64 rng(42);
  const Matrix design = random_matrix(8, 3, rng);
  const Vector y = random_matrix(8, 1, rng).col(0);
  const BlrPosterior post = fit_posterior(design, y, 0.5, 1.0);
  const Matrix star = random_matrix(3, 3, rng);
  const double analytic = epistemic_sd(predict(post, star));
  const Matrix chol = post.covariance.llt().matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 400'000;
  Vector sum = Vector::Zero(3), sq = Vector::Zero(3), z(3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) z[j] = normal(rng);
    const Vector f = star * (post.mean + chol * z);
    sum += f;
    sq += f.cwiseProduct(f);
  }
  double mc = 0.0;
  for (int k = 0; k < 3; ++k) mc += std::sqrt(sq[k] / n - std::pow(sum[k] / n, 2));
  mc /= 3.0;
  CHECK(std::abs(mc - analytic) / analytic < 0.01);
}

TEST_CASE("eurc is scale invariant and evaluate fills a report") {
  for (double c : {0.1, 3.0, 1e4}) CHECK(eurc(c * 2.0, c * 0.7) == doctest::Approx(eurc(2.0, 0.7)));
  CHECK_THROWS_AS(eurc(-1.0, 0.5), UndefinedMetricError);
  PredictiveDistribution p;
  p.mean = Vector::Zero(2);
  p.total_var = Vector::Constant(2, 2.0);
  p.epistemic_var = Vector::Constant(2, 1.0);
  const MetricsReport r = evaluate(p, (Vector(2) << 3, 4).finished(), "gap");
  CHECK(r.split == "gap");
  CHECK(r.rmse == doctest::Approx(std::sqrt(12.5)));
  CHECK(r.avg_epistemic_sd == doctest::Approx(1.0));
}
