#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/QR>

#include "nlm/blr.hpp"
#include "nlm/data.hpp"
#include "nlm/objectives.hpp"
#include "support.hpp"

using namespace nlm;
using nlm::testing::central_difference;
using nlm::testing::random_luna;
using nlm::testing::random_matrix;
using nlm::testing::random_net;
using nlm::testing::relative_error;

namespace {

FeatureMap with_theta(const FeatureMap& net, const Vector& theta) {
  FeatureMap out = net;
  out.assign(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  return out;
}

LunaParams with_flat(const LunaParams& psi, const Vector& flat) {
  LunaParams out = psi;
  out.assign(flat);
  return out;
}

}  // namespace

TEST_CASE("map_loss gradient matches finite differences") {
  std::mt19937_64 rng(30);
  for (Activation act : {Activation::ReLU, Activation::Tanh}) {
    const FeatureMap trunk = random_net({2, 6, 4}, act, rng);
    const Vector head = random_matrix(5, 1, rng).col(0);
    const Matrix x = random_matrix(9, 2, rng);
    const Vector y = random_matrix(9, 1, rng).col(0);
    const auto p = static_cast<Eigen::Index>(trunk.parameter_count());
    Vector flat(p + head.size());
    flat << trunk.flatten(), head;
    auto f = [&](const Vector& v) {
      return map_loss(with_theta(trunk, v.head(p)), v.tail(head.size()), x, y, 0.3, 1.4).loss;
    };
    const Vector analytic = map_loss(trunk, head, x, y, 0.3, 1.4).gradient;
    CHECK(relative_error(analytic, central_difference(f, flat, 1e-5)) < 1e-4);
  }
}

TEST_CASE("marginal_loss gradient on a 2-feature 4-point problem") {
  std::mt19937_64 rng(31);
  for (Activation act : {Activation::ReLU, Activation::Tanh}) {
    const FeatureMap trunk = random_net({1, 3, 2}, act, rng);
    const Matrix x = random_matrix(4, 1, rng);
    const Vector y = random_matrix(4, 1, rng).col(0);
    auto f = [&](const Vector& v) {
      return marginal_loss(with_theta(trunk, v), x, y, 0.1, 0.8, 1.3).loss;
    };
    const Vector analytic = marginal_loss(trunk, x, y, 0.1, 0.8, 1.3).gradient;
    CHECK(relative_error(analytic, central_difference(f, trunk.flatten(), 1e-5)) < 1e-3);
  }
}

TEST_CASE("marginal_loss climbs by rank * log 10 per decade of last-layer scaling") {
  // Once alpha c^2 |Phi|^2 dominates sigma2, each of the r scaled feature
  // directions costs log c of evidence; the bias column is not scaled.
  const GapDataset data = gen_cubic_gap(100, 100, 3.0, 0);
  std::mt19937_64 rng(32);
  const FeatureMap net = FeatureMap::initialize({1, 50, 20}, Activation::ReLU, rng);
  auto loss = [&](double c) {
    return marginal_loss(scale_last_layer(net, c), data.train.x, data.train.y, 0.0, 9.0, 1.0).loss;
  };
  const auto rank = Eigen::ColPivHouseholderQR<Matrix>(features(net, data.train.x)).rank();
  CHECK(loss(10.0) < loss(1.0));
  CHECK(loss(1e6) - loss(1e5) ==
        doctest::Approx(static_cast<double>(rank) * std::log(10.0)).epsilon(1e-3));
}

TEST_CASE("luna_fit_loss gradient matches finite differences") {
  std::mt19937_64 rng(33);
  const LunaParams psi = random_luna({2, 5, 3}, 4, Activation::Tanh, rng);
  const Matrix x = random_matrix(7, 2, rng);
  const Vector y = random_matrix(7, 1, rng).col(0);
  auto f = [&](const Vector& v) { return luna_fit_loss(with_flat(psi, v), x, y, 0.2, 0.9).loss; };
  const Vector analytic = luna_fit_loss(psi, x, y, 0.2, 0.9).gradient;
  CHECK(relative_error(analytic, central_difference(f, psi.flatten(), 1e-5)) < 1e-4);
}

TEST_CASE("cos_sim_sq degenerate vectors") {
  DiversityDiagnostics diag;
  CHECK(cos_sim_sq(Vector::Zero(2), (Vector(2) << 1, 0).finished(), &diag) == 0.0);
  CHECK(diag.degenerate_pairs == 1);
  CHECK_THROWS(cos_sim_sq(Vector::Ones(2), Vector::Ones(3)));
}

TEST_CASE("fd_input_gradient matches the analytic input gradient of a smooth net") {
  std::mt19937_64 rng(34);
  const LunaParams psi = random_luna({3, 6, 4}, 2, Activation::Tanh, rng);
  const Matrix x = random_matrix(1, 3, rng);
  PerturbationConfig perturb{Vector::Constant(3, 1e-6), 5};
  for (std::size_t m = 0; m < 2; ++m) {
    const auto row = static_cast<Eigen::Index>(m);
    const Matrix cot = psi.heads.row(row).tail(4);
    const Vector analytic =
        backward_full(psi.trunk, forward(psi.trunk, x).tape, cot).input_gradient.row(0).transpose();
    const Vector fd = fd_input_gradient(psi, m, x.row(0).transpose(), perturb);
    CHECK(relative_error(fd, analytic) < 1e-3);
  }
}

TEST_CASE("sample_perturbations is seeded and never near zero") {
  PerturbationConfig cfg{(Vector(2) << 1e-4, 4.0).finished(), 77};
  const Matrix a = sample_perturbations(cfg, 5000);
  CHECK(a == sample_perturbations(cfg, 5000));
  CHECK(a.cwiseAbs().minCoeff() >= 1e-8);
  CHECK(std::abs(a.col(1).array().square().mean() - 4.0) < 0.3);
  const Matrix x = (Matrix(3, 2) << 0, 5, 2, 5, 10, 5).finished();
  const Vector eps = default_epsilon(x);
  CHECK(eps[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(eps[1] == doctest::Approx(1e-4).epsilon(1e-12));
}

TEST_CASE("luna_diverse_loss gradient matches finite differences") {
  std::mt19937_64 rng(35);
  for (auto agg : {DiversityAggregation::PerPoint, DiversityAggregation::Stacked}) {
    for (std::size_t d : {1u, 3u}) {
      const LunaParams psi = random_luna({d, 5, 4}, 3, Activation::Tanh, rng);
      const Matrix x = random_matrix(6, static_cast<Eigen::Index>(d), rng);
      const Matrix deltas = sample_perturbations({Vector::Constant(static_cast<Eigen::Index>(d), 1e-4), 3}, 6);
      auto f = [&](const Vector& v) {
        return luna_diverse_loss(with_flat(psi, v), x, deltas, nullptr, agg).loss;
      };
      const LossAndGradient lg = luna_diverse_loss(psi, x, deltas, nullptr, agg);
      INFO("aggregation " << to_string(agg) << " D=" << d);
      CHECK(lg.loss == doctest::Approx(luna_diverse_value(psi, x, deltas, nullptr, agg)));
      CHECK(relative_error(lg.gradient, central_difference(f, psi.flatten(), 1e-6)) < 1e-3);
    }
  }
}

TEST_CASE("one-dimensional pointwise diversity is identically one per pair") {
  std::mt19937_64 rng(36);
  const LunaParams psi = random_luna({1, 8, 6}, 3, Activation::ReLU, rng);
  const Matrix x = random_matrix(10, 1, rng);
  const Matrix deltas = Matrix::Constant(10, 1, 0.01);
  const LossAndGradient pointwise = luna_diverse_loss(psi, x, deltas);
  CHECK(pointwise.loss == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(pointwise.gradient.norm() < 1e-9);
  const double stacked =
      luna_diverse_loss(psi, x, deltas, nullptr, DiversityAggregation::Stacked).loss;
  CHECK(stacked < 3.0);
  CHECK(resolve_aggregation(DiversityAggregation::Auto, 1) == DiversityAggregation::Stacked);
  CHECK(resolve_aggregation(DiversityAggregation::Auto, 4) == DiversityAggregation::PerPoint);
}

TEST_CASE("luna_diverse_loss invariances") {
  std::mt19937_64 rng(37);
  const LunaParams psi = random_luna({2, 6, 5}, 4, Activation::Tanh, rng);
  const Matrix x = random_matrix(8, 2, rng);
  const Matrix deltas = Matrix::Constant(8, 2, 1e-3);
  LunaParams scaled = psi;
  scaled.heads.row(2) *= 7.0;
  CHECK(luna_diverse_loss(scaled, x, deltas).loss ==
        doctest::Approx(luna_diverse_loss(psi, x, deltas).loss).epsilon(1e-9));

  for (int trial = 0; trial < 3; ++trial) {
    LunaParams twins = random_luna({2, 6, 5}, 1, Activation::Tanh, rng);
    twins.heads = twins.heads.replicate(2, 1).eval();
    CHECK(luna_diverse_loss(twins, x, deltas).loss == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("luna_loss end-to-end gradient") {
  std::mt19937_64 rng(38);
  const LunaParams psi = random_luna({2, 5, 4}, 3, Activation::Tanh, rng);
  const Matrix x = random_matrix(6, 2, rng);
  const Vector y = random_matrix(6, 1, rng).col(0);
  const Matrix deltas = Matrix::Constant(6, 2, 1e-3);
  auto f = [&](const Vector& v) { return luna_loss(with_flat(psi, v), x, y, 0.1, 2.5, 1.2, deltas).loss; };
  const LunaLoss l = luna_loss(psi, x, y, 0.1, 2.5, 1.2, deltas);
  CHECK(l.loss == doctest::Approx(l.fit + 2.5 * l.diverse).epsilon(1e-14));
  CHECK(relative_error(l.gradient, central_difference(f, psi.flatten(), 1e-6)) < 1e-3);
}

TEST_CASE("non-finite inputs are reported") {
  std::mt19937_64 rng(39);
  const LunaParams psi = random_luna({1, 4, 3}, 2, Activation::Tanh, rng);
  Matrix x = random_matrix(3, 1, rng);
  Vector y = Vector::Ones(3);
  y[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(luna_fit_loss(psi, x, y, 0.0, 1.0), NonFiniteError);
  CHECK_THROWS_AS(map_loss(psi.trunk, psi.heads.row(0).transpose(), x, y, 0.0, 1.0),
                  NonFiniteError);
}

TEST_CASE("anneal schedules and the batch scale") {
  CHECK(diversity_batch_scale(100, 20) == doctest::Approx(200.0 / 380.0));
  AnnealSchedule s{AnnealKind::Sigmoid, 2.0, 100};
  CHECK(anneal_weight(s, 50, 1.5) == doctest::Approx(1.5));
  CHECK(anneal_weight(s, 100, 1.0) == doctest::Approx(2.0 / (1.0 + std::exp(-3.0))));
  s.kind = AnnealKind::Constant;
  CHECK(anneal_weight(s, 0, 3.0) == 6.0);
  s.kind = AnnealKind::Sqrt;
  CHECK(anneal_weight(s, 0, 3.0) == 0.0);
  CHECK(anneal_weight(s, 400, 3.0) == anneal_weight(s, 100, 3.0));
  CHECK(parse_anneal("tanh") == AnnealKind::Tanh);
  CHECK_THROWS(parse_anneal("cosine"));
}
