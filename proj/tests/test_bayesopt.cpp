#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nlm/bayesopt.hpp"

using namespace nlm;

namespace {

// Second transcription, written from the usual textbook constants.
double branin_reference(double x1, double x2) {
  const double pi = 3.14159265358979323846;
  const double b = 5.1 / (4 * pi * pi), c = 5 / pi, t = 1 / (8 * pi);
  return std::pow(x2 - b * x1 * x1 + c * x1 - 6, 2) + 10 * (1 - t) * std::cos(x1) + 10;
}

double hartmann_reference(const double* x) {
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                 {0.05, 10, 17, 0.1, 8, 14},
                                 {3, 3.5, 1.7, 10, 17, 8},
                                 {17, 8, 0.05, 10, 0.1, 14}};
  static const double p[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                 {2329, 4135, 8307, 3736, 1004, 9991},
                                 {2348, 1451, 3522, 2883, 3047, 6650},
                                 {4047, 8828, 8732, 5743, 1091, 381}};
  double s = 0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0;
    for (int j = 0; j < 6; ++j) inner += a[i][j] * std::pow(x[j] - 1e-4 * p[i][j], 2);
    s += alpha[i] * std::exp(-inner);
  }
  return -s;
}

}  // namespace

TEST_CASE("benchmark point values") {
  CHECK(std::abs(branin(Vector((Vector(2) << -std::numbers::pi, 12.275).finished())) - 0.397887) < 1e-4);
  CHECK(std::abs(branin(Vector((Vector(2) << std::numbers::pi, 2.275).finished())) - 0.397887) < 1e-4);
  CHECK(branin(Vector::Zero(2)) == doctest::Approx(branin_reference(0, 0)).epsilon(1e-14));
  const Vector xstar = (Vector(6) << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573).finished();
  CHECK(std::abs(hartmann6(xstar) - (-3.32237)) < 1e-4);
  const double origin[6] = {0, 0, 0, 0, 0, 0};
  CHECK(hartmann6(Vector::Zero(6)) == doctest::Approx(hartmann_reference(origin)).epsilon(1e-14));
  std::mt19937_64 rng(70);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    Vector x(6);
    for (int j = 0; j < 6; ++j) x[j] = u(rng);
    CHECK(hartmann6(x) <= 0.0);
    CHECK(hartmann6(x) == doctest::Approx(hartmann_reference(x.data())).epsilon(1e-13));
  }
  const Benchmark b = benchmark_by_name("branin");
  for (const Vector& loc : b.optimum_locations) {
    CHECK(((loc.array() >= b.lower.array()) && (loc.array() <= b.upper.array())).all());
    CHECK(b.evaluate(loc) == doctest::Approx(b.optimum_value).epsilon(1e-5));
  }
  CHECK_THROWS(benchmark_by_name("rosenbrock"));
}

TEST_CASE("expected improvement") {
  CHECK(expected_improvement(2.0, 0.0, 1.0) == 0.0);
  CHECK(expected_improvement(0.5, 0.0, 1.0) == 0.5);
  CHECK(expected_improvement(1.0, 1.0, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK_THROWS(expected_improvement(0.0, -1.0, 0.0));
  std::mt19937_64 rng(71);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double cases[3][3] = {{0.3, 0.8, 0.5}, {-1.0, 2.0, -1.5}, {2.0, 0.5, 1.8}};
  for (const auto& c : cases) {
    const double mu = c[0], sd = c[1], best = c[2];
    double acc = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) acc += std::max(best - (mu + sd * normal(rng)), 0.0);
    const double mc = acc / n;
    CHECK(std::abs(expected_improvement(mu, sd * sd, best) - mc) / mc < 0.01);
  }
}

TEST_CASE("optimize with no surrogate steps is random search") {
  const Benchmark b = branin_benchmark();
  BoOptions o;
  o.steps = 0;
  o.init_count = 7;
  o.seed = 3;
  const BoTrace t = optimize(SurrogateSpec{}, b, o);
  REQUIRE(t.rows.size() == 7);
  for (const BoRow& r : t.rows) CHECK(r.random);
}

TEST_CASE("optimize is deterministic, monotone and stays in the box") {
  const Benchmark b = branin_benchmark();
  BoOptions o;
  o.steps = 8;
  o.seed = 5;
  o.quasi_candidates = 256;
  o.local_candidates = 64;
  for (SurrogateKind kind : {SurrogateKind::Gp, SurrogateKind::Map}) {
    SurrogateSpec s;
    s.kind = kind;
    s.train.epochs = 30;
    s.train.hidden = {10, 10};
    const BoTrace a = optimize(s, b, o), c = optimize(s, b, o);
    REQUIRE(a.rows.size() == 13);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].x == c.rows[i].x);
      CHECK(((a.rows[i].x.array() >= b.lower.array()) && (a.rows[i].x.array() <= b.upper.array())).all());
      CHECK(a.rows[i].regret >= 0.0);
      if (i > 0) CHECK(a.rows[i].best <= a.rows[i - 1].best);
      CHECK(a.rows[i].value == doctest::Approx(b.evaluate(a.rows[i].x)));
    }
    CHECK(!a.rows.back().random);
  }
}

TEST_CASE("halton points lie in the unit cube") {
  CHECK(halton(1, 2)[0] == 0.5);
  CHECK(halton(1, 2)[1] == doctest::Approx(1.0 / 3.0));
  CHECK(halton(3, 1)[0] == 0.75);
}
