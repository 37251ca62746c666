#include "nlm/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "nlm/data.hpp"

namespace nlm {

double branin(const Vector& x) {
  if (x.size() != 2) throw DimensionError("branin: expects 2 inputs");
  constexpr double pi = std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi);
  const double c = 5.0 / pi;
  const double t = 1.0 / (8.0 * pi);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return u * u + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

double hartmann6(const Vector& x) {
  if (x.size() != 6) throw DimensionError("hartmann6: expects 6 inputs");
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                 {0.05, 10, 17, 0.1, 8, 14},
                                 {3, 3.5, 1.7, 10, 17, 8},
                                 {17, 8, 0.05, 10, 0.1, 14}};
  static const double p[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                 {2329, 4135, 8307, 3736, 1004, 9991},
                                 {2348, 1451, 3522, 2883, 3047, 6650},
                                 {4047, 8828, 8732, 5743, 1091, 381}};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double d = x[j] - 1e-4 * p[i][j];
      inner += a[i][j] * d * d;
    }
    total += alpha[i] * std::exp(-inner);
  }
  return -total;
}

Benchmark branin_benchmark() {
  Benchmark b;
  b.name = "branin";
  b.dimension = 2;
  b.lower = Vector{{-5.0, 0.0}};
  b.upper = Vector{{10.0, 15.0}};
  b.evaluate = branin;
  b.optimum_value = 0.397887;
  constexpr double pi = std::numbers::pi;
  b.optimum_locations = {Vector{{-pi, 12.275}}, Vector{{pi, 2.275}}, Vector{{9.42478, 2.475}}};
  return b;
}

Benchmark hartmann6_benchmark() {
  Benchmark b;
  b.name = "hartmann6";
  b.dimension = 6;
  b.lower = Vector::Zero(6);
  b.upper = Vector::Ones(6);
  b.evaluate = hartmann6;
  b.optimum_value = -3.32237;
  b.optimum_locations = {Vector{{0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573}}};
  return b;
}

Benchmark benchmark_by_name(const std::string& name) {
  if (name == "branin") return branin_benchmark();
  if (name == "hartmann6") return hartmann6_benchmark();
  throw std::invalid_argument("benchmark: unknown name '" + name +
                              "' (expected branin or hartmann6)");
}

double expected_improvement(double mean, double variance, double best) {
  if (variance < 0.0) throw std::invalid_argument("expected_improvement: negative variance");
  const double gap = best - mean;
  const double sd = std::sqrt(variance);
  if (sd <= 0.0) return std::max(gap, 0.0);
  const double z = gap / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(gap * cdf + sd * pdf, 0.0);
}

std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::Gp: return "gp";
    case SurrogateKind::Luna: return "luna";
    case SurrogateKind::Map: return "map";
  }
  return "gp";
}

SurrogateKind parse_surrogate(const std::string& name) {
  if (name == "gp") return SurrogateKind::Gp;
  if (name == "luna") return SurrogateKind::Luna;
  if (name == "map") return SurrogateKind::Map;
  throw std::invalid_argument("surrogate: unknown value '" + name +
                              "' (expected gp, luna or map)");
}

SurrogateSpec::SurrogateSpec() {
  train.hidden = {50, 50, 50};
  train.heads = 50;
  train.epochs = 500;
  train.sigma2 = 1e-2;
  train.alpha = 1.0;
  train.gamma = 1e-2;
  train.lambda = 10.0;
  train.learning_rate = 1e-2;
}

Vector halton(std::size_t index, std::size_t dim) {
  static const std::size_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > std::size(primes)) throw std::invalid_argument("halton: dimension too large");
  Vector out(static_cast<Eigen::Index>(dim));
  for (std::size_t d = 0; d < dim; ++d) {
    double f = 1.0, r = 0.0;
    for (std::size_t i = index; i > 0; i /= primes[d]) {
      f /= static_cast<double>(primes[d]);
      r += f * static_cast<double>(i % primes[d]);
    }
    out[static_cast<Eigen::Index>(d)] = r;
  }
  return out;
}

namespace {

Vector to_box(const Benchmark& b, const Vector& u) {
  return b.lower.array() + u.array() * (b.upper - b.lower).array();
}

/// Fitted surrogate predictions over a candidate set in the unit box.
PredictiveDistribution surrogate_predict(const SurrogateSpec& spec, const Matrix& u,
                                         const Vector& z, const Matrix& cand,
                                         std::uint64_t seed) {
  if (spec.kind == SurrogateKind::Gp) {
    KernelConfig k = spec.kernel;
    if (!spec.length_scale_grid.empty()) {
      double best = -std::numeric_limits<double>::infinity();
      for (double ls : spec.length_scale_grid) {
        KernelConfig trial = k;
        trial.length_scale = ls;
        const double ev = gp_log_marginal_likelihood(trial, u, z);
        if (ev > best) {
          best = ev;
          k.length_scale = ls;
        }
      }
    }
    return gp_fit_predict(k, u, z, cand);
  }
  GapDataset data;
  data.name = "bayesopt";
  data.train.x = u;
  data.train.y = z;
  data.input_dim = u.cols();
  data.val.x = Matrix(0, u.cols());
  TrainConfig cfg = spec.train;
  cfg.objective = spec.kind == SurrogateKind::Luna ? Objective::Luna : Objective::Map;
  cfg.seed = seed;
  return predict(train(cfg, data), cand);
}

}  // namespace

BoTrace optimize(const SurrogateSpec& surrogate, const Benchmark& bench, const BoOptions& opts) {
  if (opts.init_count + opts.steps < 1) throw std::invalid_argument("bayesopt: budget must be >= 1");
  if (opts.init_count < 1) throw std::invalid_argument("bayesopt: init_count must be >= 1");
  const auto dim = static_cast<Eigen::Index>(bench.dimension);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, opts.local_scale);

  BoTrace trace;
  trace.benchmark = bench.name;
  std::vector<Vector> us;
  std::vector<double> fs;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;

  auto random_point = [&] {
    Vector u(dim);
    for (Eigen::Index d = 0; d < dim; ++d) u[d] = unif(rng);
    return u;
  };
  auto record = [&](const Vector& u, bool random, std::string note) {
    const Vector x = to_box(bench, u);
    const double f = bench.evaluate(x);
    if (f < best) {
      best = f;
      best_index = us.size();
    }
    us.push_back(u);
    fs.push_back(f);
    trace.rows.push_back({trace.rows.size() + 1, x, f, best,
                          std::abs(best - bench.optimum_value), random, std::move(note)});
  };

  for (std::size_t i = 0; i < opts.init_count; ++i) record(random_point(), true, "init");

  const std::size_t n_cand = opts.quasi_candidates + opts.local_candidates;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const auto n = static_cast<Eigen::Index>(us.size());
    Matrix u(n, dim);
    Vector f(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      u.row(i) = us[static_cast<std::size_t>(i)].transpose();
      f[i] = fs[static_cast<std::size_t>(i)];
    }
    const double mu = f.mean();
    double sd = std::sqrt((f.array() - mu).square().sum() / static_cast<double>(n));
    if (!(sd > 1e-12)) sd = 1.0;
    const Vector z = (f.array() - mu) / sd;

    // Halton points under a random shift, then Gaussian moves around the incumbent.
    Matrix cand(static_cast<Eigen::Index>(n_cand), dim);
    const Vector shift = random_point();
    const std::size_t offset = 1 + step * opts.quasi_candidates;
    for (std::size_t i = 0; i < opts.quasi_candidates; ++i) {
      const Vector h = halton(offset + i, bench.dimension) + shift;
      cand.row(static_cast<Eigen::Index>(i)) = h.unaryExpr([](double v) { return v - std::floor(v); }).transpose();
    }
    const Vector& inc = us[best_index];
    for (std::size_t i = 0; i < opts.local_candidates; ++i) {
      Vector p(dim);
      for (Eigen::Index d = 0; d < dim; ++d) p[d] = std::clamp(inc[d] + gauss(rng), 0.0, 1.0);
      cand.row(static_cast<Eigen::Index>(opts.quasi_candidates + i)) = p.transpose();
    }
    const Vector fallback = random_point();

    try {
      const PredictiveDistribution pred =
          surrogate_predict(surrogate, u, z, cand, opts.seed * 7919 + step);
      const double z_best = z.minCoeff();
      Eigen::Index arg = -1;
      double best_ei = -1.0;
      for (Eigen::Index i = 0; i < cand.rows(); ++i) {
        const double ei = expected_improvement(pred.mean[i], std::max(pred.total_var[i], 0.0), z_best);
        if (std::isfinite(ei) && ei > best_ei) {
          best_ei = ei;
          arg = i;
        }
      }
      if (arg < 0) throw std::runtime_error("no finite acquisition value");
      record(cand.row(arg).transpose(), false, "");
    } catch (const std::exception& e) {
      record(fallback, true, std::string("fallback: ") + e.what());
    }
  }
  return trace;
}

}  // namespace nlm
