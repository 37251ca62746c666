#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nlm/gp.hpp"
#include "nlm/linalg.hpp"
#include "nlm/trainer.hpp"

namespace nlm {

struct Benchmark {
  std::string name;
  std::size_t dimension = 0;
  Vector lower;
  Vector upper;
  std::function<double(const Vector&)> evaluate;
  double optimum_value = 0.0;
  std::vector<Vector> optimum_locations;
};

double branin(const Vector& x);
double hartmann6(const Vector& x);

Benchmark branin_benchmark();
Benchmark hartmann6_benchmark();
/// "branin" or "hartmann6".
Benchmark benchmark_by_name(const std::string& name);

/// Minimization EI; variance 0 gives max(best - mean, 0).
double expected_improvement(double mean, double variance, double best);

enum class SurrogateKind { Gp, Luna, Map };

std::string to_string(SurrogateKind k);
SurrogateKind parse_surrogate(const std::string& name);

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::Gp;
  /// GP kernel in the unit box; length_scale is refit each step by evidence
  /// over `length_scale_grid` when that grid is non-empty.
  KernelConfig kernel{KernelKind::Matern52, 0.2, 1.0, 1e-6};
  std::vector<double> length_scale_grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2};
  /// Network surrogates; objective is overwritten from `kind`.
  TrainConfig train;

  SurrogateSpec();
};

struct BoRow {
  std::size_t step = 0;
  Vector x;
  double value = 0.0;
  double best = 0.0;
  double regret = 0.0;
  bool random = false;    // initial design or fallback
  std::string note;       // fallback reason, if any
};

struct BoTrace {
  std::string benchmark;
  std::vector<BoRow> rows;
  double final_regret() const { return rows.empty() ? 0.0 : rows.back().regret; }
};

struct BoOptions {
  std::size_t steps = 50;        // surrogate-driven evaluations after the initial design
  std::size_t init_count = 5;
  std::uint64_t seed = 0;
  std::size_t quasi_candidates = 2048;
  std::size_t local_candidates = 512;
  double local_scale = 0.05;     // perturbation sd in unit-box coordinates
};

BoTrace optimize(const SurrogateSpec& surrogate, const Benchmark& bench, const BoOptions& opts);

/// Van der Corput / Halton point `index` (1-based) in `dim` dimensions.
Vector halton(std::size_t index, std::size_t dim);

}  // namespace nlm
