#include "nlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "nlm/metrics.hpp"

namespace nlm {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Mle: return "mle";
    case Objective::Map: return "map";
    case Objective::Marginal: return "marginal";
    case Objective::Luna: return "luna";
  }
  return "map";
}

Objective parse_objective(const std::string& name) {
  if (name == "mle") return Objective::Mle;
  if (name == "map") return Objective::Map;
  if (name == "marginal") return Objective::Marginal;
  if (name == "luna") return Objective::Luna;
  throw std::invalid_argument("objective: unknown value '" + name +
                              "' (expected mle, map, marginal or luna)");
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("optimizer: unknown value '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (hidden.empty()) fail("hidden", "need at least one layer");
  for (std::size_t w : hidden)
    if (w == 0) fail("hidden", "layer widths must be positive");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (gamma < 0.0) fail("gamma", "must be >= 0");
  if (lambda < 0.0) fail("lambda", "must be >= 0");
  if (!(alpha > 0.0)) fail("alpha", "must be > 0");
  if (!(sigma2 > 0.0)) fail("sigma2", "must be > 0");
  if (objective == Objective::Luna && heads < 2) fail("heads", "luna needs at least 2 heads");
  if (restarts < 1) fail("restarts", "must be >= 1");
  if (!(perturb_fraction > 0.0)) fail("perturb_fraction", "must be > 0");
}

std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "objective=" << to_string(c.objective) << " hidden=";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << " activation=" << to_string(c.activation) << " epochs=" << c.epochs
     << " batch_size=" << c.batch_size << " learning_rate=" << c.learning_rate
     << " optimizer=" << to_string(c.optimizer) << " gamma=" << c.gamma << " lambda=" << c.lambda
     << " alpha=" << c.alpha << " sigma2=" << c.sigma2 << " heads=" << c.heads
     << " anneal=" << to_string(c.anneal) << " restarts=" << c.restarts << " seed=" << c.seed
     << " perturb_fraction=" << c.perturb_fraction << " aggregation=" << to_string(c.aggregation);
  return os.str();
}

TrainingError::TrainingError(int epoch, const std::string& what)
    : std::runtime_error("training failed at epoch " + std::to_string(epoch) + ": " + what),
      epoch_(epoch) {}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, Eigen::Index n)
      : kind_(kind), lr_(lr), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Vector& params, const Vector& grad) {
    if (kind_ == OptimizerKind::Sgd) {
      params -= lr_ * grad;
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  OptimizerKind kind_;
  double lr_;
  Vector m_, v_;
  int t_ = 0;
};

Vector init_head(std::size_t features, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(features + 1));
  std::uniform_real_distribution<double> u(-bound, bound);
  Vector h(static_cast<Eigen::Index>(features + 1));
  h[0] = 0.0;
  for (Eigen::Index i = 1; i < h.size(); ++i) h[i] = u(rng);
  return h;
}

Matrix rows_of(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin,
               std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), x.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vector rows_of(const Vector& y, const std::vector<std::size_t>& idx, std::size_t begin,
               std::size_t end) {
  Vector out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i)
    out[static_cast<Eigen::Index>(i - begin)] = y[static_cast<Eigen::Index>(idx[i])];
  return out;
}

// Fixed perturbations used whenever a diversity score is reported.
Matrix scoring_deltas(const Vector& epsilon, Eigen::Index n) {
  return sample_perturbations(PerturbationConfig{epsilon, 0x5eed5eedULL}, n);
}

double normalized_diversity(const LunaParams& psi, const Matrix& x, const Vector& epsilon,
                            DiversityAggregation agg) {
  const auto m = static_cast<double>(psi.head_count());
  const double pairs = m * (m - 1.0) / 2.0;
  return luna_diverse_value(psi, x, scoring_deltas(epsilon, x.rows()), nullptr, agg) / pairs;
}

}  // namespace

TrainedModel train(const TrainConfig& config, const GapDataset& data) {
  config.validate();
  const Matrix& x = data.train.x;
  const Vector& y = data.train.y;
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw std::invalid_argument("train: empty training split");

  std::mt19937_64 init_rng(splitmix64(config.seed));
  std::mt19937_64 shuffle_rng(splitmix64(config.seed ^ 0xa5a5a5a5ULL));

  std::vector<std::size_t> widths{static_cast<std::size_t>(x.cols())};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  FeatureMap trunk = FeatureMap::initialize(widths, config.activation, init_rng);
  const std::size_t feat = trunk.feature_dim();

  const bool luna = config.objective == Objective::Luna;
  const bool marginal = config.objective == Objective::Marginal;
  const double gamma = config.objective == Objective::Mle ? 0.0 : config.gamma;

  LunaParams psi{trunk, Matrix()};
  const std::size_t n_heads = luna ? config.heads : (marginal ? 0 : 1);
  psi.heads.resize(static_cast<Eigen::Index>(n_heads), static_cast<Eigen::Index>(feat + 1));
  for (std::size_t m = 0; m < n_heads; ++m)
    psi.heads.row(static_cast<Eigen::Index>(m)) = init_head(feat, init_rng).transpose();

  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  const Vector epsilon = default_epsilon(x, config.perturb_fraction);
  AnnealSchedule schedule{config.anneal, luna ? diversity_batch_scale(batch, config.heads) : 0.0,
                          std::max(config.epochs, 1)};

  Vector flat = psi.flatten();
  Optimizer opt(config.optimizer, config.learning_rate, flat.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainedModel model;
  model.config = config;
  model.epsilon = epsilon;
  model.history.reserve(static_cast<std::size_t>(config.epochs));
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lambda_eff = luna ? anneal_weight(schedule, epoch, config.lambda) : 0.0;
    EpochRecord rec{epoch, 0.0, 0.0, lambda_eff};
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(begin + batch, n);
      const Matrix xb = batch < n ? rows_of(x, order, begin, end) : x;
      const Vector yb = batch < n ? rows_of(y, order, begin, end) : y;
      // The penalty is shared by all batches of an epoch.
      const double gamma_b = gamma * static_cast<double>(end - begin) / static_cast<double>(n);
      try {
        Vector grad;
        if (luna) {
          const Matrix deltas = sample_perturbations(
              PerturbationConfig{epsilon, splitmix64(config.seed * 0x100000001b3ULL + step)},
              xb.rows());
          const LunaLoss l = luna_loss(psi, xb, yb, gamma_b, lambda_eff, config.sigma2, deltas, nullptr,
                                       config.aggregation);
          rec.fit_loss += l.fit;
          rec.diverse_loss += l.diverse;
          grad = l.gradient;
        } else if (marginal) {
          const LossAndGradient l =
              marginal_loss(psi.trunk, xb, yb, gamma_b, config.sigma2, config.alpha);
          rec.fit_loss += l.loss;
          grad = l.gradient;
        } else {
          const LossAndGradient l =
              map_loss(psi.trunk, psi.heads.row(0).transpose(), xb, yb, gamma_b, config.sigma2);
          rec.fit_loss += l.loss;
          grad = l.gradient;
        }
        opt.step(flat, grad);
        if (!flat.allFinite()) throw NonFiniteError("parameters became non-finite");
        psi.assign(flat);
      } catch (const NonFiniteError& e) {
        throw TrainingError(epoch, e.what());
      } catch (const DecompositionError& e) {
        throw TrainingError(epoch, e.what());
      }
      ++step;
      ++batches;
    }
    rec.fit_loss /= static_cast<double>(batches);
    rec.diverse_loss /= static_cast<double>(batches);
    model.history.push_back(rec);
  }

  // Step II: drop the auxiliary heads and fit the Bayesian last layer.
  model.features = psi.trunk;
  model.posterior =
      fit_posterior(design_matrix(psi.trunk, x), y, config.sigma2, config.alpha);
  if (luna) {
    model.aux_heads = psi.heads;
    model.diversity_score = normalized_diversity(psi, x, epsilon, config.aggregation);
  }
  return model;
}

RestartResult random_restarts(const TrainConfig& config, const GapDataset& data, std::size_t r) {
  if (r < 1) throw std::invalid_argument("restarts: must be >= 1");
  RestartResult out;
  for (std::size_t i = 0; i < r; ++i) {
    TrainConfig c = config;
    c.seed = config.seed + i;
    try {
      out.models.push_back(train(c, data));
    } catch (const TrainingError& e) {
      out.failures.push_back({c.seed, e.what()});
    } catch (const DecompositionError& e) {
      out.failures.push_back({c.seed, e.what()});
    }
  }
  if (out.models.empty()) {
    throw std::runtime_error("all " + std::to_string(r) + " restarts failed; first: " +
                             out.failures.front().message);
  }
  return out;
}

PredictiveDistribution predict(const TrainedModel& model, const Matrix& x) {
  return predict(model.posterior, design_matrix(model.features, x));
}

double diversity_score(const TrainedModel& model, const Matrix& x) {
  if (!model.aux_heads || model.aux_heads->rows() < 2 || x.rows() == 0) return 0.0;
  const LunaParams psi{model.features, *model.aux_heads};
  return normalized_diversity(psi, x, model.epsilon, model.config.aggregation);
}

Selection select_model(const std::vector<TrainedModel>& candidates, const Matrix& val_x,
                       const Vector& val_y) {
  if (candidates.empty()) throw std::invalid_argument("select_model: no candidates");
  Selection sel;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateScore s;
    s.index = i;
    s.val_ll = val_x.rows() > 0 ? avg_ll(predict(candidates[i], val_x), val_y) : 0.0;
    if (!std::isfinite(s.val_ll)) s.val_ll = -std::numeric_limits<double>::infinity();
    s.diversity = diversity_score(candidates[i], val_x);
    sel.scores.push_back(s);
  }

  std::vector<std::size_t> by_ll(candidates.size());
  std::iota(by_ll.begin(), by_ll.end(), 0);
  std::stable_sort(by_ll.begin(), by_ll.end(), [&](std::size_t a, std::size_t b) {
    return sel.scores[a].val_ll > sel.scores[b].val_ll;
  });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(candidates.size()) - 1e-9)));
  for (std::size_t k = 0; k < keep; ++k) sel.scores[by_ll[k]].retained = true;

  std::size_t best = by_ll.front();
  for (std::size_t k = 0; k < keep; ++k) {
    const std::size_t i = by_ll[k];
    const CandidateScore& a = sel.scores[i];
    const CandidateScore& b = sel.scores[best];
    if (a.diversity < b.diversity ||
        (a.diversity == b.diversity &&
         (a.val_ll > b.val_ll || (a.val_ll == b.val_ll && i < best)))) {
      best = i;
    }
  }
  sel.index = best;
  return sel;
}

std::vector<GridPoint> make_grid(const std::vector<double>& gammas,
                                 const std::vector<double>& lambdas,
                                 const std::vector<double>& alphas) {
  std::vector<GridPoint> grid;
  for (double g : gammas)
    for (double l : lambdas)
      for (double a : alphas) grid.push_back({g, l, a});
  return grid;
}

SearchResult hyper_search(const std::vector<GridPoint>& grid, const TrainConfig& config,
                          const GapDataset& data) {
  if (grid.empty()) throw std::invalid_argument("hyper_search: empty grid");
  SearchResult result;
  std::vector<GridPoint> candidate_points;
  for (const GridPoint& p : grid) {
    for (std::size_t r = 0; r < config.restarts; ++r) {
      TrainConfig c = config;
      c.gamma = p.gamma;
      c.lambda = p.lambda;
      c.alpha = p.alpha;
      c.seed = config.seed + r;
      SearchEntry entry{p, c.seed, false, "", 0};
      try {
        result.candidates.push_back(train(c, data));
        entry.candidate = result.candidates.size() - 1;
        candidate_points.push_back(p);
      } catch (const std::runtime_error& e) {
        entry.failed = true;
        entry.message = e.what();
      }
      result.log.push_back(entry);
    }
  }
  if (result.candidates.empty()) throw std::runtime_error("hyper_search: every grid point failed");
  result.selection = select_model(result.candidates, data.val.x, data.val.y);
  result.best = result.candidates[result.selection.index];
  result.best_point = candidate_points[result.selection.index];
  return result;
}

TrainedModel refit_head(const TrainedModel& model, const Matrix& x, const Vector& y) {
  TrainedModel out = model;
  out.posterior = fit_posterior(design_matrix(model.features, x), y, model.config.sigma2,
                                model.config.alpha);
  return out;
}

}  // namespace nlm
