#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlm/blr.hpp"
#include "nlm/data.hpp"
#include "nlm/nn.hpp"
#include "nlm/objectives.hpp"

namespace nlm {

enum class Objective { Mle, Map, Marginal, Luna };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(Objective o);
Objective parse_objective(const std::string& name);
std::string to_string(OptimizerKind o);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  Objective objective = Objective::Luna;
  std::vector<std::size_t> hidden = {50, 50};  // last entry is L
  Activation activation = Activation::ReLU;
  int epochs = 5000;
  std::size_t batch_size = 0;  // 0 means full batch
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double gamma = 0.01;
  double lambda = 100.0;
  double alpha = 1.0;
  double sigma2 = 9.0;
  std::size_t heads = 20;
  AnnealKind anneal = AnnealKind::Sqrt;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  double perturb_fraction = 0.01;  // epsilon = (fraction * data range)^2
  DiversityAggregation aggregation = DiversityAggregation::Auto;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

std::string describe(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double fit_loss = 0.0;
  double diverse_loss = 0.0;
  double effective_lambda = 0.0;
};

struct TrainedModel {
  FeatureMap features;
  BlrPosterior posterior;
  std::vector<EpochRecord> history;
  TrainConfig config;
  /// Diversity over the training inputs divided by C(M, 2); 0 without heads.
  double diversity_score = 0.0;
  /// Auxiliary heads kept only for selection-time diversity scoring.
  std::optional<Matrix> aux_heads;
  Vector epsilon;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, const std::string& what);
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

TrainedModel train(const TrainConfig& config, const GapDataset& data);

struct RestartFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct RestartResult {
  std::vector<TrainedModel> models;
  std::vector<RestartFailure> failures;
};

/// R trainings with seeds seed, seed+1, ..., seed+R-1.
RestartResult random_restarts(const TrainConfig& config, const GapDataset& data, std::size_t r);

PredictiveDistribution predict(const TrainedModel& model, const Matrix& x);

/// Normalized diversity of the model's auxiliary heads on `x` (0 without heads).
double diversity_score(const TrainedModel& model, const Matrix& x);

struct CandidateScore {
  std::size_t index = 0;
  double val_ll = 0.0;
  double diversity = 0.0;
  bool retained = false;
};

struct Selection {
  std::size_t index = 0;
  std::vector<CandidateScore> scores;
};

/// Keeps the top ceil(10%) candidates by validation log-likelihood and
/// returns the one with the lowest normalized diversity; ties go to higher
/// validation LL, then to the lower index.
Selection select_model(const std::vector<TrainedModel>& candidates, const Matrix& val_x,
                       const Vector& val_y);

struct GridPoint {
  double gamma = 0.0;
  double lambda = 0.0;
  double alpha = 1.0;
};

/// Cartesian product of the three axes.
std::vector<GridPoint> make_grid(const std::vector<double>& gammas,
                                 const std::vector<double>& lambdas,
                                 const std::vector<double>& alphas);

struct SearchEntry {
  GridPoint point;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string message;
  std::size_t candidate = 0;  // index into candidates when not failed
};

struct SearchResult {
  TrainedModel best;
  GridPoint best_point;
  Selection selection;
  std::vector<TrainedModel> candidates;
  std::vector<SearchEntry> log;
};

/// Trains every grid point with config.restarts restarts and applies
/// select_model over all resulting candidates jointly.
SearchResult hyper_search(const std::vector<GridPoint>& grid, const TrainConfig& config,
                          const GapDataset& data);

/// Freezes the feature map and refits the Bayesian head on new data.
TrainedModel refit_head(const TrainedModel& model, const Matrix& x, const Vector& y);

}  // namespace nlm
