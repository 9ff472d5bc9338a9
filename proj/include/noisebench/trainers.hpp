#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisebench/dataset.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/model.hpp"

namespace noisebench {

struct HistoryPoint {
  std::size_t step = 0;
  /// Mean training batch loss since the previous evaluation.
  double train_batch_loss = 0.0;
  double val_accuracy = 0.0;
  /// Kept fraction (co-teaching) or consensus fraction (CETA).
  std::optional<double> selected_fraction;
};

struct TrainHistory {
  std::vector<HistoryPoint> points;
  std::size_t steps_run = 0;
  bool stopped_early = false;

  /// step,train_batch_loss,val_accuracy,selected_fraction
  std::string to_csv() const;
};

/// Best-so-far tracking for early stopping on validation accuracy.
struct EarlyStopState {
  double best_val_accuracy = -1.0;
  std::size_t best_step = 0;
  std::size_t evals_since_improvement = 0;

  /// Records one evaluation; returns true when it is a strict improvement.
  bool observe(double val_accuracy, std::size_t step);
  bool should_stop(std::size_t patience) const { return evals_since_improvement >= patience; }
};

/// Seeded minibatch stream: reshuffles every epoch and drops the remainder.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  const std::vector<std::size_t>& next();
  std::size_t batch_size() const { return batch_size_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> batch_;
  std::size_t batch_size_;
  std::size_t steps_per_epoch_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct VanillaResult {
  ModelParams params;
  TrainHistory history;
  double best_val_accuracy = 0.0;
};

/// Called after every SGD step with the step number, the updated parameters
/// and the batch loss.
using StepObserver = std::function<void(std::size_t, const ModelParams&, double)>;

VanillaResult train_vanilla(const FeaturizedData& train, const FeaturizedData& val,
                            std::size_t num_labels, std::size_t hash_dim, const TrainConfig& cfg,
                            const StepObserver& observer = {});
VanillaResult train_vanilla(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                            const Featurizer& featurizer);

struct CoteachSchedule {
  /// Maximum forget rate.
  double tau = 0.2;
  std::size_t ramp_steps = 0;

  void validate() const;
  double forget_rate(std::size_t step) const;
  /// ceil((1 - forget_rate(step)) * batch)
  std::size_t kept_count(std::size_t batch, std::size_t step) const;
};

/// Default schedule: tau = the estimated noise level when one is known, else
/// 0.2; ramp over 20% of the step budget.
CoteachSchedule default_coteach_schedule(const TrainConfig& cfg,
                                         std::optional<double> estimated_noise = std::nullopt);

struct CoteachStep {
  std::size_t step;
  std::span<const std::size_t> batch;
  /// Small-loss selections, as positions into the training data.
  std::span<const std::size_t> kept_by_first;
  std::span<const std::size_t> kept_by_second;
  const ModelParams& first;
  const ModelParams& second;
};

struct CoteachResult {
  ModelParams first;
  ModelParams second;
  TrainHistory history;
  double best_val_accuracy = 0.0;
};

/// Network k initialises from derive_seed(cfg.effective_init_seed(), k); both
/// share the minibatch stream of cfg.seed.
std::uint64_t coteach_network_seed(const TrainConfig& cfg, std::size_t network);

CoteachResult train_coteaching(const FeaturizedData& train, const FeaturizedData& val,
                               std::size_t num_labels, std::size_t hash_dim, const TrainConfig& cfg,
                               const CoteachSchedule& schedule,
                               const std::function<void(const CoteachStep&)>& observer = {});
CoteachResult train_coteaching(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                               const CoteachSchedule& schedule, const Featurizer& featurizer);

enum class ConsensusRule { heads_agree, heads_agree_with_label };

std::string_view to_string(ConsensusRule rule);
ConsensusRule consensus_rule_from_string(std::string_view name);

struct CetaConfig {
  ConsensusRule consensus_rule = ConsensusRule::heads_agree;
  /// Weight of the distance term between the two heads.
  double lambda_w = 0.1;
  /// Start both heads from the same weights (diagnostic).
  bool identical_heads = false;

  void validate() const;
};

/// Wasserstein distance under the 0/1 ground metric, i.e. total variation.
double total_variation(const ProbVector& p, const ProbVector& q);

struct CetaStep {
  std::size_t step;
  std::span<const std::size_t> batch;
  std::span<const std::size_t> consensus;
  double mean_distance;
};

struct CetaResult {
  ModelParams params;
  TrainHistory history;
  double best_val_accuracy = 0.0;
};

CetaResult train_ceta(const FeaturizedData& train, const FeaturizedData& val, std::size_t num_labels,
                      std::size_t hash_dim, const TrainConfig& cfg, const CetaConfig& ceta,
                      const std::function<void(const CetaStep&)>& observer = {});
CetaResult train_ceta(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                      const CetaConfig& ceta, const Featurizer& featurizer);

enum class Method { vanilla, coteaching, ceta };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

struct MethodSettings {
  TrainConfig train;
  std::optional<CoteachSchedule> coteach;  // default_coteach_schedule when unset
  CetaConfig ceta;

  /// {"train": {...}, "coteach": {"tau", "ramp_steps"} or null, "ceta": {...}}
  nlohmann::json to_json() const;
  static MethodSettings from_json(const nlohmann::json& j);
};

/// A trained single-method model plus the head selection used to score it:
/// vanilla and co-teaching (network 1) score head 0, CETA averages its heads.
struct TrainedModel {
  Method method = Method::vanilla;
  ModelParams params;
  Heads heads;
  TrainHistory history;
  double best_val_accuracy = 0.0;
};

TrainedModel train_method(Method method, const FeaturizedData& train, const FeaturizedData& val,
                          std::size_t num_labels, std::size_t hash_dim,
                          const MethodSettings& settings);

void require_same_labels(const Dataset& a, const Dataset& b);

}  // namespace noisebench
