#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisebench/dataset.hpp"
#include "noisebench/error.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/model.hpp"

namespace noisebench {

/// Raised when a threshold removes every training instance.
class EmptyCleanedSet : public MethodFailure {
 public:
  using MethodFailure::MethodFailure;
};

struct CleanConfig {
  std::size_t folds = 5;
  /// Fixed loss threshold; unset means tune it over the grid.
  std::optional<double> threshold;
  /// Explicit threshold candidates. When empty, candidates are the
  /// `tuning_quantiles` of the held-out losses.
  std::vector<double> tuning_grid;
  std::vector<double> tuning_quantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static CleanConfig from_json(const nlohmann::json& j);
};

/// Threshold interval used for large pretrained models: 6.0 to 8.0 in 0.5 steps.
std::vector<double> reference_threshold_grid();

struct CleaningReport {
  std::vector<std::string> kept_ids;
  std::vector<std::string> removed_ids;
  /// Held-out loss per training instance, in training order.
  std::vector<std::pair<std::string, double>> per_instance_loss;
  std::optional<double> noise_before;
  std::optional<double> noise_after;
  double threshold_used = 0.0;

  nlohmann::json to_json() const;
};

/// Seeded partition of 0..n-1 into `folds` disjoint index lists (sorted),
/// sizes differing by at most one.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds,
                                                     std::uint64_t seed);

/// Held-out losses from the fold models; independent of the threshold, so one
/// computation serves a whole grid.
struct FoldLosses {
  std::vector<std::vector<std::size_t>> folds;
  std::vector<double> losses;  // per training instance
};

FoldLosses compute_fold_losses(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                               const TrainConfig& train_cfg, const Featurizer& featurizer);

struct CleanResult {
  Dataset cleaned;
  CleaningReport report;
};

/// Keeps instances with held-out loss strictly below `threshold`, in original
/// order. Gold labels are read only for the noise_before/after fields.
CleanResult apply_threshold(const Dataset& train, const FoldLosses& losses, double threshold);

/// N-fold loss filtering at the fixed `cfg.threshold`. Fold models stop early
/// on `val` (the experiment's noisy validation split).
CleanResult clean_dataset(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                          const TrainConfig& train_cfg, const Featurizer& featurizer);

struct ThresholdCandidate {
  double threshold = 0.0;
  std::size_t cleaned_size = 0;
  /// Unset when the threshold removed every instance.
  std::optional<double> val_accuracy;
  std::optional<double> noise_after;
};

struct ThresholdTuning {
  double threshold = 0.0;
  std::vector<ThresholdCandidate> diagnostics;
  CleanResult result;
  /// Vanilla model retrained on the selected cleaned set.
  ModelParams model;

  std::string diagnostics_csv() const;
};

/// Threshold sweep as "threshold,cleaned_size,val_accuracy,noise_after";
/// empty cells for missing values.
std::string threshold_series_csv(const std::vector<ThresholdCandidate>& diagnostics);

/// Candidate thresholds for `cfg` given held-out losses: the explicit grid or
/// the loss quantiles, sorted ascending and deduplicated.
std::vector<double> threshold_candidates(const CleanConfig& cfg, const std::vector<double>& losses);

/// Picks the threshold whose cleaned set gives the best noisy-validation
/// accuracy after vanilla retraining; ties go to the smaller threshold.
ThresholdTuning tune_threshold(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                               const TrainConfig& train_cfg, const Featurizer& featurizer);
ThresholdTuning tune_threshold(const Dataset& train, const Dataset& val, const FoldLosses& losses,
                               const CleanConfig& cfg, const TrainConfig& train_cfg,
                               const Featurizer& featurizer);

struct RetrainResult {
  ModelParams params;
  double test_accuracy = 0.0;
};

/// Vanilla training on the cleaned set, scored on a clean test split.
RetrainResult retrain_on_cleaned(const Dataset& cleaned, const Dataset& val, const Dataset& test,
                                 const TrainConfig& train_cfg, const Featurizer& featurizer);

}  // namespace noisebench
