#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisebench/dataset.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/model.hpp"
#include "noisebench/trainers.hpp"

namespace noisebench {

/// "boosting" here means bagging over random training subsets,
/// not adaptive reweighting.
enum class EnsembleKind { homogeneous, heterogeneous, boosting };

std::string_view to_string(EnsembleKind kind);
EnsembleKind ensemble_kind_from_string(std::string_view name);

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::homogeneous;
  std::size_t member_count = 5;
  /// Homogeneous members; when empty, member_count configs are sampled from
  /// reference_hyperparameter_grid().
  std::vector<TrainConfig> hyperparameter_grid;
  /// Heterogeneous members.
  std::vector<Method> member_methods{Method::vanilla, Method::coteaching, Method::ceta};
  /// Boosting subset size as a fraction of the training set.
  double subset_fraction = 0.8;
  /// Per-member subset seeds; derived from `seed` when empty.
  std::vector<std::uint64_t> member_seeds;
  /// Base config for heterogeneous and boosting members.
  MethodSettings settings;
  std::uint64_t seed = 0;

  /// Number of members the spec asks for.
  std::size_t resolved_member_count() const;
  void validate() const;
  nlohmann::json to_json() const;
  static EnsembleSpec from_json(const nlohmann::json& j);
};

/// Reference homogeneous-ensemble grid, rescaled
/// for the stand-in model: steps x0.2, learning rate x1e3, weight decay x1e-3
/// (lr*wd preserved); patience, warm-up and drop rate verbatim.
struct HyperparameterGrid {
  std::vector<std::size_t> steps;
  std::vector<double> learning_rate;
  std::vector<std::size_t> patience;
  std::vector<std::size_t> warmup_steps;
  std::vector<double> weight_decay;
  std::vector<double> drop_rate;
};

HyperparameterGrid reference_hyperparameter_grid();

/// Draws `count` configs from the Cartesian product without replacement, with
/// pairwise distinct (steps, learning_rate). Member i gets seed
/// derive_seed(seed, i); other fields come from `base`.
std::vector<TrainConfig> sample_grid(const HyperparameterGrid& grid, std::size_t count,
                                     const TrainConfig& base, std::uint64_t seed);

/// Seeded sample without replacement of round(fraction * n) indices, in
/// ascending order.
std::vector<std::size_t> boosting_subset(std::size_t n, double fraction, std::uint64_t seed);

struct EnsembleMember {
  Method method = Method::vanilla;
  TrainConfig config;
  ModelParams params;
  Heads heads;
  double best_val_accuracy = 0.0;
  /// Boosting members: the training positions they saw.
  std::vector<std::size_t> subset;
};

struct MemberFailure {
  std::size_t index = 0;
  std::string message;
};

/// Surviving members in member-index order plus the members that failed.
struct EnsembleResult {
  EnsembleKind kind = EnsembleKind::homogeneous;
  std::vector<EnsembleMember> members;
  std::vector<MemberFailure> failures;
};

EnsembleResult train_homogeneous(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                                 const Featurizer& featurizer);
EnsembleResult train_heterogeneous(const Dataset& train, const Dataset& val,
                                   const EnsembleSpec& spec, const Featurizer& featurizer);
EnsembleResult train_boosting(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                              const Featurizer& featurizer);
/// Dispatches on spec.kind.
EnsembleResult train_ensemble(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                              const Featurizer& featurizer);

/// Arithmetic mean of the member distributions, folded in member order.
ProbVector average_probabilities(std::span<const ProbVector> members);

struct EnsemblePrediction {
  std::vector<ProbVector> member_probs;
  ProbVector averaged;
  LabelIndex predicted = 0;
};

struct EnsembleEvaluation {
  /// Against the observed labels of the scored dataset.
  double accuracy = 0.0;
  std::vector<EnsemblePrediction> predictions;
};

EnsembleEvaluation predict_ensemble(std::span<const EnsembleMember> members,
                                    const Featurizer& featurizer, const Dataset& dataset);

/// Writes one checkpoint per member next to `manifest_path` and a JSON
/// manifest listing method, config, seed, heads and checkpoint path.
void save_ensemble(const EnsembleResult& ensemble, const Featurizer& featurizer,
                   const LabelSet& labels, const std::filesystem::path& manifest_path);

struct LoadedEnsemble {
  EnsembleKind kind = EnsembleKind::homogeneous;
  Featurizer featurizer;
  LabelSet labels;
  std::vector<EnsembleMember> members;
};

LoadedEnsemble load_ensemble(const std::filesystem::path& manifest_path);

}  // namespace noisebench
