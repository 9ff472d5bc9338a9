#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisebench/cleaning.hpp"
#include "noisebench/dataset.hpp"
#include "noisebench/ensemble.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/noise.hpp"
#include "noisebench/presets.hpp"
#include "noisebench/trainers.hpp"

namespace noisebench {

/// Regime as JSON: {"preset": name} optionally followed by field overrides,
/// or a full field list without "preset".
nlohmann::json regime_to_json(const RegimeSpec& regime);
RegimeSpec regime_from_json(const nlohmann::json& j);

/// Train/validation/test files. Validation labels are taken as observed
/// (noisy); the test file must carry gold labels.
struct FileSource {
  std::string train;
  std::string validation;
  std::string test;
  DatasetFormat format = DatasetFormat::jsonl;
  std::optional<std::string> labels;
};

struct DatasetSource {
  std::optional<RegimeSpec> synthetic;
  std::optional<FileSource> files;

  nlohmann::json to_json() const;
  static DatasetSource from_json(const nlohmann::json& j);
};

/// Noise applied to the train and validation splits of every run, reseeded
/// per run. feature_dependent noise uses the preset's calibrated gazetteer
/// unless `rules` is given.
struct NoiseSetting {
  NoiseKind kind = NoiseKind::none;
  double level = 0.0;
  std::optional<RuleLabeler> rules;

  std::string label() const;
  nlohmann::json to_json() const;
  static NoiseSetting from_json(const nlohmann::json& j);
};

enum class ExperimentMethod { vanilla, coteaching, ceta, hme, hte, boosting, nc };

std::string_view to_string(ExperimentMethod method);
ExperimentMethod experiment_method_from_string(std::string_view name);

struct ExperimentConfig {
  DatasetSource dataset;
  NoiseSetting noise;
  ExperimentMethod method = ExperimentMethod::vanilla;
  /// Trainer settings; the run seed replaces settings.train.seed.
  MethodSettings settings;
  /// Used by hme, hte and boosting; kind is forced from `method`.
  EnsembleSpec ensemble;
  /// Used by nc.
  CleanConfig clean;
  Featurizer featurizer{1u << 14};
  std::size_t runs = 5;
  std::uint64_t base_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing sections take their defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Splits of one run after noise injection; test observed labels are gold.
struct RunData {
  Dataset train;
  Dataset validation;
  Dataset test;
  /// Gold-vs-observed counts when the train split has gold labels.
  std::optional<NoiseMatrix> train_matrix;
};

/// Builds (or loads) the data for run seed `seed` and applies the noise.
RunData prepare_run_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunRecord {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::optional<double> test_accuracy;
  std::optional<std::string> error;
  std::optional<double> train_noise;
  std::optional<double> cleaned_noise;
  std::optional<double> threshold;
  std::optional<std::size_t> cleaned_size;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<RunRecord> runs;
  /// Over successful runs; std is the population standard deviation.
  double mean = 0.0;
  double std = 0.0;
  bool partial = false;
  std::optional<double> mean_train_noise;
  std::optional<double> mean_cleaned_noise;
  double wall_clock_seconds = 0.0;

  /// Reproducible mode leaves out wall-clock time so equal configs give
  /// byte-identical output.
  nlohmann::ordered_json to_json(bool reproducible) const;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_and_std(const std::vector<double>& values);

/// Runs r = 0..runs-1 with seed base_seed + r, concurrently up to the worker
/// limit. A failing run is recorded and marks the report partial; if every run
/// fails the last error is rethrown.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// One trained-and-scored run; exposed for tests.
RunRecord run_single(const ExperimentConfig& cfg, std::size_t run);

struct ComparisonCell {
  double mean = 0.0;
  double std = 0.0;
  bool partial = false;
};

struct ComparisonTable {
  std::vector<std::string> columns;  // noise settings
  std::vector<std::string> rows;     // methods, config order; clean row first
  std::vector<std::vector<std::optional<ComparisonCell>>> cells;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Rows are methods in first-appearance order, columns noise settings in
/// first-appearance order. A "clean data vanilla" row (noise none) comes
/// first when `clean_baseline` is set. All configs must share the dataset,
/// featurizer, runs and base seed.
ComparisonTable compare_methods(const std::vector<ExperimentConfig>& cfgs, bool clean_baseline = true);

/// Expands {"base": config, "methods": [...], "noise": [...]} or
/// {"experiments": [...]} into experiment configs.
std::vector<ExperimentConfig> comparison_from_json(const nlohmann::json& j);

struct PlotData {
  std::string threshold_series;
  std::string matrix_before;
  std::string matrix_after;
};

/// Reads a cleaning report JSON as written by the CLI `clean` command.
PlotData emit_plot_data(const nlohmann::json& clean_report);

/// JSON holding the tuning diagnostics and before/after matrices, the input
/// of emit_plot_data.
nlohmann::ordered_json cleaning_plot_json(const std::vector<ThresholdCandidate>& diagnostics,
                                          const std::optional<NoiseMatrix>& before,
                                          const std::optional<NoiseMatrix>& after);

}  // namespace noisebench
