#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "noisebench/dataset.hpp"

namespace noisebench {

/// Gold-vs-observed count matrix: rows are gold labels, columns observed.
class NoiseMatrix {
 public:
  explicit NoiseMatrix(LabelSet labels);

  const LabelSet& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t count(LabelIndex gold, LabelIndex observed) const { return counts_[gold * size() + observed]; }
  void add(LabelIndex gold, LabelIndex observed) { ++counts_[gold * size() + observed]; }

  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_total(LabelIndex gold) const;
  /// Off-diagonal mass over total; 0 for an empty matrix.
  double noise_level() const;
  /// Rows divided by their totals; empty rows stay all-zero.
  std::vector<std::vector<double>> row_normalized() const;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  /// Reads the "labels" and "counts" fields written by to_json.
  static NoiseMatrix from_json(const nlohmann::json& j);

 private:
  LabelSet labels_;
  std::vector<std::size_t> counts_;
};

NoiseMatrix noise_matrix(const Dataset& dataset);

/// Fraction of instances whose observed label differs from the gold label.
double noise_level(const Dataset& dataset);

/// Keyword labeler in the style of gazetteer-driven weak supervision.
/// Keywords are matched as whole tokens (lowercased, whitespace split);
/// a keyword containing spaces matches the contiguous token sequence.
struct RuleLabeler {
  struct Rule {
    std::vector<std::string> keywords;
    std::string label;
  };
  enum class Fallback { abstain, random };

  std::vector<Rule> rules;
  Fallback fallback = Fallback::abstain;
  std::uint64_t fallback_seed = 0;

  nlohmann::json to_json() const;
  static RuleLabeler from_json(const nlohmann::json& j);
};

/// RuleLabeler bound to a label set, with keyword lookup tables built once.
class CompiledRules {
 public:
  CompiledRules(const RuleLabeler& labeler, const LabelSet& labels);

  /// Label of the first matching rule, if any.
  std::optional<LabelIndex> match(std::string_view text) const;
  /// match(), then the fallback policy; nullopt means abstain.
  std::optional<LabelIndex> label(std::string_view text) const;

 private:
  struct Phrase {
    std::vector<std::string> tokens;
    std::size_t rule;
  };
  std::vector<LabelIndex> rule_labels_;
  std::unordered_map<std::string, std::size_t> single_;
  std::unordered_map<std::string, std::vector<Phrase>> phrases_;
  RuleLabeler::Fallback fallback_;
  std::uint64_t fallback_seed_;
  std::size_t num_labels_;
};

struct RuleNoiseResult {
  Dataset dataset;
  /// Instances no rule matched (they keep their gold label under abstain).
  std::vector<std::string> unmatched_ids;
};

Dataset inject_uniform_noise(const Dataset& dataset, double level, std::uint64_t seed);
RuleNoiseResult inject_rule_noise(const Dataset& dataset, const RuleLabeler& labeler);
Dataset inject_annotation_noise(const Dataset& dataset, double level, std::uint64_t seed);

enum class NoiseKind { none, uniform_random, feature_dependent, pseudo_real_world };

std::string_view to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  /// Ignored by feature_dependent noise.
  double target_level = 0.0;
  std::uint64_t seed = 0;
  /// Used by feature_dependent noise.
  std::optional<RuleLabeler> labeler;

  void validate() const;
};

/// Dispatches to the injector for spec.kind; `none` resets observed to gold.
Dataset apply_noise(const Dataset& dataset, const NoiseSpec& spec);

}  // namespace noisebench
