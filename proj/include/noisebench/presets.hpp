#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noisebench/dataset.hpp"
#include "noisebench/noise.hpp"

namespace noisebench {

/// Dimensions and noise profile of a synthetic experiment regime.
struct RegimeSpec {
  std::string name;
  std::size_t num_classes = 2;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t test_size = 0;
  std::size_t vocab_per_class = 60;
  double overlap = 0.0;
  CorpusOptions corpus;
  /// Per-class fraction of training instances the gazetteer rules should
  /// mislabel; empty means no rule noise.
  std::vector<double> class_noise;
};

/// K=7, 1340/189/379 split, average length 13, about 33% rule noise spread
/// over all classes, moderate class skew.
RegimeSpec yoruba_like_regime();
/// K=5, 2045/290/582 split, average length 10, about 50% rule noise with two
/// classes whose rule labels are majority-wrong.
RegimeSpec hausa_like_regime();
/// K=5, disjoint class vocabularies, no rule noise.
RegimeSpec separable_regime();

/// Looks up a regime by name: "yoruba-like", "hausa-like" or "separable".
RegimeSpec regime_by_name(const std::string& name);
std::vector<std::string> regime_names();

struct PresetData {
  RegimeSpec regime;
  /// All three splits carry gold labels with observed == gold.
  Dataset train;
  Dataset validation;
  Dataset test;
  /// Gazetteer calibrated on the training split; empty rules when the regime
  /// has no rule noise.
  RuleLabeler labeler;
};

/// Generates the corpus, splits it and calibrates the gazetteer so each
/// class's rule-noise rate on the training split reaches its target.
PresetData build_preset(const RegimeSpec& regime, std::uint64_t seed);

/// Gazetteer construction: one rule per noisy class whose keywords are tokens
/// the class shares with a neighbour (labelled with the neighbour), added
/// greedily until the class's mislabel rate on `calibration` reaches its
/// target; then one rule per class over its private tokens.
RuleLabeler calibrate_gazetteer(const RegimeSpec& regime, const Dataset& calibration);

}  // namespace noisebench
