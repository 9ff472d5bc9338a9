#include "noisebench/presets.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "noisebench/error.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

RegimeSpec yoruba_like_regime() {
  RegimeSpec r;
  r.name = "yoruba-like";
  r.num_classes = 7;
  r.train_size = 1340;
  r.validation_size = 189;
  r.test_size = 379;
  r.vocab_per_class = 60;
  r.overlap = 0.3;
  r.corpus.mean_length = 13.0;
  r.corpus.zipf_exponent = 1.0;
  r.corpus.class_weights = {1.5, 1.3, 1.15, 1.0, 0.9, 0.8, 0.7};
  r.class_noise.assign(7, 0.3328);
  return r;
}

RegimeSpec hausa_like_regime() {
  RegimeSpec r;
  r.name = "hausa-like";
  r.num_classes = 5;
  r.train_size = 2045;
  r.validation_size = 290;
  r.test_size = 582;
  r.vocab_per_class = 60;
  r.overlap = 0.3;
  r.corpus.mean_length = 10.0;
  r.corpus.zipf_exponent = 1.0;
  r.corpus.class_weights = {1.3, 1.1, 1.0, 0.9, 0.8};
  r.class_noise = {0.3, 0.3, 0.72, 0.75, 0.55};
  return r;
}

RegimeSpec separable_regime() {
  RegimeSpec r;
  r.name = "separable";
  r.num_classes = 5;
  r.train_size = 1600;
  r.validation_size = 200;
  r.test_size = 400;
  r.vocab_per_class = 40;
  r.overlap = 0.0;
  r.corpus.mean_length = 12.0;
  return r;
}

std::vector<std::string> regime_names() { return {"yoruba-like", "hausa-like", "separable"}; }

RegimeSpec regime_by_name(const std::string& name) {
  if (name == "yoruba-like") return yoruba_like_regime();
  if (name == "hausa-like") return hausa_like_regime();
  if (name == "separable") return separable_regime();
  throw ValidationError("unknown preset '" + name + "'");
}

namespace {

std::size_t neighbour_of(std::size_t c) { return c == 0 ? 1 : c - 1; }

}  // namespace

RuleLabeler calibrate_gazetteer(const RegimeSpec& regime, const Dataset& calibration) {
  const auto k = regime.num_classes;
  RuleLabeler labeler;
  if (regime.class_noise.empty()) return labeler;
  if (regime.class_noise.size() != k) throw ValidationError("class_noise needs one entry per class");
  calibration.require_gold_labels("calibrate_gazetteer");

  const auto vocab = synthetic_vocabularies(k, regime.vocab_per_class, regime.overlap);
  const auto& names = calibration.labels().names();
  std::vector<std::set<std::string>> windows;
  for (const auto& v : vocab) windows.emplace_back(v.begin(), v.end());

  // tokenised texts per gold class
  std::vector<std::vector<std::unordered_set<std::string>>> texts(k);
  for (const auto& inst : calibration.instances()) {
    auto tokens = tokenize(inst.text);
    texts[*inst.gold_label].emplace_back(tokens.begin(), tokens.end());
  }

  // class-vocabulary rules over private tokens
  std::vector<RuleLabeler::Rule> private_rules;
  for (std::size_t c = 0; c < k; ++c) {
    RuleLabeler::Rule rule{{}, names[c]};
    for (const auto& token : vocab[c]) {
      bool shared = false;
      for (std::size_t o = 0; o < k && !shared; ++o) shared = o != c && windows[o].count(token);
      if (!shared) rule.keywords.push_back(token);
    }
    private_rules.push_back(std::move(rule));
  }

  std::unordered_set<std::string> claimed;
  std::vector<RuleLabeler::Rule> trigger_rules;
  for (std::size_t c = 0; c < k; ++c) {
    const double target = regime.class_noise[c];
    if (!(target >= 0.0 && target <= 1.0)) throw ValidationError("class noise targets must lie in [0, 1]");
    const auto& class_texts = texts[c];
    if (target == 0.0 || class_texts.empty()) continue;
    const auto neighbour = neighbour_of(c);
    std::vector<std::string> candidates;
    for (const auto& token : vocab[c]) {
      if (windows[neighbour].count(token) && !claimed.count(token)) candidates.push_back(token);
    }
    // earlier trigger rules that already fire on this class keep their label
    std::vector<int> fixed(class_texts.size(), -1);
    for (std::size_t i = 0; i < class_texts.size(); ++i) {
      for (std::size_t r = 0; r < trigger_rules.size() && fixed[i] < 0; ++r) {
        for (const auto& kw : trigger_rules[r].keywords) {
          if (class_texts[i].count(kw)) {
            fixed[i] = static_cast<int>(r);
            break;
          }
        }
      }
    }
    std::size_t already_wrong = 0;
    for (std::size_t i = 0; i < class_texts.size(); ++i) {
      if (fixed[i] >= 0 && trigger_rules[fixed[i]].label != names[c]) ++already_wrong;
    }
    std::vector<bool> hit(class_texts.size(), false);
    std::size_t wrong = already_wrong;
    const double n_class = static_cast<double>(class_texts.size());
    RuleLabeler::Rule rule{{}, names[neighbour]};
    std::vector<bool> used(candidates.size(), false);
    while (true) {
      const double current = wrong / n_class;
      double best_gap = std::abs(current - target);
      std::size_t best = candidates.size();
      std::size_t best_gain = 0;
      for (std::size_t t = 0; t < candidates.size(); ++t) {
        if (used[t]) continue;
        std::size_t gain = 0;
        for (std::size_t i = 0; i < class_texts.size(); ++i) {
          if (!hit[i] && fixed[i] < 0 && class_texts[i].count(candidates[t])) ++gain;
        }
        const double gap = std::abs((wrong + gain) / n_class - target);
        if (gain > 0 && gap < best_gap) {
          best_gap = gap;
          best = t;
          best_gain = gain;
        }
      }
      if (best == candidates.size()) break;
      used[best] = true;
      rule.keywords.push_back(candidates[best]);
      claimed.insert(candidates[best]);
      for (std::size_t i = 0; i < class_texts.size(); ++i) {
        if (fixed[i] < 0 && class_texts[i].count(candidates[best])) hit[i] = true;
      }
      wrong += best_gain;
    }
    if (!rule.keywords.empty()) trigger_rules.push_back(std::move(rule));
  }

  labeler.rules = std::move(trigger_rules);
  for (auto& rule : private_rules) labeler.rules.push_back(std::move(rule));
  labeler.fallback = RuleLabeler::Fallback::abstain;
  return labeler;
}

PresetData build_preset(const RegimeSpec& regime, std::uint64_t seed) {
  const auto total = regime.train_size + regime.validation_size + regime.test_size;
  auto corpus = generate_synthetic_corpus(regime.num_classes, total, regime.vocab_per_class,
                                          regime.overlap, derive_seed(seed, "preset-corpus"),
                                          regime.corpus);
  auto splits = split_dataset_by_counts(corpus, regime.train_size, regime.validation_size,
                                        regime.test_size, derive_seed(seed, "preset-split"));
  PresetData data{regime, std::move(splits.train), std::move(splits.validation),
                  std::move(splits.test), {}};
  data.labeler = calibrate_gazetteer(regime, data.train);
  return data;
}

}  // namespace noisebench
