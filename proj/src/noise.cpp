#include "noisebench/noise.hpp"

#include <cmath>
#include <sstream>

#include "noisebench/error.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

NoiseMatrix::NoiseMatrix(LabelSet labels)
    : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

std::size_t NoiseMatrix::total() const {
  std::size_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::size_t NoiseMatrix::trace() const {
  std::size_t sum = 0;
  for (std::size_t k = 0; k < size(); ++k) sum += count(k, k);
  return sum;
}

std::size_t NoiseMatrix::row_total(LabelIndex gold) const {
  std::size_t sum = 0;
  for (std::size_t o = 0; o < size(); ++o) sum += count(gold, o);
  return sum;
}

double NoiseMatrix::noise_level() const {
  const auto n = total();
  if (n == 0) return 0.0;
  return static_cast<double>(n - trace()) / static_cast<double>(n);
}

std::vector<std::vector<double>> NoiseMatrix::row_normalized() const {
  std::vector<std::vector<double>> rows(size(), std::vector<double>(size(), 0.0));
  for (std::size_t g = 0; g < size(); ++g) {
    const auto row = row_total(g);
    if (row == 0) continue;
    for (std::size_t o = 0; o < size(); ++o) {
      rows[g][o] = static_cast<double>(count(g, o)) / static_cast<double>(row);
    }
  }
  return rows;
}

std::string NoiseMatrix::to_csv() const {
  std::ostringstream out;
  out << "gold\\observed";
  for (const auto& name : labels_.names()) out << ',' << name;
  out << '\n';
  for (std::size_t g = 0; g < size(); ++g) {
    out << labels_.name(g);
    for (std::size_t o = 0; o < size(); ++o) out << ',' << count(g, o);
    out << '\n';
  }
  return out.str();
}

nlohmann::json NoiseMatrix::to_json() const {
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t g = 0; g < size(); ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t o = 0; o < size(); ++o) row.push_back(count(g, o));
    counts.push_back(std::move(row));
  }
  return {{"labels", labels_.names()},
          {"counts", std::move(counts)},
          {"probabilities", row_normalized()},
          {"total", total()},
          {"noise_level", noise_level()}};
}

NoiseMatrix NoiseMatrix::from_json(const nlohmann::json& j) {
  try {
    NoiseMatrix matrix(LabelSet(j.at("labels").get<std::vector<std::string>>()));
    const auto& counts = j.at("counts");
    if (!counts.is_array() || counts.size() != matrix.size()) {
      throw ValidationError("noise matrix needs one count row per label");
    }
    for (std::size_t g = 0; g < matrix.size(); ++g) {
      if (!counts[g].is_array() || counts[g].size() != matrix.size()) {
        throw ValidationError("noise matrix rows need one count per label");
      }
      for (std::size_t o = 0; o < matrix.size(); ++o) {
        matrix.counts_[g * matrix.size() + o] = counts[g][o].get<std::size_t>();
      }
    }
    return matrix;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid noise matrix: ") + e.what());
  }
}

NoiseMatrix noise_matrix(const Dataset& dataset) {
  dataset.require_gold_labels("noise_matrix");
  NoiseMatrix matrix(dataset.labels());
  for (const auto& inst : dataset.instances()) matrix.add(*inst.gold_label, inst.observed_label);
  return matrix;
}

double noise_level(const Dataset& dataset) {
  if (dataset.empty()) throw ValidationError("noise_level of an empty dataset");
  dataset.require_gold_labels("noise_level");
  std::size_t flipped = 0;
  for (const auto& inst : dataset.instances()) flipped += inst.observed_label != *inst.gold_label;
  return static_cast<double>(flipped) / static_cast<double>(dataset.size());
}

nlohmann::json RuleLabeler::to_json() const {
  nlohmann::json rule_list = nlohmann::json::array();
  for (const auto& rule : rules) {
    rule_list.push_back({{"keywords", rule.keywords}, {"label", rule.label}});
  }
  return {{"rules", std::move(rule_list)},
          {"fallback", fallback == Fallback::abstain ? "abstain" : "random"},
          {"fallback_seed", fallback_seed}};
}

RuleLabeler RuleLabeler::from_json(const nlohmann::json& j) {
  RuleLabeler labeler;
  try {
    for (const auto& rule : j.at("rules")) {
      labeler.rules.push_back(
          {rule.at("keywords").get<std::vector<std::string>>(), rule.at("label").get<std::string>()});
    }
    const auto fallback = j.value("fallback", std::string("abstain"));
    if (fallback == "abstain") {
      labeler.fallback = Fallback::abstain;
    } else if (fallback == "random") {
      labeler.fallback = Fallback::random;
    } else {
      throw ValidationError("unknown rule fallback '" + fallback + "'");
    }
    labeler.fallback_seed = j.value("fallback_seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid rule labeler: ") + e.what());
  }
  return labeler;
}

CompiledRules::CompiledRules(const RuleLabeler& labeler, const LabelSet& labels)
    : fallback_(labeler.fallback), fallback_seed_(labeler.fallback_seed), num_labels_(labels.size()) {
  for (std::size_t r = 0; r < labeler.rules.size(); ++r) {
    const auto& rule = labeler.rules[r];
    const auto index = labels.find(rule.label);
    if (!index) throw ValidationError("rule " + std::to_string(r) + " references unknown label '" + rule.label + "'");
    rule_labels_.push_back(*index);
    for (const auto& keyword : rule.keywords) {
      auto tokens = tokenize(keyword);
      if (tokens.empty()) continue;
      if (tokens.size() == 1) {
        single_.try_emplace(tokens[0], r);  // earliest rule keeps the token
      } else {
        auto head = tokens[0];
        phrases_[head].push_back({std::move(tokens), r});
      }
    }
  }
}

std::optional<LabelIndex> CompiledRules::match(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::size_t best = rule_labels_.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (auto it = single_.find(tokens[i]); it != single_.end()) best = std::min(best, it->second);
    if (auto it = phrases_.find(tokens[i]); it != phrases_.end()) {
      for (const auto& phrase : it->second) {
        if (phrase.rule >= best || i + phrase.tokens.size() > tokens.size()) continue;
        if (std::equal(phrase.tokens.begin(), phrase.tokens.end(), tokens.begin() + i)) {
          best = phrase.rule;
        }
      }
    }
  }
  if (best == rule_labels_.size()) return std::nullopt;
  return rule_labels_[best];
}

std::optional<LabelIndex> CompiledRules::label(std::string_view text) const {
  if (auto matched = match(text)) return matched;
  if (fallback_ == RuleLabeler::Fallback::abstain) return std::nullopt;
  // a function of the text only, so equal texts get equal labels
  std::uint64_t h = derive_seed(fallback_seed_, text);
  return static_cast<LabelIndex>(h % num_labels_);
}

Dataset inject_uniform_noise(const Dataset& dataset, double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("noise level must lie in [0, 1]");
  dataset.require_gold_labels("inject_uniform_noise");
  const auto n = dataset.size();
  const auto k = dataset.num_labels();
  const auto flips = static_cast<std::size_t>(std::llround(level * static_cast<double>(n)));
  Rng rng(derive_seed(seed, "uniform-noise"));
  auto instances = dataset.instances();
  for (auto& inst : instances) inst.observed_label = *inst.gold_label;
  for (auto position : rng.sample_without_replacement(n, flips)) {
    auto& inst = instances[position];
    auto label = static_cast<LabelIndex>(rng.uniform_index(k - 1));
    if (label >= *inst.gold_label) ++label;
    inst.observed_label = label;
  }
  return dataset.with_instances(std::move(instances));
}

RuleNoiseResult inject_rule_noise(const Dataset& dataset, const RuleLabeler& labeler) {
  dataset.require_gold_labels("inject_rule_noise");
  const CompiledRules rules(labeler, dataset.labels());
  auto instances = dataset.instances();
  std::vector<std::string> unmatched;
  for (auto& inst : instances) {
    if (auto label = rules.label(inst.text)) {
      inst.observed_label = *label;
    } else {
      inst.observed_label = *inst.gold_label;
      unmatched.push_back(inst.id);
    }
  }
  return {dataset.with_instances(std::move(instances)), std::move(unmatched)};
}

Dataset inject_annotation_noise(const Dataset& dataset, double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("noise level must lie in [0, 1]");
  dataset.require_gold_labels("inject_annotation_noise");
  const auto n = dataset.size();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = dataset[i];
    if (inst.annotator_labels.empty()) {
      throw ValidationError("inject_annotation_noise: instance '" + inst.id + "' has no annotator labels");
    }
    for (auto a : inst.annotator_labels) {
      if (a != *inst.gold_label) {
        eligible.push_back(i);
        break;
      }
    }
  }
  const auto wanted = static_cast<std::size_t>(std::llround(level * static_cast<double>(n)));
  if (wanted > eligible.size()) {
    const double attainable = n == 0 ? 0.0 : static_cast<double>(eligible.size()) / static_cast<double>(n);
    std::ostringstream msg;
    msg << "annotation noise level " << level << " unreachable; maximum attainable level is "
        << attainable << " (" << eligible.size() << " of " << n << " instances have a disagreeing annotator)";
    throw ValidationError(msg.str());
  }
  Rng rng(derive_seed(seed, "annotation-noise"));
  auto instances = dataset.instances();
  for (auto& inst : instances) inst.observed_label = *inst.gold_label;
  for (auto pick : rng.sample_without_replacement(eligible.size(), wanted)) {
    auto& inst = instances[eligible[pick]];
    std::vector<LabelIndex> options;
    for (auto a : inst.annotator_labels) {
      if (a != *inst.gold_label) options.push_back(a);
    }
    inst.observed_label = options[rng.uniform_index(options.size())];
  }
  return dataset.with_instances(std::move(instances));
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform_random: return "uniform_random";
    case NoiseKind::feature_dependent: return "feature_dependent";
    case NoiseKind::pseudo_real_world: return "pseudo_real_world";
  }
  return "none";
}

NoiseKind noise_kind_from_string(std::string_view name) {
  if (name == "none") return NoiseKind::none;
  if (name == "uniform_random" || name == "uniform") return NoiseKind::uniform_random;
  if (name == "feature_dependent" || name == "rules") return NoiseKind::feature_dependent;
  if (name == "pseudo_real_world" || name == "annotation") return NoiseKind::pseudo_real_world;
  throw ValidationError("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  if (!(target_level >= 0.0 && target_level <= 1.0)) {
    throw ValidationError("noise target_level must lie in [0, 1]");
  }
  if (kind == NoiseKind::feature_dependent && !labeler) {
    throw ValidationError("feature_dependent noise needs a rule labeler");
  }
}

Dataset apply_noise(const Dataset& dataset, const NoiseSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case NoiseKind::none: return dataset.with_gold_as_observed();
    case NoiseKind::uniform_random: return inject_uniform_noise(dataset, spec.target_level, spec.seed);
    case NoiseKind::feature_dependent: return inject_rule_noise(dataset, *spec.labeler).dataset;
    case NoiseKind::pseudo_real_world:
      return inject_annotation_noise(dataset, spec.target_level, spec.seed);
  }
  return dataset;
}

}  // namespace noisebench
