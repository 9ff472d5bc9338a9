#include "noisebench/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "format.hpp"
#include "noisebench/noise.hpp"
#include "noisebench/parallel.hpp"
#include "noisebench/rng.hpp"
#include "noisebench/trainers.hpp"

namespace noisebench {

void CleanConfig::validate() const {
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (threshold && !(std::isfinite(*threshold) && *threshold >= 0.0)) {
    throw ValidationError("threshold must be finite and non-negative");
  }
  for (double t : tuning_grid) {
    if (!(std::isfinite(t) && t >= 0.0)) throw ValidationError("grid thresholds must be finite and non-negative");
  }
  for (double q : tuning_quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("tuning quantiles must lie in [0, 1]");
  }
  if (!threshold && tuning_grid.empty() && tuning_quantiles.empty()) {
    throw ValidationError("threshold tuning needs a grid or quantiles");
  }
}

nlohmann::json CleanConfig::to_json() const {
  nlohmann::json j;
  j["folds"] = folds;
  j["threshold"] = threshold ? nlohmann::json(*threshold) : nlohmann::json(nullptr);
  j["tuning_grid"] = tuning_grid;
  j["tuning_quantiles"] = tuning_quantiles;
  j["seed"] = seed;
  return j;
}

CleanConfig CleanConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("clean config must be a JSON object");
  CleanConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "folds") cfg.folds = value.get<std::size_t>();
      else if (key == "threshold") {
        if (value.is_null() || value == "tune") cfg.threshold.reset();
        else cfg.threshold = value.get<double>();
      } else if (key == "tuning_grid") {
        cfg.tuning_grid = value == "reference" ? reference_threshold_grid() : value.get<std::vector<double>>();
      } else if (key == "tuning_quantiles") cfg.tuning_quantiles = value.get<std::vector<double>>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ValidationError("unknown clean config field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid clean config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<double> reference_threshold_grid() { return {6.0, 6.5, 7.0, 7.5, 8.0}; }

nlohmann::json CleaningReport::to_json() const {
  nlohmann::ordered_json j;
  j["threshold_used"] = threshold_used;
  j["kept_ids"] = kept_ids;
  j["removed_ids"] = removed_ids;
  nlohmann::ordered_json losses = nlohmann::ordered_json::object();
  for (const auto& [id, loss] : per_instance_loss) losses[id] = loss;
  j["per_instance_loss"] = losses;
  j["noise_before"] = noise_before ? nlohmann::ordered_json(*noise_before) : nlohmann::ordered_json(nullptr);
  j["noise_after"] = noise_after ? nlohmann::ordered_json(*noise_after) : nlohmann::ordered_json(nullptr);
  return nlohmann::json::parse(j.dump());
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds,
                                                     std::uint64_t seed) {
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (n < folds) {
    throw ValidationError("cannot split " + std::to_string(n) + " instances into " +
                          std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

FoldLosses compute_fold_losses(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                               const TrainConfig& train_cfg, const Featurizer& featurizer) {
  cfg.validate();
  train_cfg.validate();
  require_same_labels(train, val);
  FoldLosses out;
  out.folds = fold_partition(train.size(), cfg.folds, cfg.seed);
  const auto train_data = featurize_dataset(featurizer, train);
  const auto val_data = featurize_dataset(featurizer, val);
  const auto k = train.labels().size();
  out.losses.assign(train.size(), 0.0);

  parallel_for(out.folds.size(), [&](std::size_t f) {
    const auto& held_out = out.folds[f];
    FeaturizedData complement;
    std::size_t next = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (next < held_out.size() && held_out[next] == i) {
        ++next;
        continue;
      }
      complement.features.push_back(train_data.features[i]);
      complement.labels.push_back(train_data.labels[i]);
    }
    if (complement.size() == 0) {
      throw ValidationError("fold " + std::to_string(f) + " leaves no training instances");
    }
    TrainConfig fold_cfg = train_cfg;
    fold_cfg.seed = derive_seed(train_cfg.seed, f);
    fold_cfg.init_seed.reset();
    const auto model = train_vanilla(complement, val_data, k, featurizer.hash_dim(), fold_cfg);
    for (auto i : held_out) {
      out.losses[i] = instance_loss(model.params, train_data.features[i], train_data.labels[i],
                                    Heads::one(0));
    }
  });
  return out;
}

CleanResult apply_threshold(const Dataset& train, const FoldLosses& losses, double threshold) {
  if (losses.losses.size() != train.size()) throw ValidationError("fold losses do not match the training set");
  if (!(threshold >= 0.0) || std::isnan(threshold)) throw ValidationError("threshold must be non-negative");
  CleaningReport report;
  report.threshold_used = threshold;
  std::vector<Instance> kept;
  const auto& instances = train.instances();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    report.per_instance_loss.emplace_back(instances[i].id, losses.losses[i]);
    if (losses.losses[i] < threshold) {
      kept.push_back(instances[i]);
      report.kept_ids.push_back(instances[i].id);
    } else {
      report.removed_ids.push_back(instances[i].id);
    }
  }
  const bool has_gold = std::all_of(instances.begin(), instances.end(),
                                    [](const Instance& x) { return x.gold_label.has_value(); });
  if (has_gold) report.noise_before = noise_level(train);
  if (kept.empty()) {
    throw EmptyCleanedSet("threshold " + std::to_string(threshold) +
                          " removes every training instance");
  }
  auto cleaned = train.with_instances(std::move(kept));
  if (has_gold) report.noise_after = noise_level(cleaned);
  return {std::move(cleaned), std::move(report)};
}

CleanResult clean_dataset(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                          const TrainConfig& train_cfg, const Featurizer& featurizer) {
  if (!cfg.threshold) throw ValidationError("clean_dataset needs a fixed threshold; use tune_threshold");
  const auto losses = compute_fold_losses(train, val, cfg, train_cfg, featurizer);
  return apply_threshold(train, losses, *cfg.threshold);
}

std::vector<double> threshold_candidates(const CleanConfig& cfg, const std::vector<double>& losses) {
  std::vector<double> out = cfg.tuning_grid;
  if (out.empty()) {
    if (losses.empty()) throw ValidationError("no losses to derive quantile thresholds from");
    auto sorted = losses;
    std::sort(sorted.begin(), sorted.end());
    for (double q : cfg.tuning_quantiles) {
      const double pos = q * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      out.push_back(sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string ThresholdTuning::diagnostics_csv() const { return threshold_series_csv(diagnostics); }

std::string threshold_series_csv(const std::vector<ThresholdCandidate>& diagnostics) {
  std::ostringstream out;
  out << "threshold,cleaned_size,val_accuracy,noise_after\n";
  for (const auto& c : diagnostics) {
    out << detail::shortest(c.threshold) << ',' << c.cleaned_size << ',';
    if (c.val_accuracy) out << detail::shortest(*c.val_accuracy);
    out << ',';
    if (c.noise_after) out << detail::shortest(*c.noise_after);
    out << '\n';
  }
  return out.str();
}

ThresholdTuning tune_threshold(const Dataset& train, const Dataset& val, const CleanConfig& cfg,
                               const TrainConfig& train_cfg, const Featurizer& featurizer) {
  const auto losses = compute_fold_losses(train, val, cfg, train_cfg, featurizer);
  return tune_threshold(train, val, losses, cfg, train_cfg, featurizer);
}

ThresholdTuning tune_threshold(const Dataset& train, const Dataset& val, const FoldLosses& losses,
                               const CleanConfig& cfg, const TrainConfig& train_cfg,
                               const Featurizer& featurizer) {
  cfg.validate();
  const auto candidates = threshold_candidates(cfg, losses.losses);
  const auto val_data = featurize_dataset(featurizer, val);

  struct Slot {
    std::optional<CleanResult> result;
    std::optional<VanillaResult> model;
  };
  std::vector<Slot> slots(candidates.size());
  // thresholds that keep the same instances share one retraining
  std::map<std::size_t, std::size_t> first_with_size;
  std::vector<std::size_t> owner(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    try {
      slots[c].result = apply_threshold(train, losses, candidates[c]);
    } catch (const EmptyCleanedSet&) {
    }
    const auto size = slots[c].result ? slots[c].result->cleaned.size() : 0;
    owner[c] = first_with_size.emplace(size, c).first->second;
  }
  std::vector<std::size_t> to_train;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (owner[c] == c && slots[c].result) to_train.push_back(c);
  }
  if (to_train.empty()) throw EmptyCleanedSet("every threshold candidate removes all training instances");
  parallel_for(to_train.size(), [&](std::size_t t) {
    auto& slot = slots[to_train[t]];
    const auto data = featurize_dataset(featurizer, slot.result->cleaned);
    slot.model = train_vanilla(data, val_data, train.labels().size(), featurizer.hash_dim(), train_cfg);
  });

  ThresholdTuning out;
  std::optional<std::size_t> best;
  double best_accuracy = -1.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    ThresholdCandidate cand;
    cand.threshold = candidates[c];
    if (slots[c].result) {
      cand.cleaned_size = slots[c].result->cleaned.size();
      cand.noise_after = slots[c].result->report.noise_after;
      cand.val_accuracy = slots[owner[c]].model->best_val_accuracy;
      if (*cand.val_accuracy > best_accuracy) {
        best_accuracy = *cand.val_accuracy;
        best = c;
      }
    }
    out.diagnostics.push_back(cand);
  }
  out.threshold = candidates[*best];
  out.result = std::move(*slots[*best].result);
  out.model = std::move(slots[owner[*best]].model->params);
  return out;
}

RetrainResult retrain_on_cleaned(const Dataset& cleaned, const Dataset& val, const Dataset& test,
                                 const TrainConfig& train_cfg, const Featurizer& featurizer) {
  if (cleaned.size() == 0) throw EmptyCleanedSet("cannot retrain on an empty cleaned set");
  test.require_gold_labels("retrain_on_cleaned");
  auto model = train_vanilla(cleaned, val, train_cfg, featurizer);
  auto test_data = featurize_dataset(featurizer, test.with_gold_as_observed());
  const double acc = accuracy(model.params, test_data, Heads::one(0));
  return {std::move(model.params), acc};
}

}  // namespace noisebench
