#include "noisebench/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "noisebench/checkpoint.hpp"
#include "noisebench/error.hpp"
#include "noisebench/parallel.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

std::string_view to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::homogeneous: return "homogeneous";
    case EnsembleKind::heterogeneous: return "heterogeneous";
    case EnsembleKind::boosting: return "boosting";
  }
  return "homogeneous";
}

EnsembleKind ensemble_kind_from_string(std::string_view name) {
  if (name == "homogeneous" || name == "hme") return EnsembleKind::homogeneous;
  if (name == "heterogeneous" || name == "hte") return EnsembleKind::heterogeneous;
  if (name == "boosting") return EnsembleKind::boosting;
  throw ValidationError("unknown ensemble kind '" + std::string(name) + "'");
}

std::size_t EnsembleSpec::resolved_member_count() const {
  switch (kind) {
    case EnsembleKind::homogeneous:
      return hyperparameter_grid.empty() ? member_count : hyperparameter_grid.size();
    case EnsembleKind::heterogeneous: return member_methods.size();
    case EnsembleKind::boosting: return member_seeds.empty() ? member_count : member_seeds.size();
  }
  return member_count;
}

void EnsembleSpec::validate() const {
  if (member_count == 0) throw ValidationError("member_count must be at least 1");
  switch (kind) {
    case EnsembleKind::homogeneous:
      if (!hyperparameter_grid.empty() && hyperparameter_grid.size() != member_count) {
        throw ValidationError("member_count does not match the hyperparameter grid length");
      }
      for (const auto& cfg : hyperparameter_grid) cfg.validate();
      break;
    case EnsembleKind::heterogeneous:
      if (member_methods.empty()) throw ValidationError("heterogeneous ensembles need member methods");
      if (member_methods.size() != member_count) {
        throw ValidationError("member_count does not match the number of member methods");
      }
      break;
    case EnsembleKind::boosting:
      if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
        throw ValidationError("subset_fraction must lie in (0, 1]");
      }
      if (!member_seeds.empty() && member_seeds.size() != member_count) {
        throw ValidationError("member_count does not match the number of member seeds");
      }
      break;
  }
  settings.train.validate();
  settings.ceta.validate();
  if (settings.coteach) settings.coteach->validate();
}

nlohmann::json EnsembleSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind));
  j["member_count"] = member_count;
  j["hyperparameter_grid"] = nlohmann::json::array();
  for (const auto& cfg : hyperparameter_grid) j["hyperparameter_grid"].push_back(cfg.to_json());
  j["member_methods"] = nlohmann::json::array();
  for (auto m : member_methods) j["member_methods"].push_back(std::string(to_string(m)));
  j["subset_fraction"] = subset_fraction;
  j["member_seeds"] = member_seeds;
  j["settings"] = settings.to_json();
  j["seed"] = seed;
  return j;
}

EnsembleSpec EnsembleSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("ensemble spec must be a JSON object");
  EnsembleSpec spec;
  bool count_given = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") spec.kind = ensemble_kind_from_string(value.get<std::string>());
      else if (key == "member_count") {
        spec.member_count = value.get<std::size_t>();
        count_given = true;
      } else if (key == "hyperparameter_grid") {
        spec.hyperparameter_grid.clear();
        for (const auto& cfg : value) spec.hyperparameter_grid.push_back(TrainConfig::from_json(cfg));
      } else if (key == "member_methods") {
        spec.member_methods.clear();
        for (const auto& m : value) spec.member_methods.push_back(method_from_string(m.get<std::string>()));
      } else if (key == "subset_fraction") spec.subset_fraction = value.get<double>();
      else if (key == "member_seeds") spec.member_seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "settings") spec.settings = MethodSettings::from_json(value);
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else throw ValidationError("unknown ensemble spec field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid ensemble spec: ") + e.what());
  }
  if (!count_given) spec.member_count = spec.resolved_member_count();
  spec.validate();
  return spec;
}

HyperparameterGrid reference_hyperparameter_grid() {
  // original scale: steps [2000..6000], lr [2e-4, 4e-4, 5e-4, 1e-5, 2e-5, 3e-5, 4e-5, 5e-5],
  // patience [25, 30, 40, 50], warm-up [0, 1, 5, 7, 10], weight decay
  // [0.1, 0.001, 0.0001], drop rate [0.1, 0.25, 0.5, 0.8]
  HyperparameterGrid g;
  g.steps = {400, 600, 800, 1000, 1200};
  g.learning_rate = {0.2, 0.4, 0.5, 0.01, 0.02, 0.03, 0.04, 0.05};
  g.patience = {25, 30, 40, 50};
  g.warmup_steps = {0, 1, 5, 7, 10};
  g.weight_decay = {1e-4, 1e-6, 1e-7};
  g.drop_rate = {0.1, 0.25, 0.5, 0.8};
  return g;
}

std::vector<TrainConfig> sample_grid(const HyperparameterGrid& grid, std::size_t count,
                                     const TrainConfig& base, std::uint64_t seed) {
  const std::size_t sizes[] = {grid.steps.size(),        grid.learning_rate.size(),
                               grid.patience.size(),     grid.warmup_steps.size(),
                               grid.weight_decay.size(), grid.drop_rate.size()};
  std::size_t total = 1;
  for (auto s : sizes) {
    if (s == 0) throw ValidationError("every hyperparameter list needs at least one value");
    total *= s;
  }
  std::set<std::pair<std::size_t, double>> distinct_pairs;
  for (auto st : grid.steps) {
    for (auto lr : grid.learning_rate) distinct_pairs.emplace(st, lr);
  }
  if (count > distinct_pairs.size()) {
    throw ValidationError("grid has only " + std::to_string(distinct_pairs.size()) +
                          " distinct (steps, learning_rate) pairs, " + std::to_string(count) +
                          " requested");
  }
  Rng rng(derive_seed(seed, "grid"));
  std::set<std::uint64_t> drawn;
  std::set<std::pair<std::size_t, double>> used_pairs;
  std::vector<TrainConfig> out;
  while (out.size() < count) {
    auto index = rng.uniform_index(total);
    if (!drawn.insert(index).second) continue;
    std::size_t digits[6];
    for (std::size_t d = 6; d-- > 0;) {
      digits[d] = index % sizes[d];
      index /= sizes[d];
    }
    TrainConfig cfg = base;
    cfg.steps = grid.steps[digits[0]];
    cfg.learning_rate = grid.learning_rate[digits[1]];
    if (!used_pairs.emplace(cfg.steps, cfg.learning_rate).second) continue;
    cfg.patience = grid.patience[digits[2]];
    cfg.warmup_steps = grid.warmup_steps[digits[3]];
    cfg.weight_decay = grid.weight_decay[digits[4]];
    cfg.drop_rate = grid.drop_rate[digits[5]];
    cfg.seed = derive_seed(seed, out.size());
    cfg.init_seed.reset();
    out.push_back(cfg);
  }
  return out;
}

std::vector<std::size_t> boosting_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("subset_fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Rng rng(derive_seed(seed, "boosting-subset"));
  auto subset = rng.sample_without_replacement(n, k);
  std::sort(subset.begin(), subset.end());
  return subset;
}

namespace {

struct MemberJob {
  Method method = Method::vanilla;
  MethodSettings settings;
  std::vector<std::size_t> subset;  // empty means the full training set
};

EnsembleResult run_members(EnsembleKind kind, const Dataset& train, const Dataset& val,
                           const std::vector<MemberJob>& jobs, const Featurizer& featurizer) {
  require_same_labels(train, val);
  const auto train_data = featurize_dataset(featurizer, train);
  const auto val_data = featurize_dataset(featurizer, val);
  const auto k = train.labels().size();
  std::vector<std::optional<EnsembleMember>> members(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& job = jobs[i];
    const FeaturizedData* data = &train_data;
    FeaturizedData subset;
    if (!job.subset.empty()) {
      for (auto idx : job.subset) {
        subset.features.push_back(train_data.features[idx]);
        subset.labels.push_back(train_data.labels[idx]);
      }
      data = &subset;
    }
    try {
      auto model = train_method(job.method, *data, val_data, k, featurizer.hash_dim(), job.settings);
      members[i] = EnsembleMember{job.method, job.settings.train, std::move(model.params), model.heads,
                                  model.best_val_accuracy, job.subset};
    } catch (const MethodFailure& e) {
      errors[i] = e.what();
    }
  });
  EnsembleResult result;
  result.kind = kind;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (members[i]) result.members.push_back(std::move(*members[i]));
    else result.failures.push_back({i, errors[i]});
  }
  if (result.members.empty()) {
    std::string detail;
    for (const auto& f : result.failures) detail += "; member " + std::to_string(f.index) + ": " + f.message;
    throw MethodFailure("every ensemble member failed" + detail);
  }
  return result;
}

void require_kind(const EnsembleSpec& spec, EnsembleKind kind) {
  spec.validate();
  if (spec.kind != kind) {
    throw ValidationError("ensemble spec is " + std::string(to_string(spec.kind)) + ", expected " +
                          std::string(to_string(kind)));
  }
}

}  // namespace

EnsembleResult train_homogeneous(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                                 const Featurizer& featurizer) {
  require_kind(spec, EnsembleKind::homogeneous);
  auto grid = spec.hyperparameter_grid;
  if (grid.empty()) {
    grid = sample_grid(reference_hyperparameter_grid(), spec.member_count, spec.settings.train, spec.seed);
  }
  std::vector<MemberJob> jobs;
  for (const auto& cfg : grid) {
    MemberJob job;
    job.settings = spec.settings;
    job.settings.train = cfg;
    jobs.push_back(std::move(job));
  }
  return run_members(EnsembleKind::homogeneous, train, val, jobs, featurizer);
}

EnsembleResult train_heterogeneous(const Dataset& train, const Dataset& val,
                                   const EnsembleSpec& spec, const Featurizer& featurizer) {
  require_kind(spec, EnsembleKind::heterogeneous);
  std::vector<MemberJob> jobs;
  for (auto method : spec.member_methods) jobs.push_back({method, spec.settings, {}});
  return run_members(EnsembleKind::heterogeneous, train, val, jobs, featurizer);
}

EnsembleResult train_boosting(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                              const Featurizer& featurizer) {
  require_kind(spec, EnsembleKind::boosting);
  std::vector<MemberJob> jobs;
  for (std::size_t i = 0; i < spec.member_count; ++i) {
    const auto member_seed = spec.member_seeds.empty() ? derive_seed(spec.seed, i) : spec.member_seeds[i];
    MemberJob job;
    job.settings = spec.settings;
    job.settings.train.seed = member_seed;
    job.settings.train.init_seed.reset();
    job.subset = boosting_subset(train.size(), spec.subset_fraction, member_seed);
    if (job.subset.size() < spec.settings.train.batch_size) {
      throw ValidationError("boosting subset of " + std::to_string(job.subset.size()) +
                            " instances is smaller than one batch (" +
                            std::to_string(spec.settings.train.batch_size) + ")");
    }
    jobs.push_back(std::move(job));
  }
  return run_members(EnsembleKind::boosting, train, val, jobs, featurizer);
}

EnsembleResult train_ensemble(const Dataset& train, const Dataset& val, const EnsembleSpec& spec,
                              const Featurizer& featurizer) {
  switch (spec.kind) {
    case EnsembleKind::homogeneous: return train_homogeneous(train, val, spec, featurizer);
    case EnsembleKind::heterogeneous: return train_heterogeneous(train, val, spec, featurizer);
    case EnsembleKind::boosting: return train_boosting(train, val, spec, featurizer);
  }
  throw ValidationError("unknown ensemble kind");
}

ProbVector average_probabilities(std::span<const ProbVector> members) {
  if (members.empty()) throw ValidationError("cannot average an empty ensemble");
  const auto k = members.front().size();
  ProbVector out;
  out.probs.assign(k, 0.0);
  for (const auto& m : members) {
    if (m.size() != k) throw ValidationError("ensemble members disagree on the number of labels");
    for (std::size_t i = 0; i < k; ++i) out.probs[i] += m.probs[i];
  }
  const double count = static_cast<double>(members.size());
  for (auto& p : out.probs) p /= count;
  return out;
}

EnsembleEvaluation predict_ensemble(std::span<const EnsembleMember> members,
                                    const Featurizer& featurizer, const Dataset& dataset) {
  if (members.empty()) throw ValidationError("an ensemble needs at least one member");
  const auto k = dataset.labels().size();
  for (const auto& m : members) {
    if (m.params.num_labels() != k) {
      throw ValidationError("ensemble member has " + std::to_string(m.params.num_labels()) +
                            " labels, dataset has " + std::to_string(k));
    }
  }
  const auto data = featurize_dataset(featurizer, dataset);
  std::vector<EvalResult> per_member;
  for (const auto& m : members) per_member.push_back(evaluate(m.params, data, m.heads));

  EnsembleEvaluation out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    EnsemblePrediction pred;
    for (const auto& r : per_member) pred.member_probs.push_back(r.per_instance[i].probs);
    pred.averaged = average_probabilities(pred.member_probs);
    pred.predicted = pred.averaged.argmax();
    if (pred.predicted == data.labels[i]) ++correct;
    out.predictions.push_back(std::move(pred));
  }
  out.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
  return out;
}

namespace {

nlohmann::json heads_to_json(Heads heads) {
  if (heads.mode == Heads::Mode::all) return "all";
  return heads.head;
}

Heads heads_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "all") return Heads::all();
  return Heads::one(j.get<std::size_t>());
}

}  // namespace

void save_ensemble(const EnsembleResult& ensemble, const Featurizer& featurizer,
                   const LabelSet& labels, const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const auto stem = manifest_path.stem().string();
  nlohmann::ordered_json manifest;
  manifest["format"] = "noisebench-ensemble";
  manifest["version"] = 1;
  manifest["kind"] = std::string(to_string(ensemble.kind));
  manifest["members"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    const auto& m = ensemble.members[i];
    const auto file = stem + "-member-" + std::to_string(i) + ".nbck";
    save_checkpoint({featurizer, labels, m.params}, dir / file);
    nlohmann::ordered_json entry;
    entry["method"] = std::string(to_string(m.method));
    entry["config"] = m.config.to_json();
    entry["seed"] = m.config.seed;
    entry["heads"] = heads_to_json(m.heads);
    entry["best_val_accuracy"] = m.best_val_accuracy;
    entry["subset_size"] = m.subset.size();
    entry["checkpoint"] = file;
    manifest["members"].push_back(entry);
  }
  manifest["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : ensemble.failures) {
    manifest["failures"].push_back({{"index", f.index}, {"message", f.message}});
  }
  std::ofstream out(manifest_path);
  if (!out) throw ValidationError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

LoadedEnsemble load_ensemble(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "noisebench-ensemble") {
    throw ValidationError(manifest_path.string() + " is not an ensemble manifest");
  }
  LoadedEnsemble out;
  try {
    out.kind = ensemble_kind_from_string(manifest.at("kind").get<std::string>());
    const auto dir = manifest_path.parent_path();
    bool first = true;
    for (const auto& entry : manifest.at("members")) {
      auto cp = load_checkpoint(dir / entry.at("checkpoint").get<std::string>());
      if (first) {
        out.featurizer = cp.featurizer;
        out.labels = cp.labels;
        first = false;
      } else if (!(cp.featurizer == out.featurizer) || !(cp.labels == out.labels)) {
        throw ValidationError("ensemble members use different featurizers or label sets");
      }
      EnsembleMember m;
      m.method = method_from_string(entry.at("method").get<std::string>());
      m.config = TrainConfig::from_json(entry.at("config"));
      m.params = std::move(cp.params);
      m.heads = heads_from_json(entry.at("heads"));
      m.best_val_accuracy = entry.value("best_val_accuracy", 0.0);
      out.members.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (out.members.empty()) throw ValidationError("ensemble manifest lists no members");
  return out;
}

}  // namespace noisebench
