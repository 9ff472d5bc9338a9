#include "noisebench/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>

#include "format.hpp"
#include "noisebench/error.hpp"
#include "noisebench/parallel.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

nlohmann::json regime_to_json(const RegimeSpec& r) {
  return {{"name", r.name},
          {"num_classes", r.num_classes},
          {"train_size", r.train_size},
          {"validation_size", r.validation_size},
          {"test_size", r.test_size},
          {"vocab_per_class", r.vocab_per_class},
          {"overlap", r.overlap},
          {"mean_length", r.corpus.mean_length},
          {"min_length", r.corpus.min_length},
          {"zipf_exponent", r.corpus.zipf_exponent},
          {"class_weights", r.corpus.class_weights},
          {"annotators", r.corpus.annotators},
          {"annotator_error", r.corpus.annotator_error},
          {"class_noise", r.class_noise}};
}

RegimeSpec regime_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("synthetic dataset spec must be a JSON object");
  RegimeSpec r;
  r.name = "custom";
  try {
    if (j.contains("preset")) r = regime_by_name(j.at("preset").get<std::string>());
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      if (key == "name") r.name = value.get<std::string>();
      else if (key == "num_classes") r.num_classes = value.get<std::size_t>();
      else if (key == "train_size") r.train_size = value.get<std::size_t>();
      else if (key == "validation_size") r.validation_size = value.get<std::size_t>();
      else if (key == "test_size") r.test_size = value.get<std::size_t>();
      else if (key == "vocab_per_class") r.vocab_per_class = value.get<std::size_t>();
      else if (key == "overlap") r.overlap = value.get<double>();
      else if (key == "mean_length") r.corpus.mean_length = value.get<double>();
      else if (key == "min_length") r.corpus.min_length = value.get<std::size_t>();
      else if (key == "zipf_exponent") r.corpus.zipf_exponent = value.get<double>();
      else if (key == "class_weights") r.corpus.class_weights = value.get<std::vector<double>>();
      else if (key == "annotators") r.corpus.annotators = value.get<std::size_t>();
      else if (key == "annotator_error") r.corpus.annotator_error = value.get<double>();
      else if (key == "class_noise") r.class_noise = value.get<std::vector<double>>();
      else throw ValidationError("unknown synthetic dataset field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid synthetic dataset spec: ") + e.what());
  }
  if (r.num_classes < 2) throw ValidationError("synthetic datasets need at least 2 classes");
  if (r.train_size == 0 || r.validation_size == 0 || r.test_size == 0) {
    throw ValidationError("synthetic datasets need non-empty train, validation and test splits");
  }
  return r;
}

nlohmann::json DatasetSource::to_json() const {
  if (synthetic) return {{"synthetic", regime_to_json(*synthetic)}};
  nlohmann::json f{{"train", files->train},
                   {"validation", files->validation},
                   {"test", files->test},
                   {"format", files->format == DatasetFormat::jsonl ? "jsonl" : "tsv"}};
  if (files->labels) f["labels"] = *files->labels;
  return {{"files", f}};
}

DatasetSource DatasetSource::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("dataset source must be a JSON object");
  DatasetSource src;
  try {
    if (j.contains("preset")) {
      src.synthetic = regime_from_json(j);
    } else if (j.contains("synthetic")) {
      if (j.size() != 1) throw ValidationError("dataset source takes exactly one of synthetic or files");
      src.synthetic = regime_from_json(j.at("synthetic"));
    } else if (j.contains("files")) {
      if (j.size() != 1) throw ValidationError("dataset source takes exactly one of synthetic or files");
      const auto& f = j.at("files");
      FileSource fs;
      for (const auto& [key, value] : f.items()) {
        if (key == "train") fs.train = value.get<std::string>();
        else if (key == "validation") fs.validation = value.get<std::string>();
        else if (key == "test") fs.test = value.get<std::string>();
        else if (key == "format") fs.format = format_from_string(value.get<std::string>());
        else if (key == "labels") fs.labels = value.get<std::string>();
        else throw ValidationError("unknown dataset file field '" + key + "'");
      }
      if (fs.train.empty() || fs.validation.empty()) {
        throw ValidationError("file datasets need train and validation paths");
      }
      if (fs.test.empty()) {
        throw ValidationError("file datasets need a test split with gold labels for evaluation");
      }
      src.files = fs;
    } else {
      throw ValidationError("dataset source needs \"preset\", \"synthetic\" or \"files\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid dataset source: ") + e.what());
  }
  return src;
}

std::string NoiseSetting::label() const {
  std::ostringstream out;
  switch (kind) {
    case NoiseKind::none: return "no noise";
    case NoiseKind::uniform_random: out << "uniform " << level * 100.0 << '%'; break;
    case NoiseKind::feature_dependent: return "rules";
    case NoiseKind::pseudo_real_world: out << "annotation " << level * 100.0 << '%'; break;
  }
  return out.str();
}

nlohmann::json NoiseSetting::to_json() const {
  nlohmann::json j{{"kind", std::string(to_string(kind))}, {"level", level}};
  if (rules) j["rules"] = rules->to_json();
  return j;
}

NoiseSetting NoiseSetting::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("noise setting must be a JSON object");
  NoiseSetting n;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") n.kind = noise_kind_from_string(value.get<std::string>());
      else if (key == "level") n.level = value.get<double>();
      else if (key == "rules") n.rules = RuleLabeler::from_json(value);
      else throw ValidationError("unknown noise field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid noise setting: ") + e.what());
  }
  if (!(n.level >= 0.0 && n.level <= 1.0)) throw ValidationError("noise level must lie in [0, 1]");
  return n;
}

std::string_view to_string(ExperimentMethod method) {
  switch (method) {
    case ExperimentMethod::vanilla: return "vanilla";
    case ExperimentMethod::coteaching: return "coteaching";
    case ExperimentMethod::ceta: return "ceta";
    case ExperimentMethod::hme: return "hme";
    case ExperimentMethod::hte: return "hte";
    case ExperimentMethod::boosting: return "boosting";
    case ExperimentMethod::nc: return "nc";
  }
  return "vanilla";
}

ExperimentMethod experiment_method_from_string(std::string_view name) {
  for (auto m : {ExperimentMethod::vanilla, ExperimentMethod::coteaching, ExperimentMethod::ceta,
                 ExperimentMethod::hme, ExperimentMethod::hte, ExperimentMethod::boosting,
                 ExperimentMethod::nc}) {
    if (name == to_string(m)) return m;
  }
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected vanilla, coteaching, ceta, hme, hte, boosting or nc)");
}

namespace {

EnsembleKind ensemble_kind_for(ExperimentMethod m) {
  switch (m) {
    case ExperimentMethod::hme: return EnsembleKind::homogeneous;
    case ExperimentMethod::hte: return EnsembleKind::heterogeneous;
    default: return EnsembleKind::boosting;
  }
}

bool is_ensemble(ExperimentMethod m) {
  return m == ExperimentMethod::hme || m == ExperimentMethod::hte || m == ExperimentMethod::boosting;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (runs == 0) throw ValidationError("runs must be at least 1");
  if (!dataset.synthetic && !dataset.files) throw ValidationError("experiment needs a dataset source");
  settings.train.validate();
  settings.ceta.validate();
  if (settings.coteach) settings.coteach->validate();
  if (is_ensemble(method)) {
    auto spec = ensemble;
    spec.kind = ensemble_kind_for(method);
    if (spec.kind == EnsembleKind::heterogeneous) spec.member_count = spec.member_methods.size();
    spec.validate();
  }
  if (method == ExperimentMethod::nc) clean.validate();
  if (noise.kind == NoiseKind::feature_dependent && !noise.rules &&
      !(dataset.synthetic && !dataset.synthetic->class_noise.empty())) {
    throw ValidationError("feature_dependent noise needs \"rules\" or a preset with rule noise");
  }
  if (noise.kind == NoiseKind::pseudo_real_world && dataset.synthetic &&
      dataset.synthetic->corpus.annotators == 0) {
    throw ValidationError("pseudo_real_world noise needs simulated annotators (set \"annotators\")");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"dataset", dataset.to_json()},    {"noise", noise.to_json()},
          {"method", std::string(to_string(method))}, {"settings", settings.to_json()},
          {"ensemble", ensemble.to_json()},   {"clean", clean.to_json()},
          {"featurizer", featurizer.to_json()}, {"runs", runs},
          {"base_seed", base_seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  bool has_dataset = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "dataset") {
        cfg.dataset = DatasetSource::from_json(value);
        has_dataset = true;
      } else if (key == "noise") cfg.noise = NoiseSetting::from_json(value);
      else if (key == "method") cfg.method = experiment_method_from_string(value.get<std::string>());
      else if (key == "settings") cfg.settings = MethodSettings::from_json(value);
      else if (key == "ensemble") cfg.ensemble = EnsembleSpec::from_json(value);
      else if (key == "clean") cfg.clean = CleanConfig::from_json(value);
      else if (key == "featurizer") cfg.featurizer = Featurizer::from_json(value);
      else if (key == "runs") cfg.runs = value.get<std::size_t>();
      else if (key == "base_seed") cfg.base_seed = value.get<std::uint64_t>();
      else throw ValidationError("unknown experiment config field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid experiment config: ") + e.what());
  }
  if (!has_dataset) throw ValidationError("experiment config needs a \"dataset\" section");
  if (!j.contains("featurizer")) cfg.featurizer = Featurizer(1u << 14);
  cfg.validate();
  return cfg;
}

RunData prepare_run_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunData data;
  std::optional<RuleLabeler> labeler = cfg.noise.rules;
  if (cfg.dataset.synthetic) {
    auto preset = build_preset(*cfg.dataset.synthetic, seed);
    data.train = std::move(preset.train);
    data.validation = std::move(preset.validation);
    data.test = std::move(preset.test);
    if (!labeler && !preset.labeler.rules.empty()) labeler = std::move(preset.labeler);
  } else {
    const auto& f = *cfg.dataset.files;
    std::optional<std::filesystem::path> labels;
    if (f.labels) labels = *f.labels;
    data.train = load_dataset(f.train, f.format, labels);
    data.validation = load_dataset(f.validation, f.format, labels);
    data.test = load_dataset(f.test, f.format, labels);
    require_same_labels(data.train, data.validation);
    require_same_labels(data.train, data.test);
    data.test.require_gold_labels("clean-test evaluation");
    data.test = data.test.with_gold_as_observed();
  }
  for (const auto& inst : data.test.instances()) {
    if (!inst.gold_label || *inst.gold_label != inst.observed_label) {
      throw ValidationError("test split observed labels must equal gold labels");
    }
  }

  const auto train_seed = derive_seed(seed, "train-noise");
  const auto val_seed = derive_seed(seed, "validation-noise");
  switch (cfg.noise.kind) {
    case NoiseKind::none: break;
    case NoiseKind::uniform_random:
      data.train = inject_uniform_noise(data.train, cfg.noise.level, train_seed);
      data.validation = inject_uniform_noise(data.validation, cfg.noise.level, val_seed);
      break;
    case NoiseKind::feature_dependent:
      if (!labeler) throw ValidationError("feature_dependent noise needs rules");
      data.train = inject_rule_noise(data.train, *labeler).dataset;
      data.validation = inject_rule_noise(data.validation, *labeler).dataset;
      break;
    case NoiseKind::pseudo_real_world:
      data.train = inject_annotation_noise(data.train, cfg.noise.level, train_seed);
      data.validation = inject_annotation_noise(data.validation, cfg.noise.level, val_seed);
      break;
  }
  if (data.train.has_gold_labels()) data.train_matrix = noise_matrix(data.train);
  return data;
}

RunRecord run_single(const ExperimentConfig& cfg, std::size_t run) {
  RunRecord record;
  record.run = run;
  record.seed = cfg.base_seed + run;
  const auto data = prepare_run_data(cfg, record.seed);
  if (data.train_matrix) record.train_noise = data.train_matrix->noise_level();

  MethodSettings settings = cfg.settings;
  settings.train.seed = record.seed;
  if (cfg.method == ExperimentMethod::coteaching && !settings.coteach) {
    std::optional<double> estimate;
    if (cfg.noise.kind == NoiseKind::uniform_random || cfg.noise.kind == NoiseKind::pseudo_real_world) {
      estimate = cfg.noise.level;
    }
    settings.coteach = default_coteach_schedule(settings.train, estimate);
  }
  const auto& fz = cfg.featurizer;
  try {
    switch (cfg.method) {
      case ExperimentMethod::vanilla:
      case ExperimentMethod::coteaching:
      case ExperimentMethod::ceta: {
        const Method m = cfg.method == ExperimentMethod::vanilla      ? Method::vanilla
                         : cfg.method == ExperimentMethod::coteaching ? Method::coteaching
                                                                      : Method::ceta;
        require_same_labels(data.train, data.validation);
        auto model = train_method(m, featurize_dataset(fz, data.train),
                                  featurize_dataset(fz, data.validation), data.train.num_labels(),
                                  fz.hash_dim(), settings);
        record.test_accuracy = accuracy(model.params, featurize_dataset(fz, data.test), model.heads);
        break;
      }
      case ExperimentMethod::hme:
      case ExperimentMethod::hte:
      case ExperimentMethod::boosting: {
        auto spec = cfg.ensemble;
        spec.kind = ensemble_kind_for(cfg.method);
        if (spec.kind == EnsembleKind::heterogeneous) spec.member_count = spec.member_methods.size();
        spec.seed = record.seed;
        spec.settings = settings;
        const auto ensemble = train_ensemble(data.train, data.validation, spec, fz);
        record.test_accuracy = predict_ensemble(ensemble.members, fz, data.test).accuracy;
        break;
      }
      case ExperimentMethod::nc: {
        auto clean = cfg.clean;
        clean.seed = record.seed;
        if (clean.threshold) {
          auto result = clean_dataset(data.train, data.validation, clean, settings.train, fz);
          record.threshold = result.report.threshold_used;
          record.cleaned_size = result.cleaned.size();
          record.cleaned_noise = result.report.noise_after;
          record.test_accuracy =
              retrain_on_cleaned(result.cleaned, data.validation, data.test, settings.train, fz)
                  .test_accuracy;
        } else {
          auto tuned = tune_threshold(data.train, data.validation, clean, settings.train, fz);
          record.threshold = tuned.threshold;
          record.cleaned_size = tuned.result.cleaned.size();
          record.cleaned_noise = tuned.result.report.noise_after;
          // the tuning already retrained vanilla on the selected cleaned set
          record.test_accuracy = accuracy(tuned.model, featurize_dataset(fz, data.test), Heads::one(0));
        }
        break;
      }
    }
  } catch (const MethodFailure& e) {
    record.error = e.what();
  }
  return record;
}

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = cfg.to_json();
  report.runs.resize(cfg.runs);
  parallel_for(cfg.runs, [&](std::size_t r) { report.runs[r] = run_single(cfg, r); });

  std::vector<double> accuracies, train_noise, cleaned_noise;
  std::string last_error;
  for (const auto& run : report.runs) {
    if (run.test_accuracy) accuracies.push_back(*run.test_accuracy);
    else last_error = run.error.value_or("unknown failure");
    if (run.train_noise) train_noise.push_back(*run.train_noise);
    if (run.cleaned_noise) cleaned_noise.push_back(*run.cleaned_noise);
  }
  if (accuracies.empty()) throw MethodFailure("every run failed; last error: " + last_error);
  report.partial = accuracies.size() != report.runs.size();
  std::tie(report.mean, report.std) = mean_and_std(accuracies);
  if (!train_noise.empty()) report.mean_train_noise = mean_and_std(train_noise).first;
  if (!cleaned_noise.empty()) report.mean_cleaned_noise = mean_and_std(cleaned_noise).first;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::ordered_json ExperimentReport::to_json(bool reproducible) const {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    nlohmann::ordered_json run;
    run["run"] = r.run;
    run["seed"] = r.seed;
    if (r.test_accuracy) run["test_accuracy"] = *r.test_accuracy;
    if (r.error) run["error"] = *r.error;
    if (r.train_noise) run["train_noise"] = *r.train_noise;
    if (r.cleaned_noise) run["cleaned_noise"] = *r.cleaned_noise;
    if (r.threshold) run["threshold"] = *r.threshold;
    if (r.cleaned_size) run["cleaned_size"] = *r.cleaned_size;
    j["runs"].push_back(run);
  }
  j["mean"] = mean;
  j["std"] = std;
  j["partial"] = partial;
  if (mean_train_noise) j["mean_train_noise"] = *mean_train_noise;
  if (mean_cleaned_noise) j["mean_cleaned_noise"] = *mean_cleaned_noise;
  if (!reproducible) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string format_cell(const std::optional<ComparisonCell>& cell) {
  if (!cell) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f%s", cell->mean * 100.0, cell->std * 100.0,
                cell->partial ? "*" : "");
  return buf;
}

}  // namespace

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "method,setting,mean,std,partial\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r][c];
      if (!cell) continue;
      out << rows[r] << ',' << columns[c] << ',' << detail::shortest(cell->mean) << ',' << detail::shortest(cell->std) << ','
          << (cell->partial ? "true" : "false") << '\n';
    }
  }
  return out.str();
}

std::string ComparisonTable::to_text() const {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"method"});
  for (const auto& c : columns) grid.back().push_back(c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    grid.push_back({rows[r]});
    for (std::size_t c = 0; c < columns.size(); ++c) grid.back().push_back(format_cell(cells[r][c]));
  }
  std::vector<std::size_t> widths(columns.size() + 1, 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));
  }
  std::ostringstream out;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(widths[c] - display_width(line[c]) + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

ComparisonTable compare_methods(const std::vector<ExperimentConfig>& cfgs, bool clean_baseline) {
  if (cfgs.empty()) throw ValidationError("compare needs at least one experiment");
  const auto& first = cfgs.front();
  for (const auto& cfg : cfgs) {
    cfg.validate();
    if (cfg.dataset.to_json() != first.dataset.to_json() || !(cfg.featurizer == first.featurizer) ||
        cfg.runs != first.runs || cfg.base_seed != first.base_seed) {
      throw ValidationError("compared experiments must share dataset, featurizer, runs and base_seed");
    }
  }
  ComparisonTable table;
  std::map<std::string, std::size_t> column_of, row_of;
  std::vector<std::pair<std::size_t, std::size_t>> position;
  if (clean_baseline) {
    table.rows.push_back("clean data vanilla");
  }
  for (const auto& cfg : cfgs) {
    const auto col_key = cfg.noise.to_json().dump();
    const auto row_key = std::string(to_string(cfg.method));
    auto [cit, cnew] = column_of.emplace(col_key, table.columns.size());
    if (cnew) table.columns.push_back(cfg.noise.label());
    auto [rit, rnew] = row_of.emplace(row_key, table.rows.size());
    if (rnew) table.rows.push_back(row_key);
    position.emplace_back(rit->second, cit->second);
  }
  table.cells.assign(table.rows.size(),
                     std::vector<std::optional<ComparisonCell>>(table.columns.size()));
  for (std::size_t i = 0; i < position.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (position[k] == position[i]) {
        throw ValidationError("two experiments share method '" + table.rows[position[i].first] +
                              "' and noise setting '" + table.columns[position[i].second] + "'");
      }
    }
  }

  std::vector<ExperimentConfig> jobs = cfgs;
  if (clean_baseline) {
    auto baseline = first;
    baseline.method = ExperimentMethod::vanilla;
    baseline.noise = NoiseSetting{};
    jobs.push_back(baseline);
  }
  std::vector<ExperimentReport> reports(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) { reports[i] = run_experiment(jobs[i]); });

  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto [r, c] = position[i];
    table.cells[r][c] = ComparisonCell{reports[i].mean, reports[i].std, reports[i].partial};
  }
  if (clean_baseline) {
    const auto& base = reports.back();
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      table.cells[0][c] = ComparisonCell{base.mean, base.std, base.partial};
    }
  }
  return table;
}

std::vector<ExperimentConfig> comparison_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("comparison config must be a JSON object");
  std::vector<ExperimentConfig> out;
  try {
    if (j.contains("experiments")) {
      for (const auto& e : j.at("experiments")) out.push_back(ExperimentConfig::from_json(e));
      return out;
    }
    const auto& base = j.at("base");
    const auto methods = j.at("methods");
    const auto noises = j.contains("noise") ? j.at("noise") : nlohmann::json::array({base.value("noise", nlohmann::json{{"kind", "none"}})});
    for (const auto& m : methods) {
      for (const auto& n : noises) {
        auto e = base;
        e["method"] = m;
        e["noise"] = n;
        out.push_back(ExperimentConfig::from_json(e));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid comparison config: ") + e.what());
  }
  if (out.empty()) throw ValidationError("comparison config lists no experiments");
  return out;
}

nlohmann::ordered_json cleaning_plot_json(const std::vector<ThresholdCandidate>& diagnostics,
                                          const std::optional<NoiseMatrix>& before,
                                          const std::optional<NoiseMatrix>& after) {
  nlohmann::ordered_json j;
  j["diagnostics"] = nlohmann::ordered_json::array();
  for (const auto& d : diagnostics) {
    nlohmann::ordered_json row;
    row["threshold"] = d.threshold;
    row["cleaned_size"] = d.cleaned_size;
    row["val_accuracy"] = d.val_accuracy ? nlohmann::ordered_json(*d.val_accuracy) : nullptr;
    row["noise_after"] = d.noise_after ? nlohmann::ordered_json(*d.noise_after) : nullptr;
    j["diagnostics"].push_back(row);
  }
  j["matrix_before"] = before ? nlohmann::ordered_json::parse(before->to_json().dump()) : nullptr;
  j["matrix_after"] = after ? nlohmann::ordered_json::parse(after->to_json().dump()) : nullptr;
  return j;
}

PlotData emit_plot_data(const nlohmann::json& report) {
  PlotData out;
  std::vector<ThresholdCandidate> diagnostics;
  try {
    if (report.contains("diagnostics")) {
      for (const auto& d : report.at("diagnostics")) {
        ThresholdCandidate c;
        c.threshold = d.at("threshold").get<double>();
        c.cleaned_size = d.at("cleaned_size").get<std::size_t>();
        if (d.contains("val_accuracy") && !d["val_accuracy"].is_null()) c.val_accuracy = d["val_accuracy"].get<double>();
        if (d.contains("noise_after") && !d["noise_after"].is_null()) c.noise_after = d["noise_after"].get<double>();
        diagnostics.push_back(c);
      }
    }
    out.threshold_series = threshold_series_csv(diagnostics);
    if (report.contains("matrix_before") && !report["matrix_before"].is_null()) {
      out.matrix_before = NoiseMatrix::from_json(report["matrix_before"]).to_csv();
    }
    if (report.contains("matrix_after") && !report["matrix_after"].is_null()) {
      out.matrix_after = NoiseMatrix::from_json(report["matrix_after"]).to_csv();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid cleaning report: ") + e.what());
  }
  return out;
}

}  // namespace noisebench
