// noisebench command-line front end.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noisebench/checkpoint.hpp"
#include "noisebench/cleaning.hpp"
#include "noisebench/dataset.hpp"
#include "noisebench/ensemble.hpp"
#include "noisebench/error.hpp"
#include "noisebench/harness.hpp"
#include "noisebench/noise.hpp"
#include "noisebench/parallel.hpp"
#include "noisebench/presets.hpp"
#include "noisebench/trainers.hpp"

namespace nb = noisebench;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nb::ValidationError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw nb::ValidationError(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nb::ValidationError("cannot write " + path.string());
  out << text;
}

nb::DatasetFormat format_for(const std::string& flag, const std::string& path) {
  return flag.empty() ? nb::format_from_path(path) : nb::format_from_string(flag);
}

nb::Dataset load(const std::string& path, const std::string& format, const std::string& labels) {
  std::optional<fs::path> labels_path;
  if (!labels.empty()) labels_path = labels;
  return nb::load_dataset(path, format_for(format, path), labels_path);
}

// Trainer flags shared by train, clean and ensemble.
struct TrainFlags {
  std::string settings_file;
  std::optional<std::size_t> steps, patience, warmup, batch_size, eval_every, hidden;
  std::optional<double> lr, weight_decay, drop_rate;
  std::uint64_t seed = 0;
  std::optional<double> tau, lambda_w;
  std::optional<std::size_t> ramp_steps;
  std::string consensus_rule;
  std::size_t hash_dim = nb::Featurizer::default_hash_dim;

  void add(CLI::App* app) {
    app->add_option("--settings", settings_file, "JSON file with train/coteach/ceta settings");
    app->add_option("--steps", steps, "Maximum SGD steps");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--patience", patience, "Evaluations without improvement before stopping");
    app->add_option("--warmup", warmup, "Linear warm-up steps");
    app->add_option("--weight-decay", weight_decay, "L2 weight decay");
    app->add_option("--drop-rate", drop_rate, "Dropout on the hidden layer");
    app->add_option("--batch-size", batch_size, "Minibatch size");
    app->add_option("--eval-every", eval_every, "Steps between validation evaluations");
    app->add_option("--hidden", hidden, "Hidden layer width");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--tau", tau, "Co-teaching maximum forget rate");
    app->add_option("--ramp-steps", ramp_steps, "Co-teaching forget-rate ramp length");
    app->add_option("--lambda-w", lambda_w, "CETA distance weight");
    app->add_option("--consensus-rule", consensus_rule, "CETA rule: heads_agree or heads_agree_with_label");
    app->add_option("--hash-dim", hash_dim, "Feature hashing dimension (power of two)");
  }

  nb::MethodSettings settings() const {
    nb::MethodSettings s;
    if (!settings_file.empty()) s = nb::MethodSettings::from_json(read_json(settings_file));
    auto& t = s.train;
    if (steps) t.steps = *steps;
    if (lr) t.learning_rate = *lr;
    if (patience) t.patience = *patience;
    if (warmup) t.warmup_steps = *warmup;
    if (weight_decay) t.weight_decay = *weight_decay;
    if (drop_rate) t.drop_rate = *drop_rate;
    if (batch_size) t.batch_size = *batch_size;
    if (eval_every) t.eval_every = *eval_every;
    if (hidden) t.hidden_size = *hidden;
    t.seed = seed;
    t.validate();
    if (tau || ramp_steps) {
      auto sched = s.coteach.value_or(nb::default_coteach_schedule(t));
      if (tau) sched.tau = *tau;
      if (ramp_steps) sched.ramp_steps = *ramp_steps;
      sched.validate();
      s.coteach = sched;
    }
    if (lambda_w) s.ceta.lambda_w = *lambda_w;
    if (!consensus_rule.empty()) s.ceta.consensus_rule = nb::consensus_rule_from_string(consensus_rule);
    s.ceta.validate();
    return s;
  }

  nb::Featurizer featurizer() const { return nb::Featurizer(hash_dim); }
};

struct DataFlags {
  std::string train, val, test, format, labels;

  void add(CLI::App* app, bool need_test) {
    app->add_option("--train", train, "Training split")->required();
    app->add_option("--val", val, "Validation split (noisy labels)")->required();
    auto* t = app->add_option("--test", test, "Clean test split");
    if (need_test) t->required();
    app->add_option("--format", format, "jsonl or tsv (default: from extension)");
    app->add_option("--labels", labels, "Label list, one per line");
  }
};

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_gen(const std::string& preset, std::size_t classes, std::size_t size, std::size_t vocab,
            double overlap, const nb::CorpusOptions& options, const std::vector<double>& split,
            std::uint64_t seed, const std::string& out_dir, const std::string& format_name) {
  nb::RegimeSpec regime;
  if (!preset.empty()) {
    regime = nb::regime_by_name(preset);
  } else {
    if (split.size() != 3) throw nb::ValidationError("--split needs three fractions");
    nb::SplitSpec spec{split[0], split[1], split[2]};
    spec.validate();
    regime.name = "custom";
    regime.num_classes = classes;
    regime.vocab_per_class = vocab;
    regime.overlap = overlap;
    regime.corpus = options;
    auto part = [&](double f) {
      return f > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * size))) : 0;
    };
    regime.validation_size = part(split[1]);
    regime.test_size = part(split[2]);
    if (regime.validation_size + regime.test_size >= size) {
      throw nb::ValidationError("--size too small for the requested split");
    }
    regime.train_size = size - regime.validation_size - regime.test_size;
  }
  const auto format = nb::format_from_string(format_name);
  const std::string ext = format == nb::DatasetFormat::jsonl ? ".jsonl" : ".tsv";
  auto data = nb::build_preset(regime, seed);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  nb::save_dataset(data.train, dir / ("train" + ext), format);
  nb::save_dataset(data.validation, dir / ("validation" + ext), format);
  nb::save_dataset(data.test, dir / ("test" + ext), format);
  nb::save_labels(data.train.labels(), dir / "labels.txt");
  nlohmann::ordered_json summary;
  summary["regime"] = nb::regime_to_json(regime);
  summary["seed"] = seed;
  summary["train"] = data.train.size();
  summary["validation"] = data.validation.size();
  summary["test"] = data.test.size();
  if (!data.labeler.rules.empty()) {
    write_text(dir / "rules.json", data.labeler.to_json().dump(2) + "\n");
    summary["rules"] = (dir / "rules.json").string();
  }
  print_json(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisebench: label-noise experiments for text classification"};
  app.set_config("--config", "", "TOML file; a [subcommand] section sets that subcommand's flags");
  app.require_subcommand(1);
  std::optional<std::size_t> workers;
  app.add_option("--workers", workers, "Concurrent trainings (default: NOISEBENCH_WORKERS or cores)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus split into train/validation/test");
  std::string gen_preset, gen_out, gen_format = "jsonl";
  std::size_t gen_classes = 5, gen_size = 2000, gen_vocab = 40;
  double gen_overlap = 0.0;
  std::vector<double> gen_split{0.8, 0.1, 0.1};
  std::uint64_t gen_seed = 0;
  nb::CorpusOptions gen_options;
  gen->add_option("--preset", gen_preset, "yoruba-like, hausa-like or separable");
  gen->add_option("--classes", gen_classes, "Number of classes");
  gen->add_option("--size", gen_size, "Total number of texts");
  gen->add_option("--vocab", gen_vocab, "Vocabulary size per class");
  gen->add_option("--overlap", gen_overlap, "Vocabulary overlap between neighbouring classes");
  gen->add_option("--mean-length", gen_options.mean_length, "Mean tokens per text");
  gen->add_option("--min-length", gen_options.min_length, "Minimum tokens per text");
  gen->add_option("--zipf", gen_options.zipf_exponent, "Zipf exponent of token frequencies");
  gen->add_option("--class-weights", gen_options.class_weights, "Relative class frequencies")->delimiter(',');
  gen->add_option("--annotators", gen_options.annotators, "Simulated annotations per text");
  gen->add_option("--annotator-error", gen_options.annotator_error, "Annotator error probability");
  gen->add_option("--split", gen_split, "train,validation,test fractions")->delimiter(',');
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--format", gen_format, "jsonl or tsv");
  gen->configurable();

  // noise
  auto* noise = app.add_subcommand("noise", "Inject label noise into a dataset");
  std::string noise_in, noise_out, noise_kind = "uniform_random", noise_rules, noise_format, noise_labels,
                                   noise_matrix;
  double noise_level = 0.0;
  std::uint64_t noise_seed = 0;
  noise->add_option("--input", noise_in, "Dataset with gold labels")->required();
  noise->add_option("--out", noise_out, "Noisy dataset path")->required();
  noise->add_option("--kind", noise_kind, "none, uniform_random, feature_dependent or pseudo_real_world");
  noise->add_option("--level", noise_level, "Target noise level");
  noise->add_option("--seed", noise_seed, "Random seed");
  noise->add_option("--rules", noise_rules, "Gazetteer JSON for feature_dependent noise");
  noise->add_option("--format", noise_format, "jsonl or tsv (default: from extension)");
  noise->add_option("--labels", noise_labels, "Label list, one per line");
  noise->add_option("--matrix", noise_matrix, "Write the gold-vs-observed matrix as CSV");
  noise->configurable();

  // train
  auto* train = app.add_subcommand("train", "Train one method and report accuracy");
  DataFlags train_data;
  TrainFlags train_flags;
  std::string train_method = "vanilla", train_out, train_history;
  train_data.add(train, false);
  train_flags.add(train);
  train->add_option("--method", train_method, "vanilla, coteaching or ceta");
  train->add_option("--out", train_out, "Checkpoint path (.json for JSON, otherwise binary)");
  train->add_option("--history", train_history, "Write the training history as CSV");
  train->configurable();

  // clean
  auto* clean = app.add_subcommand("clean", "N-fold loss-threshold cleaning of a training set");
  DataFlags clean_data;
  TrainFlags clean_flags;
  std::size_t clean_folds = 5;
  std::optional<double> clean_threshold;
  std::string clean_grid, clean_out, clean_report;
  clean_data.add(clean, false);
  clean_flags.add(clean);
  clean->add_option("--folds", clean_folds, "Number of folds");
  clean->add_option("--threshold", clean_threshold, "Fixed loss threshold (omit to tune)");
  clean->add_option("--grid", clean_grid, "Tuning grid: comma-separated thresholds or 'reference' (default: loss deciles)");
  clean->add_option("--out", clean_out, "Cleaned dataset path");
  clean->add_option("--report", clean_report, "Cleaning report JSON");
  clean->configurable();

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "Train or apply a probability-averaging ensemble");
  DataFlags ens_data;
  TrainFlags ens_flags;
  std::string ens_kind = "homogeneous", ens_out, ens_manifest, ens_predict_data, ens_predictions;
  std::optional<std::size_t> ens_members;
  double ens_fraction = 0.8;
  std::vector<std::string> ens_methods;
  ens->add_option("--train", ens_data.train, "Training split");
  ens->add_option("--val", ens_data.val, "Validation split (noisy labels)");
  ens->add_option("--test", ens_data.test, "Clean test split");
  ens->add_option("--format", ens_data.format, "jsonl or tsv (default: from extension)");
  ens->add_option("--labels", ens_data.labels, "Label list, one per line");
  ens_flags.add(ens);
  ens->add_option("--kind", ens_kind, "homogeneous (hme), heterogeneous (hte) or boosting");
  ens->add_option("--members", ens_members, "Member count (homogeneous, boosting)");
  ens->add_option("--fraction", ens_fraction, "Boosting subset fraction");
  ens->add_option("--methods", ens_methods, "Heterogeneous member methods")->delimiter(',');
  ens->add_option("--out", ens_out, "Manifest path; member checkpoints are written beside it");
  ens->add_option("--manifest", ens_manifest, "Score an existing manifest instead of training");
  ens->add_option("--data", ens_predict_data, "Dataset to score with --manifest");
  ens->add_option("--predictions", ens_predictions, "Write per-instance averaged probabilities as CSV");
  ens->configurable();

  // compare
  auto* cmp = app.add_subcommand("compare", "Run several experiments and print a comparison table");
  std::string cmp_file, cmp_csv, cmp_text;
  bool cmp_no_clean = false;
  cmp->add_option("--experiments", cmp_file, "Comparison JSON")->required();
  cmp->add_option("--csv", cmp_csv, "Write the table as CSV");
  cmp->add_option("--text", cmp_text, "Write the aligned text table");
  cmp->add_flag("--no-clean-baseline", cmp_no_clean, "Skip the clean-data vanilla row");
  cmp->configurable();

  // plotdata
  auto* plot = app.add_subcommand("plotdata", "Turn a cleaning report into plot-ready CSV files");
  std::string plot_report, plot_dir;
  plot->add_option("--report", plot_report, "Report JSON written by 'clean --report'")->required();
  plot->add_option("--out-dir", plot_dir, "Output directory")->required();
  plot->configurable();

  // run
  auto* run = app.add_subcommand("run", "Run a multi-seed experiment from a JSON config");
  std::string run_file, run_out;
  bool run_reproducible = false;
  run->add_option("--experiment", run_file, "Experiment JSON")->required();
  run->add_option("--out", run_out, "Report path (default: stdout)");
  run->add_flag("--reproducible", run_reproducible, "Leave out wall-clock time");
  run->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (workers) {
      if (*workers == 0) throw nb::ValidationError("--workers must be at least 1");
      nb::set_worker_limit(*workers);
    }

    if (gen->parsed()) {
      return cmd_gen(gen_preset, gen_classes, gen_size, gen_vocab, gen_overlap, gen_options, gen_split,
                     gen_seed, gen_out, gen_format);
    }

    if (noise->parsed()) {
      auto data = load(noise_in, noise_format, noise_labels);
      nb::NoiseSpec spec;
      spec.kind = nb::noise_kind_from_string(noise_kind);
      spec.target_level = noise_level;
      spec.seed = noise_seed;
      if (!noise_rules.empty()) spec.labeler = nb::RuleLabeler::from_json(read_json(noise_rules));
      nlohmann::ordered_json summary;
      nb::Dataset noisy;
      if (spec.kind == nb::NoiseKind::feature_dependent) {
        if (!spec.labeler) throw nb::ValidationError("feature_dependent noise needs --rules");
        auto result = nb::inject_rule_noise(data, *spec.labeler);
        summary["unmatched"] = result.unmatched_ids.size();
        noisy = std::move(result.dataset);
      } else {
        noisy = nb::apply_noise(data, spec);
      }
      nb::save_dataset(noisy, noise_out, format_for(noise_format, noise_out));
      summary["instances"] = noisy.size();
      if (noisy.has_gold_labels()) {
        const auto matrix = nb::noise_matrix(noisy);
        summary["noise_level"] = matrix.noise_level();
        if (!noise_matrix.empty()) write_text(noise_matrix, matrix.to_csv());
      }
      print_json(summary);
      return 0;
    }

    if (train->parsed()) {
      const auto tr = load(train_data.train, train_data.format, train_data.labels);
      const auto va = load(train_data.val, train_data.format, train_data.labels);
      nb::require_same_labels(tr, va);
      const auto settings = train_flags.settings();
      const auto fz = train_flags.featurizer();
      const auto method = nb::method_from_string(train_method);
      auto model = nb::train_method(method, nb::featurize_dataset(fz, tr), nb::featurize_dataset(fz, va),
                                    tr.num_labels(), fz.hash_dim(), settings);
      nlohmann::ordered_json summary;
      summary["method"] = train_method;
      summary["best_val_accuracy"] = model.best_val_accuracy;
      summary["steps_run"] = model.history.steps_run;
      summary["stopped_early"] = model.history.stopped_early;
      if (!train_data.test.empty()) {
        auto te = load(train_data.test, train_data.format, train_data.labels);
        nb::require_same_labels(tr, te);
        te.require_gold_labels("test evaluation");
        summary["test_accuracy"] =
            nb::accuracy(model.params, nb::featurize_dataset(fz, te.with_gold_as_observed()), model.heads);
      }
      if (!train_out.empty()) {
        nb::save_checkpoint({fz, tr.labels(), model.params}, train_out);
        summary["checkpoint"] = train_out;
      }
      if (!train_history.empty()) write_text(train_history, model.history.to_csv());
      print_json(summary);
      return 0;
    }

    if (clean->parsed()) {
      const auto tr = load(clean_data.train, clean_data.format, clean_data.labels);
      const auto va = load(clean_data.val, clean_data.format, clean_data.labels);
      const auto settings = clean_flags.settings();
      const auto fz = clean_flags.featurizer();
      nb::CleanConfig cfg;
      cfg.folds = clean_folds;
      cfg.threshold = clean_threshold;
      cfg.seed = clean_flags.seed;
      if (clean_grid == "reference") {
        cfg.tuning_grid = nb::reference_threshold_grid();
      } else if (!clean_grid.empty()) {
        std::stringstream ss(clean_grid);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            cfg.tuning_grid.push_back(std::stod(item));
          } catch (const std::exception&) {
            throw nb::ValidationError("bad --grid value '" + item + "'");
          }
        }
      }
      cfg.validate();
      std::optional<nb::NoiseMatrix> before;
      if (tr.has_gold_labels()) before = nb::noise_matrix(tr);
      std::vector<nb::ThresholdCandidate> diagnostics;
      nb::CleanResult result;
      std::optional<nb::ModelParams> retrained;
      if (cfg.threshold) {
        result = nb::clean_dataset(tr, va, cfg, settings.train, fz);
      } else {
        auto tuned = nb::tune_threshold(tr, va, cfg, settings.train, fz);
        diagnostics = tuned.diagnostics;
        result = std::move(tuned.result);
        retrained = std::move(tuned.model);
      }
      std::optional<nb::NoiseMatrix> after;
      if (result.cleaned.has_gold_labels()) after = nb::noise_matrix(result.cleaned);
      if (!clean_out.empty()) nb::save_dataset(result.cleaned, clean_out, format_for(clean_data.format, clean_out));

      nlohmann::ordered_json summary;
      summary["threshold"] = result.report.threshold_used;
      summary["kept"] = result.report.kept_ids.size();
      summary["removed"] = result.report.removed_ids.size();
      if (result.report.noise_before) summary["noise_before"] = *result.report.noise_before;
      if (result.report.noise_after) summary["noise_after"] = *result.report.noise_after;
      if (!clean_data.test.empty()) {
        auto te = load(clean_data.test, clean_data.format, clean_data.labels);
        nb::require_same_labels(tr, te);
        te.require_gold_labels("test evaluation");
        if (retrained) {
          summary["nc_test_accuracy"] =
              nb::accuracy(*retrained, nb::featurize_dataset(fz, te.with_gold_as_observed()), nb::Heads::one(0));
        } else {
          summary["nc_test_accuracy"] =
              nb::retrain_on_cleaned(result.cleaned, va, te, settings.train, fz).test_accuracy;
        }
      }
      if (!clean_report.empty()) {
        auto report = nb::cleaning_plot_json(diagnostics, before, after);
        const auto base = result.report.to_json();
        nlohmann::ordered_json full;
        full["threshold_used"] = base["threshold_used"];
        full["noise_before"] = base["noise_before"];
        full["noise_after"] = base["noise_after"];
        full["kept_ids"] = base["kept_ids"];
        full["removed_ids"] = base["removed_ids"];
        full["per_instance_loss"] = nlohmann::ordered_json::object();
        for (const auto& [id, loss] : result.report.per_instance_loss) full["per_instance_loss"][id] = loss;
        for (auto it = report.begin(); it != report.end(); ++it) full[it.key()] = it.value();
        write_text(clean_report, full.dump(2) + "\n");
      }
      print_json(summary);
      return 0;
    }

    if (ens->parsed()) {
      nlohmann::ordered_json summary;
      if (!ens_manifest.empty()) {
        if (ens_predict_data.empty()) throw nb::ValidationError("--manifest needs --data");
        const auto loaded = nb::load_ensemble(ens_manifest);
        std::optional<fs::path> labels_path;
        if (!ens_data.labels.empty()) labels_path = ens_data.labels;
        auto data = nb::load_dataset(ens_predict_data, format_for(ens_data.format, ens_predict_data), labels_path);
        if (!(data.labels() == loaded.labels)) throw nb::ValidationError("dataset labels differ from the ensemble's");
        const auto eval = nb::predict_ensemble(loaded.members, loaded.featurizer, data);
        summary["members"] = loaded.members.size();
        summary["accuracy"] = eval.accuracy;
        if (!ens_predictions.empty()) {
          std::ostringstream csv;
          csv.precision(17);
          csv << "id,predicted";
          for (const auto& name : data.labels().names()) csv << ",p_" << name;
          csv << '\n';
          for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& p = eval.predictions[i];
            csv << data[i].id << ',' << data.labels().name(p.predicted);
            for (double v : p.averaged.probs) csv << ',' << v;
            csv << '\n';
          }
          write_text(ens_predictions, csv.str());
        }
        print_json(summary);
        return 0;
      }
      if (ens_data.train.empty() || ens_data.val.empty()) {
        throw nb::ValidationError("ensemble training needs --train and --val");
      }
      const auto tr = load(ens_data.train, ens_data.format, ens_data.labels);
      const auto va = load(ens_data.val, ens_data.format, ens_data.labels);
      const auto fz = ens_flags.featurizer();
      nb::EnsembleSpec spec;
      spec.kind = nb::ensemble_kind_from_string(ens_kind);
      spec.settings = ens_flags.settings();
      spec.seed = ens_flags.seed;
      spec.subset_fraction = ens_fraction;
      if (!ens_methods.empty()) {
        spec.member_methods.clear();
        for (const auto& m : ens_methods) spec.member_methods.push_back(nb::method_from_string(m));
      }
      if (spec.kind == nb::EnsembleKind::heterogeneous) spec.member_count = spec.member_methods.size();
      else if (ens_members) spec.member_count = *ens_members;
      const auto result = nb::train_ensemble(tr, va, spec, fz);
      summary["kind"] = std::string(nb::to_string(spec.kind));
      summary["members"] = result.members.size();
      summary["failures"] = result.failures.size();
      if (!ens_data.test.empty()) {
        auto te = load(ens_data.test, ens_data.format, ens_data.labels);
        nb::require_same_labels(tr, te);
        te.require_gold_labels("test evaluation");
        summary["test_accuracy"] = nb::predict_ensemble(result.members, fz, te.with_gold_as_observed()).accuracy;
      }
      if (!ens_out.empty()) {
        nb::save_ensemble(result, fz, tr.labels(), ens_out);
        summary["manifest"] = ens_out;
      }
      print_json(summary);
      return 0;
    }

    if (cmp->parsed()) {
      const auto j = read_json(cmp_file);
      const auto cfgs = nb::comparison_from_json(j);
      bool baseline = !cmp_no_clean && j.value("clean_baseline", true);
      const auto table = nb::compare_methods(cfgs, baseline);
      if (!cmp_csv.empty()) write_text(cmp_csv, table.to_csv());
      if (!cmp_text.empty()) write_text(cmp_text, table.to_text());
      std::cout << table.to_text();
      return 0;
    }

    if (plot->parsed()) {
      const auto data = nb::emit_plot_data(read_json(plot_report));
      const fs::path dir(plot_dir);
      fs::create_directories(dir);
      write_text(dir / "threshold_series.csv", data.threshold_series);
      if (!data.matrix_before.empty()) write_text(dir / "matrix_before.csv", data.matrix_before);
      if (!data.matrix_after.empty()) write_text(dir / "matrix_after.csv", data.matrix_after);
      std::cout << "wrote plot data to " << dir.string() << '\n';
      return 0;
    }

    if (run->parsed()) {
      const auto cfg = nb::ExperimentConfig::from_json(read_json(run_file));
      const auto report = nb::run_experiment(cfg);
      const auto text = report.to_json(run_reproducible).dump(2) + "\n";
      if (run_out.empty()) std::cout << text;
      else write_text(run_out, text);
      return 0;
    }
  } catch (const nb::MethodFailure& e) {
    std::cerr << "method failure: " << e.what() << '\n';
    return 2;
  } catch (const nb::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
