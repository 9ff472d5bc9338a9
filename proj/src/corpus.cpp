#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "noisebench/dataset.hpp"
#include "noisebench/error.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

namespace {

struct Layout {
  std::size_t shared;  // tokens shared by adjacent windows
  std::size_t step;    // window offset between consecutive classes
  std::size_t pool;    // total distinct tokens
};

Layout layout_for(std::size_t num_classes, std::size_t vocab_per_class, double overlap) {
  Layout layout{};
  layout.shared = static_cast<std::size_t>(std::llround(overlap * vocab_per_class));
  layout.step = vocab_per_class - layout.shared;
  layout.pool = (num_classes - 1) * layout.step + vocab_per_class;
  return layout;
}

std::string token_name(std::size_t index) {
  char buffer[24];
  std::snprintf(buffer, sizeof buffer, "w%05zu", index);
  return buffer;
}

// Global token ids of class c's window, most private first.
std::vector<std::size_t> ranked_window(std::size_t c, std::size_t num_classes,
                                       std::size_t vocab_per_class, const Layout& layout) {
  std::vector<std::size_t> tokens(vocab_per_class);
  std::iota(tokens.begin(), tokens.end(), c * layout.step);
  const auto coverage = [&](std::size_t token) {
    std::size_t count = 0;
    for (std::size_t other = 0; other < num_classes; ++other) {
      const auto begin = other * layout.step;
      if (token >= begin && token < begin + vocab_per_class) ++count;
    }
    return count;
  };
  std::vector<std::size_t> cover(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) cover[j] = coverage(tokens[j]);
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cover[a] < cover[b]; });
  std::vector<std::size_t> ranked;
  ranked.reserve(tokens.size());
  for (auto j : order) ranked.push_back(tokens[j]);
  return ranked;
}

void validate(std::size_t num_classes, std::size_t size, std::size_t vocab_per_class,
              double overlap, const CorpusOptions& options) {
  if (num_classes < 2) throw ValidationError("synthetic corpus needs at least 2 classes");
  if (size < num_classes) throw ValidationError("synthetic corpus needs at least one instance per class");
  if (vocab_per_class < 4) throw ValidationError("vocab_per_class must be >= 4");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ValidationError("overlap must lie in [0, 1]");
  if (!(options.mean_length >= 1.0) || options.min_length < 1) {
    throw ValidationError("text lengths must be >= 1");
  }
  if (!options.class_weights.empty()) {
    if (options.class_weights.size() != num_classes) {
      throw ValidationError("class_weights must have one entry per class");
    }
    for (double w : options.class_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("class weights must be positive");
    }
  }
  if (!(options.annotator_error >= 0.0 && options.annotator_error <= 1.0)) {
    throw ValidationError("annotator_error must lie in [0, 1]");
  }
  if (options.zipf_exponent < 0.0) throw ValidationError("zipf_exponent must be >= 0");
}

// Largest-remainder apportionment with at least one instance per class.
std::vector<std::size_t> class_counts(std::size_t num_classes, std::size_t size,
                                      const std::vector<double>& weights) {
  std::vector<double> w = weights.empty() ? std::vector<double>(num_classes, 1.0) : weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const auto spare = size - num_classes;
  std::vector<std::size_t> counts(num_classes, 1);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = spare * w[c] / total;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    counts[c] += whole;
    assigned += whole;
    remainders.emplace_back(exact - whole, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < spare; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

}  // namespace

std::vector<std::vector<std::string>> synthetic_vocabularies(std::size_t num_classes,
                                                             std::size_t vocab_per_class,
                                                             double overlap) {
  validate(num_classes, num_classes, vocab_per_class, overlap, {});
  const auto layout = layout_for(num_classes, vocab_per_class, overlap);
  std::vector<std::vector<std::string>> vocabularies;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::string> names;
    for (auto token : ranked_window(c, num_classes, vocab_per_class, layout)) {
      names.push_back(token_name(token));
    }
    vocabularies.push_back(std::move(names));
  }
  return vocabularies;
}

Dataset generate_synthetic_corpus(std::size_t num_classes, std::size_t size,
                                  std::size_t vocab_per_class, double overlap,
                                  std::uint64_t seed, const CorpusOptions& options) {
  validate(num_classes, size, vocab_per_class, overlap, options);
  const auto layout = layout_for(num_classes, vocab_per_class, overlap);

  std::vector<std::vector<std::size_t>> windows;
  for (std::size_t c = 0; c < num_classes; ++c) {
    windows.push_back(ranked_window(c, num_classes, vocab_per_class, layout));
  }
  // cumulative Zipf weights over ranks, shared by all classes
  std::vector<double> cumulative(vocab_per_class);
  double running = 0.0;
  for (std::size_t r = 0; r < vocab_per_class; ++r) {
    running += 1.0 / std::pow(static_cast<double>(r + 1), options.zipf_exponent);
    cumulative[r] = running;
  }

  std::vector<std::string> label_names;
  for (std::size_t c = 0; c < num_classes; ++c) label_names.push_back("c" + std::to_string(c));

  std::vector<LabelIndex> classes;
  const auto counts = class_counts(num_classes, size, options.class_weights);
  for (std::size_t c = 0; c < num_classes; ++c) classes.insert(classes.end(), counts[c], c);
  Rng rng(derive_seed(seed, "corpus"));
  rng.shuffle(classes);

  std::vector<Instance> instances;
  instances.reserve(size);
  const double extra_mean = std::max(0.0, options.mean_length - static_cast<double>(options.min_length));
  for (std::size_t i = 0; i < size; ++i) {
    const auto c = classes[i];
    const auto length = options.min_length + rng.poisson(extra_mean);
    std::string text;
    for (std::size_t t = 0; t < length; ++t) {
      const double u = rng.uniform() * running;
      const auto rank = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      if (t) text += ' ';
      text += token_name(windows[c][std::min(rank, vocab_per_class - 1)]);
    }
    Instance inst;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    inst.id = id;
    inst.text = std::move(text);
    inst.observed_label = c;
    inst.gold_label = c;
    for (std::size_t a = 0; a < options.annotators; ++a) {
      LabelIndex label = c;
      if (rng.bernoulli(options.annotator_error)) {
        label = rng.bernoulli(0.5) ? (c + 1) % num_classes : (c + num_classes - 1) % num_classes;
      }
      inst.annotator_labels.push_back(label);
    }
    instances.push_back(std::move(inst));
  }
  return Dataset(LabelSet(std::move(label_names)), std::move(instances));
}

}  // namespace noisebench
