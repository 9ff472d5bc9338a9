#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace noisebench {

using LabelIndex = std::size_t;

/// Ordered, duplicate-free list of class names. A label's index is its
/// position and never changes once the set is built.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(LabelIndex index) const;
  std::optional<LabelIndex> find(std::string_view name) const;
  /// Throws ValidationError naming the label when it is unknown.
  LabelIndex index_of(std::string_view name) const;

  bool operator==(const LabelSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelIndex> index_;
};

struct Instance {
  std::string id;
  std::string text;
  LabelIndex observed_label = 0;
  std::optional<LabelIndex> gold_label;
  std::vector<LabelIndex> annotator_labels;
};

enum class Split { unset, train, validation, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

/// Immutable once constructed: the constructor validates ids and labels.
class Dataset {
 public:
  Dataset() = default;
  Dataset(LabelSet labels, std::vector<Instance> instances, Split split = Split::unset);

  const LabelSet& labels() const { return labels_; }
  std::size_t num_labels() const { return labels_.size(); }
  const std::vector<Instance>& instances() const { return instances_; }
  const Instance& operator[](std::size_t i) const { return instances_[i]; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  Split split() const { return split_; }

  bool has_gold_labels() const;
  /// Throws ValidationError unless every instance carries a gold label.
  void require_gold_labels(std::string_view operation) const;

  Dataset with_split(Split split) const;
  Dataset with_instances(std::vector<Instance> instances) const;
  /// Copy whose observed labels are replaced by the gold labels.
  Dataset with_gold_as_observed() const;
  /// Instances at the given positions, in the given order.
  Dataset subset(const std::vector<std::size_t>& positions) const;

 private:
  LabelSet labels_;
  std::vector<Instance> instances_;
  Split split_ = Split::unset;
};

enum class DatasetFormat { jsonl, tsv };

DatasetFormat format_from_string(std::string_view name);
/// Picks the format from the file extension (.jsonl/.json or .tsv).
DatasetFormat format_from_path(const std::filesystem::path& path);

/// Reads a dataset. The label order comes from `labels_path` when given,
/// otherwise from a `labels.txt` next to the data file when present,
/// otherwise from first appearance in the file.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::filesystem::path>& labels_path = std::nullopt);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  DatasetFormat format);

std::string serialize_dataset(const Dataset& dataset, DatasetFormat format);
Dataset parse_dataset(std::string_view content, DatasetFormat format,
                      const std::optional<LabelSet>& labels = std::nullopt);

LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const LabelSet& labels, const std::filesystem::path& path);

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Seeded shuffle, then contiguous partition. Validation and test sizes are
/// rounded from their fractions and train takes the remainder.
DatasetSplits split_dataset(const Dataset& dataset, const SplitSpec& spec);

/// Partition into exact sizes (after a seeded shuffle).
DatasetSplits split_dataset_by_counts(const Dataset& dataset, std::size_t train,
                                      std::size_t validation, std::size_t test,
                                      std::uint64_t seed);

struct CorpusOptions {
  /// Mean token count per text; lengths are min_length + Poisson.
  double mean_length = 12.0;
  std::size_t min_length = 3;
  /// 0 samples tokens uniformly from the class vocabulary; larger values put
  /// Zipf weight on each class's most private tokens.
  double zipf_exponent = 0.0;
  /// Relative class frequencies; empty means balanced.
  std::vector<double> class_weights;
  /// Simulated crowd annotations per instance (0 disables them).
  std::size_t annotators = 0;
  /// Probability that a simulated annotator picks a neighbouring class.
  double annotator_error = 0.0;
};

/// Class-conditional bag-of-tokens corpus. Class c draws its tokens from a
/// window of `vocab_per_class` tokens; consecutive windows share
/// round(overlap * vocab_per_class) tokens, so overlap 0 gives disjoint
/// vocabularies and overlap 1 a single shared vocabulary.
Dataset generate_synthetic_corpus(std::size_t num_classes, std::size_t size,
                                  std::size_t vocab_per_class, double overlap,
                                  std::uint64_t seed, const CorpusOptions& options = {});

/// Token strings making up each class's vocabulary window, private tokens first.
std::vector<std::vector<std::string>> synthetic_vocabularies(std::size_t num_classes,
                                                             std::size_t vocab_per_class,
                                                             double overlap);

}  // namespace noisebench
