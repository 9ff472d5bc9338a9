#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "noisebench/dataset.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

/// Categorical distribution over the label set.
struct ProbVector {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  double sum() const;
  /// Ties go to the lowest index.
  LabelIndex argmax() const;
};

ProbVector softmax(std::span<const double> logits);

/// Which classifier head(s) an operation uses. For evaluation `all` means the
/// head-averaged distribution; for training it means the sum of per-head losses.
struct Heads {
  enum class Mode { single, all };
  Mode mode = Mode::single;
  std::size_t head = 0;

  static Heads one(std::size_t h) { return {Mode::single, h}; }
  static Heads all() { return {Mode::all, 0}; }
};

struct TrainConfig {
  std::size_t steps = 600;
  double learning_rate = 0.05;
  /// Evaluations without improvement before stopping.
  std::size_t patience = 25;
  std::size_t warmup_steps = 0;
  double weight_decay = 1e-4;
  double drop_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  /// Overrides the seed used for weight initialisation and dropout.
  std::optional<std::uint64_t> init_seed;
  std::size_t hidden_size = 128;

  void validate() const;
  std::uint64_t effective_init_seed() const { return init_seed.value_or(seed); }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Fields missing from `j` keep their value in `defaults`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
};

/// learning_rate * min(1, step / warmup_steps) for 1-based step.
double effective_learning_rate(const TrainConfig& cfg, std::size_t step);

/// Hidden layer over hashed features plus one or more softmax heads.
///
/// The encoder matrix is stored as scale * raw so that weight decay is an
/// O(1) update of the scale; only rows touched by a batch are rewritten.
class ModelParams {
 public:
  ModelParams() = default;

  /// Encoder ~ N(0, 1), heads ~ N(0, 1/sqrt(hidden)), biases zero. Head h is
  /// drawn from its own seed stream unless identical_heads is set.
  static ModelParams initialize(std::size_t hash_dim, std::size_t hidden, std::size_t num_labels,
                                std::size_t num_heads, double drop_rate, std::uint64_t seed,
                                bool identical_heads = false);

  std::size_t hash_dim() const { return hash_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t num_labels() const { return num_labels_; }
  std::size_t num_heads() const { return heads_.size(); }
  double drop_rate() const { return drop_rate_; }

  double encoder_weight(std::size_t row, std::size_t col) const {
    return scale_ * encoder_[row * hidden_ + col];
  }
  double encoder_bias(std::size_t col) const { return encoder_bias_[col]; }
  double head_weight(std::size_t head, std::size_t h, std::size_t k) const {
    return heads_[head].weights[h * num_labels_ + k];
  }
  double head_bias(std::size_t head, std::size_t k) const { return heads_[head].bias[k]; }

  /// Flat view: encoder (hash_dim x hidden), encoder bias, then per head the
  /// weights (hidden x labels) and bias.
  std::size_t parameter_count() const;
  double get_parameter(std::size_t index) const;
  void set_parameter(std::size_t index, double value);

  /// Sum of squared weights (biases excluded).
  double weight_norm_squared() const;
  bool all_finite() const;

  friend class Gradient;
  friend struct ModelAccess;

 private:
  struct Head {
    std::vector<double> weights;  // hidden x labels
    std::vector<double> bias;     // labels
  };

  std::size_t hash_dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t num_labels_ = 0;
  double drop_rate_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> encoder_;       // raw, hash_dim x hidden
  std::vector<double> encoder_bias_;  // hidden
  std::vector<Head> heads_;
};

/// Hidden-layer state for one input.
struct Activation {
  std::vector<double> pre;     // pre-nonlinearity
  std::vector<double> hidden;  // after ReLU and dropout
  std::vector<double> mask;    // dropout multipliers; empty in evaluation mode
};

/// rng == nullptr selects evaluation mode (no dropout).
Activation encode(const ModelParams& params, const SparseVector& x, Rng* rng);
std::vector<double> head_logits(const ModelParams& params, const Activation& act, std::size_t head);

/// Throws TrainingDiverged if the output is not finite.
ProbVector forward(const ModelParams& params, const SparseVector& x, Heads heads, bool train_mode,
                   Rng* rng);

/// Cross-entropy of label y in evaluation mode. With Heads::all() the loss of
/// the head-averaged distribution.
double instance_loss(const ModelParams& params, const SparseVector& x, LabelIndex y, Heads heads);

/// Gradient with the same flat layout as ModelParams; encoder rows are sparse.
class Gradient {
 public:
  explicit Gradient(const ModelParams& params);

  /// Backpropagates dLoss/dlogits for each head (empty vector = head unused).
  void accumulate(const ModelParams& params, const SparseVector& x, const Activation& act,
                  std::span<const std::vector<double>> dlogits);

  double get(std::size_t flat_index) const;
  bool all_finite() const;

  friend void apply_gradient(ModelParams& params, const Gradient& grad, double lr,
                             double weight_decay);

 private:
  std::size_t hidden_;
  std::size_t num_labels_;
  std::size_t hash_dim_;
  std::unordered_map<std::uint32_t, std::vector<double>> encoder_rows_;
  std::vector<double> encoder_bias_;
  std::vector<std::vector<double>> head_weights_;
  std::vector<std::vector<double>> head_bias_;
};

/// One decoupled step: weights *= (1 - lr * weight_decay), then params -= lr * grad.
/// Biases are not decayed.
void apply_gradient(ModelParams& params, const Gradient& grad, double lr, double weight_decay);

/// Featurised inputs with their training targets (observed labels).
struct FeaturizedData {
  std::vector<SparseVector> features;
  std::vector<LabelIndex> labels;

  std::size_t size() const { return labels.size(); }
};

FeaturizedData featurize_dataset(const Featurizer& featurizer, const Dataset& dataset);

/// Mean batch cross-entropy and its gradient. rng == nullptr disables dropout.
double cross_entropy_gradient(const ModelParams& params, const FeaturizedData& data,
                              std::span<const std::size_t> batch, Heads heads, Rng* rng,
                              Gradient& grad);

/// Gradient step on the mean cross-entropy of the batch; returns the batch
/// loss before the update. Throws TrainingDiverged on non-finite values.
double sgd_step(ModelParams& params, const FeaturizedData& data, std::span<const std::size_t> batch,
                Heads heads, double lr, double weight_decay, Rng& rng);

struct InstanceEval {
  ProbVector probs;
  double loss;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<InstanceEval> per_instance;
};

/// Evaluation mode; accuracy against `data.labels`.
EvalResult evaluate(const ModelParams& params, const FeaturizedData& data, Heads heads);
EvalResult evaluate(const ModelParams& params, const Featurizer& featurizer, const Dataset& dataset,
                    Heads heads);
double accuracy(const ModelParams& params, const FeaturizedData& data, Heads heads);

}  // namespace noisebench
