#include "noisebench/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "model_access.hpp"
#include "noisebench/error.hpp"

namespace noisebench {

double ProbVector::sum() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

LabelIndex ProbVector::argmax() const {
  LabelIndex best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

ProbVector softmax(std::span<const double> logits) {
  ProbVector out;
  out.probs.resize(logits.size());
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - peak);
    total += out.probs[i];
  }
  for (auto& p : out.probs) p /= total;
  return out;
}

namespace {

double log_softmax_at(std::span<const double> logits, std::size_t y) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  return logits[y] - peak - std::log(total);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps == 0) throw ValidationError("steps must be > 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (!(weight_decay >= 0.0) || learning_rate * weight_decay >= 1.0) {
    throw ValidationError("weight_decay must be >= 0 with learning_rate * weight_decay < 1");
  }
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ValidationError("drop_rate must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
  if (hidden_size < 1) throw ValidationError("hidden_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"steps", steps},
                      {"learning_rate", learning_rate},
                      {"patience", patience},
                      {"warmup_steps", warmup_steps},
                      {"weight_decay", weight_decay},
                      {"drop_rate", drop_rate},
                      {"batch_size", batch_size},
                      {"eval_every", eval_every},
                      {"seed", seed},
                      {"hidden_size", hidden_size}};
  if (init_seed) j["init_seed"] = *init_seed;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  static const std::set<std::string> known{"steps",        "learning_rate", "patience",
                                           "warmup_steps", "weight_decay",  "drop_rate",
                                           "batch_size",   "eval_every",    "seed",
                                           "init_seed",    "hidden_size"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown train config field '" + key + "'");
  }
  try {
    cfg.steps = j.value("steps", cfg.steps);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.warmup_steps = j.value("warmup_steps", cfg.warmup_steps);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.drop_rate = j.value("drop_rate", cfg.drop_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.hidden_size = j.value("hidden_size", cfg.hidden_size);
    if (j.contains("init_seed") && !j["init_seed"].is_null()) {
      cfg.init_seed = j["init_seed"].get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double effective_learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0) return cfg.learning_rate;
  return cfg.learning_rate *
         std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

ModelParams ModelParams::initialize(std::size_t hash_dim, std::size_t hidden,
                                    std::size_t num_labels, std::size_t num_heads, double drop_rate,
                                    std::uint64_t seed, bool identical_heads) {
  if (hash_dim == 0 || hidden == 0 || num_labels < 2 || num_heads == 0) {
    throw ValidationError("invalid model shape");
  }
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ValidationError("drop_rate must lie in [0, 1)");
  ModelParams p;
  p.hash_dim_ = hash_dim;
  p.hidden_ = hidden;
  p.num_labels_ = num_labels;
  p.drop_rate_ = drop_rate;
  p.encoder_.resize(hash_dim * hidden);
  Rng enc_rng(derive_seed(seed, "encoder"));
  for (auto& w : p.encoder_) w = enc_rng.normal();
  p.encoder_bias_.assign(hidden, 0.0);
  const double head_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t h = 0; h < num_heads; ++h) {
    Rng head_rng(derive_seed(derive_seed(seed, "head"), identical_heads ? 0 : h));
    Head head;
    head.weights.resize(hidden * num_labels);
    for (auto& w : head.weights) w = head_rng.normal(0.0, head_std);
    head.bias.assign(num_labels, 0.0);
    p.heads_.push_back(std::move(head));
  }
  return p;
}

std::size_t ModelParams::parameter_count() const {
  return encoder_.size() + encoder_bias_.size() + heads_.size() * (hidden_ + 1) * num_labels_;
}

double ModelParams::get_parameter(std::size_t index) const {
  if (index < encoder_.size()) return scale_ * encoder_[index];
  index -= encoder_.size();
  if (index < hidden_) return encoder_bias_[index];
  index -= hidden_;
  const auto per_head = (hidden_ + 1) * num_labels_;
  const auto& head = heads_.at(index / per_head);
  index %= per_head;
  if (index < head.weights.size()) return head.weights[index];
  return head.bias[index - head.weights.size()];
}

void ModelParams::set_parameter(std::size_t index, double value) {
  if (index < encoder_.size()) {
    encoder_[index] = value / scale_;
    return;
  }
  index -= encoder_.size();
  if (index < hidden_) {
    encoder_bias_[index] = value;
    return;
  }
  index -= hidden_;
  const auto per_head = (hidden_ + 1) * num_labels_;
  auto& head = heads_.at(index / per_head);
  index %= per_head;
  if (index < head.weights.size()) {
    head.weights[index] = value;
  } else {
    head.bias[index - head.weights.size()] = value;
  }
}

double ModelParams::weight_norm_squared() const {
  double enc = 0.0;
  for (double w : encoder_) enc += w * w;
  double total = scale_ * scale_ * enc;
  for (const auto& head : heads_) {
    for (double w : head.weights) total += w * w;
  }
  return total;
}

bool ModelParams::all_finite() const {
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!std::isfinite(scale_) || !finite(encoder_) || !finite(encoder_bias_)) return false;
  return std::all_of(heads_.begin(), heads_.end(),
                     [&](const Head& h) { return finite(h.weights) && finite(h.bias); });
}

Activation encode(const ModelParams& params, const SparseVector& x, Rng* rng) {
  const auto hidden = params.hidden();
  const auto& raw = ModelAccess::encoder(params);
  Activation act;
  act.pre.assign(hidden, 0.0);
  for (const auto& e : x) {
    if (e.index >= params.hash_dim()) throw ValidationError("feature index out of range for model");
    const double* row = raw.data() + static_cast<std::size_t>(e.index) * hidden;
    for (std::size_t j = 0; j < hidden; ++j) act.pre[j] += e.value * row[j];
  }
  const double scale = ModelAccess::scale(params);
  act.hidden.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    act.pre[j] = scale * act.pre[j] + params.encoder_bias(j);
    act.hidden[j] = act.pre[j] > 0.0 ? act.pre[j] : 0.0;
  }
  if (rng != nullptr && params.drop_rate() > 0.0) {
    const double keep = 1.0 - params.drop_rate();
    act.mask.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      act.mask[j] = rng->uniform() < keep ? 1.0 / keep : 0.0;
      act.hidden[j] *= act.mask[j];
    }
  }
  return act;
}

std::vector<double> head_logits(const ModelParams& params, const Activation& act, std::size_t head) {
  if (head >= params.num_heads()) throw ValidationError("head index out of range");
  const auto k = params.num_labels();
  const auto& w = ModelAccess::head_weights(params, head);
  std::vector<double> logits(k);
  for (std::size_t c = 0; c < k; ++c) logits[c] = params.head_bias(head, c);
  for (std::size_t j = 0; j < params.hidden(); ++j) {
    const double h = act.hidden[j];
    if (h == 0.0) continue;
    const double* row = w.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) logits[c] += h * row[c];
  }
  return logits;
}

namespace {

void require_finite(const ProbVector& p) {
  for (double v : p.probs) {
    if (!std::isfinite(v)) throw TrainingDiverged("non-finite model output");
  }
}

ProbVector averaged_heads(const ModelParams& params, const Activation& act) {
  ProbVector avg;
  avg.probs.assign(params.num_labels(), 0.0);
  for (std::size_t h = 0; h < params.num_heads(); ++h) {
    const auto p = softmax(head_logits(params, act, h));
    for (std::size_t c = 0; c < p.size(); ++c) avg.probs[c] += p[c];
  }
  for (auto& v : avg.probs) v /= static_cast<double>(params.num_heads());
  return avg;
}

}  // namespace

ProbVector forward(const ModelParams& params, const SparseVector& x, Heads heads, bool train_mode,
                   Rng* rng) {
  const auto act = encode(params, x, train_mode ? rng : nullptr);
  ProbVector out = heads.mode == Heads::Mode::all ? averaged_heads(params, act)
                                                  : softmax(head_logits(params, act, heads.head));
  require_finite(out);
  return out;
}

double instance_loss(const ModelParams& params, const SparseVector& x, LabelIndex y, Heads heads) {
  if (y >= params.num_labels()) throw ValidationError("label index out of range");
  const auto act = encode(params, x, nullptr);
  double loss;
  if (heads.mode == Heads::Mode::all) {
    const auto avg = averaged_heads(params, act);
    loss = -std::log(std::max(avg[y], std::numeric_limits<double>::min()));
  } else {
    loss = -log_softmax_at(head_logits(params, act, heads.head), y);
  }
  if (!std::isfinite(loss)) throw TrainingDiverged("non-finite instance loss");
  return std::max(loss, 0.0);
}

Gradient::Gradient(const ModelParams& params)
    : hidden_(params.hidden()),
      num_labels_(params.num_labels()),
      hash_dim_(params.hash_dim()),
      encoder_bias_(params.hidden(), 0.0),
      head_weights_(params.num_heads(), std::vector<double>(params.hidden() * params.num_labels(), 0.0)),
      head_bias_(params.num_heads(), std::vector<double>(params.num_labels(), 0.0)) {}

void Gradient::accumulate(const ModelParams& params, const SparseVector& x, const Activation& act,
                          std::span<const std::vector<double>> dlogits) {
  const auto k = num_labels_;
  std::vector<double> dhidden(hidden_, 0.0);
  bool any = false;
  for (std::size_t h = 0; h < dlogits.size(); ++h) {
    const auto& dz = dlogits[h];
    if (dz.empty()) continue;
    any = true;
    const auto& w = ModelAccess::head_weights(params, h);
    auto& gw = head_weights_[h];
    for (std::size_t c = 0; c < k; ++c) head_bias_[h][c] += dz[c];
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double hj = act.hidden[j];
      const double* wrow = w.data() + j * k;
      double* grow = gw.data() + j * k;
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        grow[c] += hj * dz[c];
        acc += wrow[c] * dz[c];
      }
      dhidden[j] += acc;
    }
  }
  if (!any) return;
  for (std::size_t j = 0; j < hidden_; ++j) {
    if (!act.mask.empty()) dhidden[j] *= act.mask[j];
    if (act.pre[j] <= 0.0) dhidden[j] = 0.0;
    encoder_bias_[j] += dhidden[j];
  }
  for (const auto& e : x) {
    auto& row = encoder_rows_[e.index];
    if (row.empty()) row.assign(hidden_, 0.0);
    for (std::size_t j = 0; j < hidden_; ++j) row[j] += e.value * dhidden[j];
  }
}

double Gradient::get(std::size_t index) const {
  const auto enc_size = hash_dim_ * hidden_;
  if (index < enc_size) {
    const auto it = encoder_rows_.find(static_cast<std::uint32_t>(index / hidden_));
    return it == encoder_rows_.end() ? 0.0 : it->second[index % hidden_];
  }
  index -= enc_size;
  if (index < hidden_) return encoder_bias_[index];
  index -= hidden_;
  const auto per_head = (hidden_ + 1) * num_labels_;
  const auto head = index / per_head;
  index %= per_head;
  if (index < hidden_ * num_labels_) return head_weights_.at(head)[index];
  return head_bias_.at(head)[index - hidden_ * num_labels_];
}

bool Gradient::all_finite() const {
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(encoder_bias_)) return false;
  for (const auto& [row, values] : encoder_rows_) {
    if (!finite(values)) return false;
  }
  for (std::size_t h = 0; h < head_weights_.size(); ++h) {
    if (!finite(head_weights_[h]) || !finite(head_bias_[h])) return false;
  }
  return true;
}

void apply_gradient(ModelParams& params, const Gradient& grad, double lr, double weight_decay) {
  if (lr == 0.0) return;
  const double decay = 1.0 - lr * weight_decay;
  auto& scale = ModelAccess::scale(params);
  auto& raw = ModelAccess::encoder(params);
  const auto hidden = params.hidden();
  scale *= decay;
  if (scale < 1e-6) {
    for (auto& w : raw) w *= scale;
    scale = 1.0;
  }
  for (const auto& [index, values] : grad.encoder_rows_) {
    double* row = raw.data() + static_cast<std::size_t>(index) * hidden;
    for (std::size_t j = 0; j < hidden; ++j) row[j] -= lr * values[j] / scale;
  }
  auto& bias = ModelAccess::encoder_bias(params);
  for (std::size_t j = 0; j < hidden; ++j) bias[j] -= lr * grad.encoder_bias_[j];
  for (std::size_t h = 0; h < params.num_heads(); ++h) {
    auto& w = ModelAccess::head_weights(params, h);
    const auto& gw = grad.head_weights_[h];
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] * decay - lr * gw[i];
    auto& b = ModelAccess::head_bias(params, h);
    for (std::size_t c = 0; c < b.size(); ++c) b[c] -= lr * grad.head_bias_[h][c];
  }
}

FeaturizedData featurize_dataset(const Featurizer& featurizer, const Dataset& dataset) {
  FeaturizedData data;
  data.features.reserve(dataset.size());
  data.labels.reserve(dataset.size());
  for (const auto& inst : dataset.instances()) {
    data.features.push_back(featurizer.featurize(inst.text));
    data.labels.push_back(inst.observed_label);
  }
  return data;
}

double cross_entropy_gradient(const ModelParams& params, const FeaturizedData& data,
                              std::span<const std::size_t> batch, Heads heads, Rng* rng,
                              Gradient& grad) {
  if (batch.empty()) throw ValidationError("empty batch");
  const auto k = params.num_labels();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::vector<double>> dlogits(params.num_heads());
  for (auto i : batch) {
    const auto y = data.labels.at(i);
    const auto act = encode(params, data.features[i], rng);
    for (std::size_t h = 0; h < params.num_heads(); ++h) {
      dlogits[h].clear();
      if (heads.mode == Heads::Mode::single && h != heads.head) continue;
      const auto logits = head_logits(params, act, h);
      total -= log_softmax_at(logits, y);
      auto p = softmax(logits);
      dlogits[h].resize(k);
      for (std::size_t c = 0; c < k; ++c) dlogits[h][c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
    }
    grad.accumulate(params, data.features[i], act, dlogits);
  }
  return total * inv;
}

double sgd_step(ModelParams& params, const FeaturizedData& data, std::span<const std::size_t> batch,
                Heads heads, double lr, double weight_decay, Rng& rng) {
  if (heads.mode == Heads::Mode::single && heads.head >= params.num_heads()) {
    throw ValidationError("head index out of range");
  }
  Gradient grad(params);
  const double loss = cross_entropy_gradient(params, data, batch, heads, &rng, grad);
  if (!std::isfinite(loss) || !grad.all_finite()) {
    throw TrainingDiverged("non-finite loss or gradient; reduce the learning rate");
  }
  apply_gradient(params, grad, lr, weight_decay);
  return loss;
}

EvalResult evaluate(const ModelParams& params, const FeaturizedData& data, Heads heads) {
  if (data.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  EvalResult result;
  result.per_instance.reserve(data.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = data.labels[i];
    const auto act = encode(params, data.features[i], nullptr);
    ProbVector probs;
    double loss;
    if (heads.mode == Heads::Mode::single) {
      const auto logits = head_logits(params, act, heads.head);
      probs = softmax(logits);
      loss = std::max(0.0, -log_softmax_at(logits, y));
    } else {
      probs = averaged_heads(params, act);
      loss = -std::log(std::max(probs[y], std::numeric_limits<double>::min()));
    }
    require_finite(probs);
    if (!std::isfinite(loss)) throw TrainingDiverged("non-finite instance loss");
    correct += probs.argmax() == y;
    result.per_instance.push_back({std::move(probs), loss});
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

EvalResult evaluate(const ModelParams& params, const Featurizer& featurizer, const Dataset& dataset,
                    Heads heads) {
  if (dataset.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  return evaluate(params, featurize_dataset(featurizer, dataset), heads);
}

double accuracy(const ModelParams& params, const FeaturizedData& data, Heads heads) {
  if (data.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto act = encode(params, data.features[i], nullptr);
    ProbVector p = heads.mode == Heads::Mode::all ? averaged_heads(params, act)
                                                  : softmax(head_logits(params, act, heads.head));
    require_finite(p);
    correct += p.argmax() == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace noisebench
