#include "noisebench/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "format.hpp"
#include "noisebench/error.hpp"

namespace noisebench {

using detail::shortest;

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "step,train_batch_loss,val_accuracy,selected_fraction\n";
  for (const auto& p : points) {
    out << p.step << ',' << shortest(p.train_batch_loss) << ',' << shortest(p.val_accuracy) << ',';
    if (p.selected_fraction) out << shortest(*p.selected_fraction);
    out << '\n';
  }
  return out.str();
}

bool EarlyStopState::observe(double val_accuracy, std::size_t step) {
  if (val_accuracy > best_val_accuracy) {
    best_val_accuracy = val_accuracy;
    best_step = step;
    evals_since_improvement = 0;
    return true;
  }
  ++evals_since_improvement;
  return false;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : order_(n), batch_size_(std::min(batch_size, n)), rng_(derive_seed(seed, "batches")) {
  if (n == 0) throw ValidationError("cannot sample batches from an empty training set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  steps_per_epoch_ = n / batch_size_;
  rng_.shuffle(order_);
}

const std::vector<std::size_t>& BatchSampler::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  batch_.assign(order_.begin() + cursor_, order_.begin() + cursor_ + batch_size_);
  cursor_ += batch_size_;
  return batch_;
}

namespace {

void check_inputs(const FeaturizedData& train, const FeaturizedData& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw ValidationError("empty training set");
  if (val.size() == 0) throw ValidationError("empty validation set");
}

bool is_eval_step(const TrainConfig& cfg, std::size_t step) {
  return step % cfg.eval_every == 0 || step == cfg.steps;
}

// Accumulates batch losses between evaluations.
struct LossWindow {
  double sum = 0.0;
  std::size_t count = 0;
  double selected = 0.0;

  void add(double loss) {
    if (!std::isfinite(loss)) throw TrainingDiverged("non-finite training loss");
    sum += loss;
    ++count;
  }
  double take() {
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    sum = 0.0;
    count = 0;
    return mean;
  }
  double take_selected() {
    const double s = selected;
    selected = 0.0;
    return s;
  }
};

}  // namespace

VanillaResult train_vanilla(const FeaturizedData& train, const FeaturizedData& val,
                            std::size_t num_labels, std::size_t hash_dim, const TrainConfig& cfg,
                            const StepObserver& observer) {
  check_inputs(train, val, cfg);
  const auto init_seed = cfg.effective_init_seed();
  auto params = ModelParams::initialize(hash_dim, cfg.hidden_size, num_labels, 1, cfg.drop_rate, init_seed);
  Rng dropout(derive_seed(init_seed, "dropout"));
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.seed);

  VanillaResult result;
  ModelParams best = params;
  EarlyStopState state;
  LossWindow window;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto& batch = sampler.next();
    const double loss = sgd_step(params, train, batch, Heads::one(0), effective_learning_rate(cfg, step),
                                 cfg.weight_decay, dropout);
    window.add(loss);
    result.history.steps_run = step;
    if (observer) observer(step, params, loss);
    if (!is_eval_step(cfg, step)) continue;
    const double val_acc = accuracy(params, val, Heads::one(0));
    result.history.points.push_back({step, window.take(), val_acc, std::nullopt});
    if (state.observe(val_acc, step)) best = params;
    if (state.should_stop(cfg.patience)) {
      result.history.stopped_early = step < cfg.steps;
      break;
    }
  }
  result.params = std::move(best);
  result.best_val_accuracy = state.best_val_accuracy;
  return result;
}

void require_same_labels(const Dataset& a, const Dataset& b) {
  if (!(a.labels() == b.labels())) throw ValidationError("train and validation label sets differ");
}

VanillaResult train_vanilla(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                            const Featurizer& featurizer) {
  require_same_labels(train, val);
  return train_vanilla(featurize_dataset(featurizer, train), featurize_dataset(featurizer, val),
                       train.num_labels(), featurizer.hash_dim(), cfg);
}

void CoteachSchedule::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("co-teaching tau must lie in [0, 1]");
}

double CoteachSchedule::forget_rate(std::size_t step) const {
  if (ramp_steps == 0) return tau;
  return tau * std::min(1.0, static_cast<double>(step) / static_cast<double>(ramp_steps));
}

std::size_t CoteachSchedule::kept_count(std::size_t batch, std::size_t step) const {
  const double exact = (1.0 - forget_rate(step)) * static_cast<double>(batch);
  // tolerance absorbs representation error such as (1 - 0.4) * 10 = 6.0000000000000009
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

CoteachSchedule default_coteach_schedule(const TrainConfig& cfg, std::optional<double> estimated_noise) {
  CoteachSchedule schedule;
  schedule.tau = estimated_noise.value_or(0.2);
  schedule.ramp_steps = std::max<std::size_t>(1, cfg.steps / 5);
  return schedule;
}

std::uint64_t coteach_network_seed(const TrainConfig& cfg, std::size_t network) {
  return derive_seed(cfg.effective_init_seed(), static_cast<std::uint64_t>(network));
}

namespace {

std::vector<std::size_t> small_loss_selection(const ModelParams& params, const FeaturizedData& data,
                                              const std::vector<std::size_t>& batch, std::size_t keep) {
  std::vector<double> losses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    losses[i] = instance_loss(params, data.features[batch[i]], data.labels[batch[i]], Heads::one(0));
  }
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(keep);
  // keep batch order so a full selection reproduces the plain batch exactly
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> kept;
  kept.reserve(keep);
  for (auto o : order) kept.push_back(batch[o]);
  return kept;
}

}  // namespace

CoteachResult train_coteaching(const FeaturizedData& train, const FeaturizedData& val,
                               std::size_t num_labels, std::size_t hash_dim, const TrainConfig& cfg,
                               const CoteachSchedule& schedule,
                               const std::function<void(const CoteachStep&)>& observer) {
  check_inputs(train, val, cfg);
  schedule.validate();
  const auto seed1 = coteach_network_seed(cfg, 0);
  const auto seed2 = coteach_network_seed(cfg, 1);
  auto net1 = ModelParams::initialize(hash_dim, cfg.hidden_size, num_labels, 1, cfg.drop_rate, seed1);
  auto net2 = ModelParams::initialize(hash_dim, cfg.hidden_size, num_labels, 1, cfg.drop_rate, seed2);
  Rng dropout1(derive_seed(seed1, "dropout"));
  Rng dropout2(derive_seed(seed2, "dropout"));
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.seed);

  CoteachResult result;
  ModelParams best1 = net1;
  ModelParams best2 = net2;
  EarlyStopState state;
  LossWindow window;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto& batch = sampler.next();
    const auto keep = schedule.kept_count(batch.size(), step);
    if (keep == 0) {
      throw MethodFailure("co-teaching batch of " + std::to_string(batch.size()) +
                          " keeps no instances at step " + std::to_string(step));
    }
    const auto kept1 = small_loss_selection(net1, train, batch, keep);
    const auto kept2 = small_loss_selection(net2, train, batch, keep);
    const double lr = effective_learning_rate(cfg, step);
    // each network learns from the instances its peer considers clean
    const double loss1 = sgd_step(net1, train, kept2, Heads::one(0), lr, cfg.weight_decay, dropout1);
    sgd_step(net2, train, kept1, Heads::one(0), lr, cfg.weight_decay, dropout2);
    window.add(loss1);
    window.selected += static_cast<double>(keep) / static_cast<double>(batch.size());
    result.history.steps_run = step;
    if (observer) observer({step, batch, kept1, kept2, net1, net2});
    if (!is_eval_step(cfg, step)) continue;
    const auto evals = window.count;
    const double val_acc = accuracy(net1, val, Heads::one(0));
    const double mean_loss = window.take();
    result.history.points.push_back(
        {step, mean_loss, val_acc, window.take_selected() / static_cast<double>(evals)});
    if (state.observe(val_acc, step)) {
      best1 = net1;
      best2 = net2;
    }
    if (state.should_stop(cfg.patience)) {
      result.history.stopped_early = step < cfg.steps;
      break;
    }
  }
  result.first = std::move(best1);
  result.second = std::move(best2);
  result.best_val_accuracy = state.best_val_accuracy;
  return result;
}

CoteachResult train_coteaching(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                               const CoteachSchedule& schedule, const Featurizer& featurizer) {
  require_same_labels(train, val);
  return train_coteaching(featurize_dataset(featurizer, train), featurize_dataset(featurizer, val),
                          train.num_labels(), featurizer.hash_dim(), cfg, schedule);
}

std::string_view to_string(ConsensusRule rule) {
  return rule == ConsensusRule::heads_agree ? "heads_agree" : "heads_agree_with_label";
}

ConsensusRule consensus_rule_from_string(std::string_view name) {
  if (name == "heads_agree") return ConsensusRule::heads_agree;
  if (name == "heads_agree_with_label") return ConsensusRule::heads_agree_with_label;
  throw ValidationError("unknown consensus rule '" + std::string(name) + "'");
}

void CetaConfig::validate() const {
  if (!(lambda_w >= 0.0) || !std::isfinite(lambda_w)) throw ValidationError("lambda_w must be >= 0");
}

double total_variation(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ValidationError("distributions have different supports");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

namespace {

// d/dz of 0.5 * sum_i |p_i - q_i| with p = softmax(z); sign is sign(p - q).
void add_distance_gradient(const ProbVector& p, const std::vector<double>& sign, double weight,
                           std::vector<double>& dz) {
  double mean_sign = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mean_sign += sign[i] * p[i];
  for (std::size_t k = 0; k < p.size(); ++k) dz[k] += weight * 0.5 * p[k] * (sign[k] - mean_sign);
}

}  // namespace

CetaResult train_ceta(const FeaturizedData& train, const FeaturizedData& val, std::size_t num_labels,
                      std::size_t hash_dim, const TrainConfig& cfg, const CetaConfig& ceta,
                      const std::function<void(const CetaStep&)>& observer) {
  check_inputs(train, val, cfg);
  ceta.validate();
  const auto init_seed = cfg.effective_init_seed();
  auto params = ModelParams::initialize(hash_dim, cfg.hidden_size, num_labels, 2, cfg.drop_rate,
                                        init_seed, ceta.identical_heads);
  Rng dropout(derive_seed(init_seed, "dropout"));
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.seed);

  CetaResult result;
  ModelParams best = params;
  EarlyStopState state;
  LossWindow window;
  std::size_t epoch_consensus = 0;
  std::size_t epoch_steps = 0;
  std::vector<Activation> acts;
  std::vector<ProbVector> p1s, p2s;
  std::vector<std::size_t> consensus;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto& batch = sampler.next();
    const auto b = batch.size();
    acts.clear();
    p1s.clear();
    p2s.clear();
    consensus.clear();
    std::vector<bool> agrees(b, false);
    double distance = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const auto idx = batch[i];
      acts.push_back(encode(params, train.features[idx], &dropout));
      p1s.push_back(softmax(head_logits(params, acts.back(), 0)));
      p2s.push_back(softmax(head_logits(params, acts.back(), 1)));
      const auto a1 = p1s.back().argmax();
      const auto a2 = p2s.back().argmax();
      bool agree = a1 == a2;
      if (ceta.consensus_rule == ConsensusRule::heads_agree_with_label) agree = agree && a1 == train.labels[idx];
      agrees[i] = agree;
      if (agree) consensus.push_back(idx);
      distance += total_variation(p1s.back(), p2s.back());
    }
    const double mean_distance = distance / static_cast<double>(b);
    const double ce_weight = consensus.empty() ? 0.0 : 1.0 / static_cast<double>(consensus.size());
    const double w_weight = ceta.lambda_w / static_cast<double>(b);

    Gradient grad(params);
    double ce_sum = 0.0;
    std::vector<std::vector<double>> dlogits(2, std::vector<double>(num_labels));
    std::vector<double> sign(num_labels);
    for (std::size_t i = 0; i < b; ++i) {
      const auto y = train.labels[batch[i]];
      const auto& p1 = p1s[i];
      const auto& p2 = p2s[i];
      std::fill(dlogits[0].begin(), dlogits[0].end(), 0.0);
      std::fill(dlogits[1].begin(), dlogits[1].end(), 0.0);
      if (agrees[i]) {
        ce_sum -= std::log(std::max(p1[y], 1e-300)) + std::log(std::max(p2[y], 1e-300));
        for (std::size_t k = 0; k < num_labels; ++k) {
          const double onehot = k == y ? 1.0 : 0.0;
          dlogits[0][k] += ce_weight * (p1[k] - onehot);
          dlogits[1][k] += ce_weight * (p2[k] - onehot);
        }
      }
      if (w_weight > 0.0) {
        for (std::size_t k = 0; k < num_labels; ++k) {
          const double d = p1[k] - p2[k];
          sign[k] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        }
        add_distance_gradient(p1, sign, w_weight, dlogits[0]);
        for (auto& s : sign) s = -s;
        add_distance_gradient(p2, sign, w_weight, dlogits[1]);
      }
      grad.accumulate(params, train.features[batch[i]], acts[i], dlogits);
    }
    const double loss = ce_sum * ce_weight + ceta.lambda_w * mean_distance;
    if (!std::isfinite(loss) || !grad.all_finite()) {
      throw TrainingDiverged("non-finite CETA loss or gradient; reduce the learning rate");
    }
    apply_gradient(params, grad, effective_learning_rate(cfg, step), cfg.weight_decay);
    window.add(loss);
    window.selected += static_cast<double>(consensus.size()) / static_cast<double>(b);
    result.history.steps_run = step;
    if (observer) observer({step, batch, consensus, mean_distance});

    epoch_consensus += consensus.size();
    if (++epoch_steps == sampler.steps_per_epoch()) {
      if (epoch_consensus == 0) {
        throw MethodFailure("CETA heads reached no consensus for an entire epoch");
      }
      epoch_consensus = 0;
      epoch_steps = 0;
    }

    if (!is_eval_step(cfg, step)) continue;
    const auto evals = window.count;
    const double val_acc = accuracy(params, val, Heads::all());
    const double mean_loss = window.take();
    result.history.points.push_back(
        {step, mean_loss, val_acc, window.take_selected() / static_cast<double>(evals)});
    if (state.observe(val_acc, step)) best = params;
    if (state.should_stop(cfg.patience)) {
      result.history.stopped_early = step < cfg.steps;
      break;
    }
  }
  result.params = std::move(best);
  result.best_val_accuracy = state.best_val_accuracy;
  return result;
}

CetaResult train_ceta(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                      const CetaConfig& ceta, const Featurizer& featurizer) {
  require_same_labels(train, val);
  return train_ceta(featurize_dataset(featurizer, train), featurize_dataset(featurizer, val),
                    train.num_labels(), featurizer.hash_dim(), cfg, ceta);
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::vanilla: return "vanilla";
    case Method::coteaching: return "coteaching";
    case Method::ceta: return "ceta";
  }
  return "vanilla";
}

Method method_from_string(std::string_view name) {
  if (name == "vanilla") return Method::vanilla;
  if (name == "coteaching") return Method::coteaching;
  if (name == "ceta") return Method::ceta;
  throw ValidationError("unknown training method '" + std::string(name) + "'");
}

TrainedModel train_method(Method method, const FeaturizedData& train, const FeaturizedData& val,
                          std::size_t num_labels, std::size_t hash_dim,
                          const MethodSettings& settings) {
  TrainedModel model;
  model.method = method;
  switch (method) {
    case Method::vanilla: {
      auto r = train_vanilla(train, val, num_labels, hash_dim, settings.train);
      model.params = std::move(r.params);
      model.heads = Heads::one(0);
      model.history = std::move(r.history);
      model.best_val_accuracy = r.best_val_accuracy;
      break;
    }
    case Method::coteaching: {
      const auto schedule = settings.coteach.value_or(default_coteach_schedule(settings.train));
      auto r = train_coteaching(train, val, num_labels, hash_dim, settings.train, schedule);
      model.params = std::move(r.first);
      model.heads = Heads::one(0);
      model.history = std::move(r.history);
      model.best_val_accuracy = r.best_val_accuracy;
      break;
    }
    case Method::ceta: {
      auto r = train_ceta(train, val, num_labels, hash_dim, settings.train, settings.ceta);
      model.params = std::move(r.params);
      model.heads = Heads::all();
      model.history = std::move(r.history);
      model.best_val_accuracy = r.best_val_accuracy;
      break;
    }
  }
  return model;
}

}  // namespace noisebench

namespace noisebench {

using detail::shortest;

nlohmann::json MethodSettings::to_json() const {
  nlohmann::json j;
  j["train"] = train.to_json();
  if (coteach) {
    j["coteach"] = {{"tau", coteach->tau}, {"ramp_steps", coteach->ramp_steps}};
  } else {
    j["coteach"] = nullptr;
  }
  j["ceta"] = {{"consensus_rule", std::string(to_string(ceta.consensus_rule))},
               {"lambda_w", ceta.lambda_w},
               {"identical_heads", ceta.identical_heads}};
  return j;
}

MethodSettings MethodSettings::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("method settings must be a JSON object");
  MethodSettings s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "train") {
        s.train = TrainConfig::from_json(value);
      } else if (key == "coteach") {
        if (value.is_null()) continue;
        CoteachSchedule sched;
        for (const auto& [k, v] : value.items()) {
          if (k == "tau") sched.tau = v.get<double>();
          else if (k == "ramp_steps") sched.ramp_steps = v.get<std::size_t>();
          else throw ValidationError("unknown coteach field '" + k + "'");
        }
        sched.validate();
        s.coteach = sched;
      } else if (key == "ceta") {
        for (const auto& [k, v] : value.items()) {
          if (k == "consensus_rule") s.ceta.consensus_rule = consensus_rule_from_string(v.get<std::string>());
          else if (k == "lambda_w") s.ceta.lambda_w = v.get<double>();
          else if (k == "identical_heads") s.ceta.identical_heads = v.get<bool>();
          else throw ValidationError("unknown ceta field '" + k + "'");
        }
        s.ceta.validate();
      } else {
        throw ValidationError("unknown method settings field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid method settings: ") + e.what());
  }
  return s;
}

}  // namespace noisebench
