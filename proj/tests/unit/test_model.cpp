#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <fstream>
#include <set>

#include "noisebench/checkpoint.hpp"
#include "noisebench/error.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/model.hpp"
#include "test_util.hpp"

using namespace noisebench;

namespace {

void zero_all(ModelParams& p) {
  for (std::size_t i = 0; i < p.parameter_count(); ++i) p.set_parameter(i, 0.0);
}

SparseVector random_sparse(std::mt19937_64& gen, std::size_t dim, std::size_t nnz) {
  std::set<std::uint32_t> idx;
  while (idx.size() < nnz) idx.insert(static_cast<std::uint32_t>(gen() % dim));
  std::normal_distribution<double> n(0.0, 1.0);
  SparseVector x;
  for (auto i : idx) x.push_back({i, n(gen)});
  return x;
}

double batch_loss(const ModelParams& p, const FeaturizedData& data, const std::vector<std::size_t>& batch,
                  Heads heads) {
  Gradient g(p);
  return cross_entropy_gradient(p, data, batch, heads, nullptr, g);
}

// Max relative error between analytic and central-difference gradients over `probes`.
double gradient_check(ModelParams p, const FeaturizedData& data, const std::vector<std::size_t>& batch,
                      Heads heads, const std::vector<std::size_t>& probes) {
  Gradient g(p);
  cross_entropy_gradient(p, data, batch, heads, nullptr, g);
  const double eps = 1e-6;
  double worst = 0.0;
  for (auto i : probes) {
    const double v = p.get_parameter(i);
    p.set_parameter(i, v + eps);
    const double up = batch_loss(p, data, batch, heads);
    p.set_parameter(i, v - eps);
    const double down = batch_loss(p, data, batch, heads);
    p.set_parameter(i, v);
    const double numeric = (up - down) / (2 * eps);
    const double analytic = g.get(i);
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    const double err = scale < 1e-7 ? std::abs(numeric - analytic) : std::abs(numeric - analytic) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("  Hello\tWORLD\nx "), (std::vector<std::string>{"hello", "world", "x"}));
  EXPECT_TRUE(tokenize("").empty());
}

TEST(Featurizer, EmptyTextIsZeroVector) {
  EXPECT_TRUE(Featurizer().featurize("").empty());
  EXPECT_TRUE(Featurizer().featurize("   ").empty());
}

TEST(Featurizer, Deterministic) {
  const Featurizer f;
  const auto a = f.featurize("a b");
  const auto b = f.featurize("a b");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].index, b[i].index);
    EXPECT_EQ(a[i].value, b[i].value);
  }
}

TEST(Featurizer, UnigramsAndBigram) {
  const Featurizer f;
  const auto x = f.featurize("a b");
  EXPECT_EQ(x.size(), 3u);
  const auto toks = tokenize("a b");
  std::set<std::uint32_t> expected{f.hash_ngram(toks, 0, 1), f.hash_ngram(toks, 1, 1), f.hash_ngram(toks, 0, 2)};
  std::set<std::uint32_t> got;
  for (const auto& e : x) got.insert(e.index);
  EXPECT_EQ(got, expected);
}

TEST(Featurizer, NormalizedSortedInRange) {
  const Featurizer f(1024);
  const auto x = f.featurize("the cat the cat sat on the mat");
  double norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LT(x[i].index, 1024u);
    if (i) EXPECT_LT(x[i - 1].index, x[i].index);
    norm += x[i].value * x[i].value;
  }
  EXPECT_NEAR(norm, 1.0, 1e-12);
}

TEST(Featurizer, RepeatedNgramsAccumulate) {
  const Featurizer f(1u << 18, {1});
  const auto x = f.featurize("a a b");
  ASSERT_EQ(x.size(), 2u);
  const auto a = f.hash_ngram({"a"}, 0, 1);
  const double va = x[0].index == a ? x[0].value : x[1].value;
  EXPECT_NEAR(va, 2.0 / std::sqrt(5.0), 1e-12);
}

TEST(Featurizer, ValidationAndJson) {
  EXPECT_THROW(Featurizer(1000), ValidationError);
  EXPECT_THROW(Featurizer(1024, {}), ValidationError);
  const Featurizer f(2048, {1, 3}, 9);
  EXPECT_EQ(Featurizer::from_json(f.to_json()), f);
  const auto a = Featurizer(1u << 18, {1}, 1).featurize("one two three four");
  const auto b = Featurizer(1u << 18, {1}, 2).featurize("one two three four");
  std::set<std::uint32_t> ia, ib;
  for (const auto& e : a) ia.insert(e.index);
  for (const auto& e : b) ib.insert(e.index);
  EXPECT_NE(ia, ib);
}

TEST(Softmax, SumsToOneAndStable) {
  const std::vector<double> big{1000.0, 1001.0, 999.0};
  const auto p = softmax(big);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_EQ(p.argmax(), 1u);
  EXPECT_EQ((ProbVector{{0.5, 0.5}}).argmax(), 0u);
}

TEST(Forward, ZeroWeightsGiveUniform) {
  auto p = ModelParams::initialize(64, 8, 4, 1, 0.0, 1);
  zero_all(p);
  const auto probs = forward(p, Featurizer(64).featurize("some words here"), Heads::one(0), false, nullptr);
  for (double v : probs.probs) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, EvaluationModeDeterministic) {
  const auto p = ModelParams::initialize(256, 16, 3, 1, 0.5, 2);
  const auto x = Featurizer(256).featurize("alpha beta gamma");
  const auto a = forward(p, x, Heads::one(0), false, nullptr);
  const auto b = forward(p, x, Heads::one(0), false, nullptr);
  EXPECT_EQ(a.probs, b.probs);
}

TEST(Forward, DropoutReproducibleWithSeed) {
  const auto p = ModelParams::initialize(256, 32, 3, 1, 0.5, 2);
  const auto x = Featurizer(256).featurize("alpha beta gamma");
  Rng r1(7), r2(7);
  EXPECT_EQ(forward(p, x, Heads::one(0), true, &r1).probs, forward(p, x, Heads::one(0), true, &r2).probs);
  const auto act = encode(p, x, &r1);
  for (double m : act.mask) EXPECT_TRUE(m == 0.0 || std::abs(m - 2.0) < 1e-12);
}

TEST(Forward, ProbabilitiesSumToOne) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 1000; ++i) {
    const auto p = ModelParams::initialize(128, 8, 2 + i % 9, 1 + i % 2, 0.0, gen());
    const auto x = random_sparse(gen, 128, 1 + i % 10);
    const auto probs = forward(p, x, i % 3 == 0 ? Heads::all() : Heads::one(0), false, nullptr);
    ASSERT_NEAR(probs.sum(), 1.0, 1e-9);
    for (double v : probs.probs) ASSERT_GE(v, 0.0);
  }
}

TEST(Forward, NonFiniteParametersRejected) {
  auto p = ModelParams::initialize(64, 8, 3, 1, 0.0, 1);
  p.set_parameter(p.parameter_count() - 1, std::nan(""));
  EXPECT_FALSE(p.all_finite());
  EXPECT_THROW(forward(p, Featurizer(64).featurize("x"), Heads::one(0), false, nullptr), TrainingDiverged);
}

TEST(InstanceLoss, UniformIsLogK) {
  auto p = ModelParams::initialize(64, 8, 5, 1, 0.0, 1);
  zero_all(p);
  EXPECT_NEAR(instance_loss(p, Featurizer(64).featurize("x y"), 2, Heads::one(0)), std::log(5.0), 1e-12);
}

TEST(InstanceLoss, ConfidentCorrectIsNearZero) {
  auto p = ModelParams::initialize(64, 8, 3, 1, 0.0, 1);
  zero_all(p);
  const auto bias1 = p.parameter_count() - 3 + 1;
  p.set_parameter(bias1, 800.0);
  EXPECT_NEAR(instance_loss(p, Featurizer(64).featurize("x"), 1, Heads::one(0)), 0.0, 1e-12);
  EXPECT_GT(instance_loss(p, Featurizer(64).featurize("x"), 0, Heads::one(0)), 100.0);
}

TEST(InstanceLoss, NonNegativeProperty) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 500; ++i) {
    const auto p = ModelParams::initialize(128, 8, 3, 2, 0.0, gen());
    const auto x = random_sparse(gen, 128, 5);
    EXPECT_GE(instance_loss(p, x, gen() % 3, Heads::one(gen() % 2)), 0.0);
    EXPECT_GE(instance_loss(p, x, gen() % 3, Heads::all()), 0.0);
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnTenParameterModel) {
  // hash_dim 1, H 2, K 2: 2 + 2 + 4 + 2 = 10 parameters.
  const auto p = ModelParams::initialize(1, 2, 2, 1, 0.0, 5);
  ASSERT_EQ(p.parameter_count(), 10u);
  FeaturizedData data;
  data.features = {{{0, 1.0}}, {{0, -0.7}}, {{0, 0.4}}};
  data.labels = {0, 1, 1};
  std::vector<std::size_t> probes(10);
  for (std::size_t i = 0; i < 10; ++i) probes[i] = i;
  EXPECT_LT(gradient_check(p, data, {0, 1, 2}, Heads::one(0), probes), 1e-4);
}

TEST(Gradient, MatchesFiniteDifferencesTwoHeads) {
  std::mt19937_64 gen(6);
  const auto p = ModelParams::initialize(64, 8, 3, 2, 0.0, 6);
  FeaturizedData data;
  for (int i = 0; i < 6; ++i) {
    data.features.push_back(random_sparse(gen, 64, 4));
    data.labels.push_back(gen() % 3);
  }
  std::vector<std::size_t> probes;
  for (int i = 0; i < 100; ++i) probes.push_back(gen() % p.parameter_count());
  for (const auto& e : data.features[0]) probes.push_back(e.index * 8 + gen() % 8);
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5};
  EXPECT_LT(gradient_check(p, data, batch, Heads::all(), probes), 1e-4);
  EXPECT_LT(gradient_check(p, data, batch, Heads::one(1), probes), 1e-4);
}

TEST(SgdStep, ZeroLearningRateLeavesParamsUnchanged) {
  auto p = ModelParams::initialize(64, 8, 3, 1, 0.1, 1);
  const auto before = p;
  FeaturizedData data;
  data.features = {Featurizer(64).featurize("a b"), Featurizer(64).featurize("c d")};
  data.labels = {0, 2};
  Rng rng(1);
  sgd_step(p, data, std::vector<std::size_t>{0, 1}, Heads::one(0), 0.0, 0.5, rng);
  for (std::size_t i = 0; i < p.parameter_count(); ++i) ASSERT_EQ(p.get_parameter(i), before.get_parameter(i));
}

TEST(SgdStep, SeparableBatchLossDecreases) {
  const Featurizer f(256);
  const auto d = generate_synthetic_corpus(3, 30, 6, 0.0, 2);
  const auto data = featurize_dataset(f, d);
  std::vector<std::size_t> batch(d.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  auto p = ModelParams::initialize(256, 16, 3, 1, 0.1, 3);
  Rng rng(3);
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 200; ++s) {
    last = sgd_step(p, data, batch, Heads::one(0), 0.05, 1e-4, rng);
    if (s == 0) first = last;
  }
  EXPECT_LT(last, first);
}

TEST(SgdStep, EmptyBatchRejected) {
  auto p = ModelParams::initialize(64, 8, 3, 1, 0.1, 1);
  FeaturizedData data;
  Rng rng(1);
  EXPECT_THROW(sgd_step(p, data, std::vector<std::size_t>{}, Heads::one(0), 0.1, 0.0, rng), ValidationError);
}

TEST(SgdStep, DivergenceSignalled) {
  auto p = ModelParams::initialize(64, 8, 3, 1, 0.0, 1);
  FeaturizedData data;
  data.features = {Featurizer(64).featurize("a b")};
  data.labels = {1};
  Rng rng(1);
  EXPECT_THROW(
      {
        for (int i = 0; i < 50; ++i) sgd_step(p, data, std::vector<std::size_t>{0}, Heads::one(0), 1e200, 0.0, rng);
      },
      TrainingDiverged);
}

TEST(WeightDecay, ShrinksNormMonotonicallyWithZeroGradient) {
  auto p = ModelParams::initialize(64, 8, 3, 2, 0.0, 1);
  const Gradient zero(p);
  double prev = p.weight_norm_squared();
  for (int i = 0; i < 20; ++i) {
    apply_gradient(p, zero, 0.1, 0.5);
    const double now = p.weight_norm_squared();
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(LearningRate, Warmup) {
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.warmup_steps = 4;
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 1), 0.05);
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 4), 0.2);
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 9), 0.2);
  cfg.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(effective_learning_rate(cfg, 1), 0.2);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.drop_rate = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.seed = 77;
  cfg.init_seed = 5;
  cfg.learning_rate = 0.123;
  EXPECT_EQ(TrainConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"stepz", 3}}), ValidationError);
}

TEST(Evaluate, UniformModelIsChanceOnBalancedData) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (std::size_t i = 0; i < 40; ++i) rows.push_back({"w" + std::to_string(i), i % 4});
  const auto d = testutil::make_dataset({"a", "b", "c", "d"}, rows);
  auto p = ModelParams::initialize(64, 8, 4, 1, 0.0, 1);
  zero_all(p);
  EXPECT_DOUBLE_EQ(evaluate(p, Featurizer(64), d, Heads::one(0)).accuracy, 0.25);
}

TEST(Evaluate, AccuracyMatchesRecount) {
  const auto d = generate_synthetic_corpus(4, 200, 8, 0.5, 1);
  const auto p = ModelParams::initialize(512, 8, 4, 2, 0.0, 9);
  const auto r = evaluate(p, Featurizer(512), d, Heads::all());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    correct += r.per_instance[i].probs.argmax() == d[i].observed_label;
    EXPECT_NEAR(r.per_instance[i].loss, -std::log(r.per_instance[i].probs[d[i].observed_label]), 1e-12);
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / d.size());
}

TEST(Evaluate, PerfectModel) {
  const auto d = testutil::make_dataset({"a", "b"}, {{"x", 0}, {"y", 1}, {"x x", 0}, {"y y", 1}});
  const Featurizer f(64, {1});
  const auto data = featurize_dataset(f, d);
  auto p = ModelParams::initialize(64, 8, 2, 1, 0.0, 1);
  Rng rng(1);
  for (int i = 0; i < 300; ++i) sgd_step(p, data, std::vector<std::size_t>{0, 1, 2, 3}, Heads::one(0), 0.1, 0.0, rng);
  EXPECT_DOUBLE_EQ(accuracy(p, data, Heads::one(0)), 1.0);
}

TEST(Evaluate, EmptyDatasetRejected) {
  const auto p = ModelParams::initialize(64, 8, 2, 1, 0.0, 1);
  EXPECT_THROW(accuracy(p, FeaturizedData{}, Heads::one(0)), ValidationError);
}

TEST(Checkpoint, JsonRoundTripIsBitExact) {
  testutil::TempDir dir;
  Checkpoint c{Featurizer(256, {1, 2}, 3), LabelSet({"x", "y", "z"}), ModelParams::initialize(256, 8, 3, 2, 0.25, 4)};
  for (const std::string name : {"m.json", "m.nbck"}) {
    save_checkpoint(c, dir / name);
    const auto back = load_checkpoint(dir / name);
    EXPECT_EQ(back.featurizer, c.featurizer);
    EXPECT_EQ(back.labels, c.labels);
    EXPECT_EQ(back.params.drop_rate(), c.params.drop_rate());
    ASSERT_EQ(back.params.parameter_count(), c.params.parameter_count());
    for (std::size_t i = 0; i < c.params.parameter_count(); ++i) {
      ASSERT_EQ(back.params.get_parameter(i), c.params.get_parameter(i)) << name << " " << i;
    }
  }
}

TEST(Checkpoint, CorruptFileRejected) {
  testutil::TempDir dir;
  std::ofstream(dir / "bad.nbck") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "bad.nbck"), ValidationError);
  std::ofstream(dir / "bad.json") << "{\"format\": 3}";
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), ValidationError);
}
