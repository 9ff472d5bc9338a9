#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "noisebench/dataset.hpp"
#include "noisebench/error.hpp"
#include "noisebench/noise.hpp"
#include "test_util.hpp"

using namespace noisebench;

namespace {

std::size_t flipped(const Dataset& d) {
  std::size_t n = 0;
  for (const auto& inst : d.instances()) n += inst.observed_label != *inst.gold_label;
  return n;
}

// Every instance gets `annotators` labels, at least one of which disagrees with gold.
Dataset with_disagreeing_annotators(const Dataset& d) {
  std::vector<Instance> out = d.instances();
  const auto k = d.num_labels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto g = *out[i].gold_label;
    out[i].annotator_labels = {g, (g + 1 + i % (k - 1)) % k, g};
  }
  return d.with_instances(std::move(out));
}

RuleLabeler vocabulary_rules(const std::vector<std::vector<std::string>>& vocab, const LabelSet& labels) {
  RuleLabeler r;
  for (std::size_t c = 0; c < vocab.size(); ++c) r.rules.push_back({vocab[c], labels.name(c)});
  return r;
}

}  // namespace

TEST(UniformNoise, LevelZeroIsIdentity) {
  const auto d = generate_synthetic_corpus(4, 200, 8, 0.0, 1);
  const auto n = inject_uniform_noise(d, 0.0, 9);
  EXPECT_EQ(flipped(n), 0u);
  EXPECT_DOUBLE_EQ(noise_level(n), 0.0);
}

TEST(UniformNoise, ExactCountForced) {
  const auto d = generate_synthetic_corpus(4, 1000, 8, 0.0, 1);
  const auto n = inject_uniform_noise(d, 0.3, 9);
  EXPECT_EQ(flipped(n), 300u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(n[i].text, d[i].text);
}

TEST(UniformNoise, MeasuredLevelWithinOneOverN) {
  for (double level : {0.1, 0.2, 0.3, 0.77}) {
    for (std::size_t n : {37u, 500u, 1001u}) {
      const auto d = generate_synthetic_corpus(3, n, 8, 0.0, n);
      const auto noisy = inject_uniform_noise(d, level, 4);
      EXPECT_EQ(flipped(noisy), static_cast<std::size_t>(std::llround(level * n)));
      EXPECT_LE(std::abs(noise_level(noisy) - level), 1.0 / n);
    }
  }
}

TEST(UniformNoise, BinaryOffDiagonalBalanced) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (std::size_t i = 0; i < 1000; ++i) rows.push_back({"t" + std::to_string(i), i % 2});
  const auto d = testutil::make_dataset({"a", "b"}, rows);
  const auto n = inject_uniform_noise(d, 0.3, 123);
  std::size_t ab = 0, ba = 0;
  for (const auto& inst : n.instances()) {
    if (*inst.gold_label == 0 && inst.observed_label == 1) ++ab;
    if (*inst.gold_label == 1 && inst.observed_label == 0) ++ba;
  }
  const auto m = noise_matrix(n);
  EXPECT_EQ(m.count(0, 1), ab);
  EXPECT_EQ(m.count(1, 0), ba);
  EXPECT_EQ(ab + ba, 300u);
  EXPECT_NEAR(static_cast<double>(ab), 150.0, 30.0);
  EXPECT_NEAR(static_cast<double>(ba), 150.0, 30.0);
}

TEST(UniformNoise, SeedDeterminesResult) {
  const auto d = generate_synthetic_corpus(4, 300, 8, 0.0, 1);
  EXPECT_EQ(serialize_dataset(inject_uniform_noise(d, 0.2, 5), DatasetFormat::jsonl),
            serialize_dataset(inject_uniform_noise(d, 0.2, 5), DatasetFormat::jsonl));
  EXPECT_NE(serialize_dataset(inject_uniform_noise(d, 0.2, 5), DatasetFormat::jsonl),
            serialize_dataset(inject_uniform_noise(d, 0.2, 6), DatasetFormat::jsonl));
}

TEST(UniformNoise, RequiresGoldAndValidLevel) {
  auto d = generate_synthetic_corpus(2, 20, 4, 0.0, 1);
  EXPECT_THROW(inject_uniform_noise(d, 1.5, 0), ValidationError);
  auto inst = d.instances();
  inst[3].gold_label.reset();
  EXPECT_THROW(inject_uniform_noise(d.with_instances(inst), 0.1, 0), ValidationError);
}

TEST(UniformNoise, YorubaTableLevel) {
  const auto d = generate_synthetic_corpus(7, 1340, 30, 0.3, 8);
  const auto n = inject_uniform_noise(d, 0.3328, 8);
  EXPECT_NEAR(noise_matrix(n).noise_level(), 0.3328, 0.0005);
}

TEST(UniformNoise, HausaTableLevel) {
  const auto d = generate_synthetic_corpus(5, 2045, 30, 0.3, 8);
  const auto n = inject_uniform_noise(d, 0.5037, 8);
  EXPECT_NEAR(noise_level(n), 0.5037, 0.00005);
}

TEST(RuleNoise, ExactVocabularyRulesGiveZeroNoise) {
  const auto d = generate_synthetic_corpus(4, 400, 10, 0.0, 2);
  const auto rules = vocabulary_rules(synthetic_vocabularies(4, 10, 0.0), d.labels());
  const auto r = inject_rule_noise(d, rules);
  EXPECT_EQ(noise_level(r.dataset), 0.0);
  EXPECT_TRUE(r.unmatched_ids.empty());
}

TEST(RuleNoise, OverlappingKeywordsNoisyAndRepeatable) {
  const auto d = generate_synthetic_corpus(4, 400, 10, 0.4, 2);
  const auto rules = vocabulary_rules(synthetic_vocabularies(4, 10, 0.4), d.labels());
  const auto a = inject_rule_noise(d, rules);
  const auto b = inject_rule_noise(d, rules);
  EXPECT_GT(noise_level(a.dataset), 0.0);
  EXPECT_EQ(noise_matrix(a.dataset).to_csv(), noise_matrix(b.dataset).to_csv());
}

TEST(RuleNoise, IdenticalTextIdenticalLabel) {
  const auto d = testutil::make_dataset({"a", "b", "c"}, {{"x y z", 0}, {"x y z", 1}, {"x y z", 2}, {"q", 2}});
  RuleLabeler rules;
  rules.rules.push_back({{"y"}, "b"});
  const auto r = inject_rule_noise(d, rules);
  EXPECT_EQ(r.dataset[0].observed_label, 1u);
  EXPECT_EQ(r.dataset[1].observed_label, 1u);
  EXPECT_EQ(r.dataset[2].observed_label, 1u);
  EXPECT_EQ(r.dataset[3].observed_label, 2u);
  EXPECT_EQ(r.unmatched_ids, std::vector<std::string>{"r3"});
}

TEST(RuleNoise, RandomFallbackIsPerText) {
  const auto d = testutil::make_dataset({"a", "b", "c"}, {{"p q", 0}, {"p q", 1}, {"r s", 2}});
  RuleLabeler rules;
  rules.fallback = RuleLabeler::Fallback::random;
  rules.fallback_seed = 5;
  const auto r = inject_rule_noise(d, rules);
  EXPECT_EQ(r.dataset[0].observed_label, r.dataset[1].observed_label);
}

TEST(RuleNoise, PhrasesMatchContiguousTokens) {
  const auto d = testutil::make_dataset({"a", "b"}, {{"new york city", 0}, {"york new", 0}});
  RuleLabeler rules;
  rules.rules.push_back({{"New York"}, "b"});
  const auto r = inject_rule_noise(d, rules);
  EXPECT_EQ(r.dataset[0].observed_label, 1u);
  EXPECT_EQ(r.dataset[1].observed_label, 0u);
}

TEST(RuleNoise, UnknownRuleLabelRejected) {
  const auto d = testutil::make_dataset({"a", "b"}, {{"x", 0}});
  RuleLabeler rules;
  rules.rules.push_back({{"x"}, "nope"});
  EXPECT_THROW(inject_rule_noise(d, rules), ValidationError);
}

TEST(RuleNoise, JsonRoundTrip) {
  RuleLabeler rules;
  rules.rules.push_back({{"a", "b c"}, "x"});
  rules.fallback = RuleLabeler::Fallback::random;
  rules.fallback_seed = 11;
  const auto back = RuleLabeler::from_json(rules.to_json());
  EXPECT_EQ(back.to_json(), rules.to_json());
}

TEST(AnnotationNoise, LevelZeroIsIdentity) {
  const auto d = with_disagreeing_annotators(generate_synthetic_corpus(3, 100, 8, 0.0, 1));
  EXPECT_EQ(flipped(inject_annotation_noise(d, 0.0, 3)), 0u);
}

TEST(AnnotationNoise, UnreachableLevelReportsMaximum) {
  auto d = generate_synthetic_corpus(3, 100, 8, 0.0, 1);
  auto inst = d.instances();
  for (auto& i : inst) i.annotator_labels = {*i.gold_label, *i.gold_label};
  try {
    inject_annotation_noise(d.with_instances(inst), 0.1, 3);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("attainable level is 0 "), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("attainable"), std::string::npos);
  }
}

TEST(AnnotationNoise, ExactCountAndMembership) {
  const auto d = with_disagreeing_annotators(generate_synthetic_corpus(4, 1000, 8, 0.0, 1));
  const auto n = inject_annotation_noise(d, 0.2, 3);
  EXPECT_EQ(flipped(n), 200u);
  for (const auto& inst : n.instances()) {
    if (inst.observed_label == *inst.gold_label) continue;
    const auto& pool = inst.annotator_labels;
    EXPECT_NE(std::find(pool.begin(), pool.end(), inst.observed_label), pool.end());
  }
}

TEST(AnnotationNoise, RequiresAnnotatorLists) {
  const auto d = generate_synthetic_corpus(3, 50, 8, 0.0, 1);
  EXPECT_THROW(inject_annotation_noise(d, 0.1, 0), ValidationError);
}

TEST(NoiseMatrix, DiagonalWhenClean) {
  const auto d = generate_synthetic_corpus(4, 200, 8, 0.0, 1);
  const auto m = noise_matrix(d);
  EXPECT_EQ(m.trace(), m.total());
  EXPECT_EQ(m.total(), d.size());
  EXPECT_EQ(m.noise_level(), 0.0);
}

TEST(NoiseMatrix, ConservationAndAgreement) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = inject_uniform_noise(generate_synthetic_corpus(5, 321, 8, 0.0, seed), 0.17 * seed, seed);
    const auto m = noise_matrix(d);
    std::size_t sum = 0;
    for (std::size_t g = 0; g < 5; ++g) {
      for (std::size_t o = 0; o < 5; ++o) sum += m.count(g, o);
    }
    EXPECT_EQ(sum, d.size());
    EXPECT_NEAR(m.noise_level(), noise_level(d), 1e-12);
    EXPECT_NEAR(static_cast<double>(m.total() - m.trace()) / d.size(), noise_level(d), 1e-12);
  }
}

TEST(NoiseMatrix, ErrorsOnMissingGoldOrEmpty) {
  auto d = generate_synthetic_corpus(2, 10, 4, 0.0, 1);
  auto inst = d.instances();
  inst[0].gold_label.reset();
  EXPECT_THROW(noise_matrix(d.with_instances(inst)), ValidationError);
  EXPECT_THROW(noise_level(d.with_instances({})), ValidationError);
}

TEST(NoiseMatrix, CsvAndJsonExport) {
  const auto d = inject_uniform_noise(generate_synthetic_corpus(3, 90, 8, 0.0, 1), 0.3, 2);
  const auto m = noise_matrix(d);
  const auto csv = m.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "gold\\observed,c0,c1,c2");
  const auto j = m.to_json();
  EXPECT_TRUE(j.contains("probabilities"));
  const auto back = NoiseMatrix::from_json(j);
  EXPECT_EQ(back.to_csv(), csv);
  for (const auto& row : m.row_normalized()) {
    double s = 0.0;
    for (double v : row) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ApplyNoise, Dispatch) {
  const auto d = with_disagreeing_annotators(generate_synthetic_corpus(3, 100, 8, 0.0, 1));
  NoiseSpec spec;
  spec.kind = NoiseKind::uniform_random;
  spec.target_level = 0.1;
  EXPECT_EQ(flipped(apply_noise(d, spec)), 10u);
  spec.kind = NoiseKind::pseudo_real_world;
  EXPECT_EQ(flipped(apply_noise(d, spec)), 10u);
  spec.kind = NoiseKind::none;
  EXPECT_EQ(flipped(apply_noise(inject_uniform_noise(d, 0.5, 1), spec)), 0u);
  spec.kind = NoiseKind::feature_dependent;
  EXPECT_THROW(apply_noise(d, spec), ValidationError);
  EXPECT_EQ(noise_kind_from_string("uniform_random"), NoiseKind::uniform_random);
  EXPECT_THROW(noise_kind_from_string("gaussian"), ValidationError);
}
