#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "noisebench/dataset.hpp"
#include "noisebench/error.hpp"
#include "noisebench/trainers.hpp"
#include "test_util.hpp"

using namespace noisebench;

namespace {

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::multiset<std::string> ids_of(const Dataset& d) {
  std::multiset<std::string> out;
  for (const auto& inst : d.instances()) out.insert(inst.id);
  return out;
}

}  // namespace

TEST(LabelSet, IndexLookup) {
  LabelSet labels({"neg", "pos"});
  EXPECT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels.index_of("pos"), 1u);
  EXPECT_FALSE(labels.find("neutral"));
  EXPECT_THROW(labels.index_of("neutral"), ValidationError);
  EXPECT_THROW(LabelSet({"a", "a"}), ValidationError);
}

TEST(Dataset, RejectsDuplicateIdsAndBadLabels) {
  Instance a{"x", "t", 0, 0, {}};
  Instance b{"x", "u", 1, 1, {}};
  EXPECT_THROW(Dataset(LabelSet({"a", "b"}), {a, b}), ValidationError);
  Instance c{"y", "u", 5, std::nullopt, {}};
  EXPECT_THROW(Dataset(LabelSet({"a", "b"}), {a, c}), ValidationError);
}

TEST(LoadDataset, ThreeRowTsv) {
  testutil::TempDir dir;
  write(dir / "d.tsv", "id\ttext\tlabel\n1\thello there\ta\n2\tgood bye\tb\n3\tsee you\ta\n");
  const auto d = load_dataset(dir / "d.tsv", DatasetFormat::tsv);
  EXPECT_EQ(d.num_labels(), 2u);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].id, "1");
  EXPECT_EQ(d[1].text, "good bye");
  EXPECT_EQ(d.labels().name(d[2].observed_label), "a");
}

TEST(LoadDataset, UnknownLabelAgainstSidecar) {
  testutil::TempDir dir;
  write(dir / "labels.txt", "a\nb\n");
  write(dir / "d.jsonl", "{\"id\":\"1\",\"text\":\"x\",\"label\":\"a\"}\n{\"id\":\"2\",\"text\":\"y\",\"label\":\"zebra\"}\n");
  try {
    load_dataset(dir / "d.jsonl", DatasetFormat::jsonl);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zebra"), std::string::npos);
  }
}

TEST(LoadDataset, AnnotatorLabelsRoundTrip) {
  testutil::TempDir dir;
  write(dir / "labels.txt", "a\nb\n");
  write(dir / "d.jsonl",
        "{\"id\":\"1\",\"text\":\"x\",\"label\":\"b\",\"gold_label\":\"a\",\"annotator_labels\":[\"b\",\"a\",\"b\"]}\n");
  const auto d = load_dataset(dir / "d.jsonl", DatasetFormat::jsonl);
  EXPECT_EQ(d[0].annotator_labels, (std::vector<LabelIndex>{1, 0, 1}));
  save_dataset(d, dir / "e.jsonl", DatasetFormat::jsonl);
  const auto e = load_dataset(dir / "e.jsonl", DatasetFormat::jsonl);
  EXPECT_EQ(e[0].annotator_labels, d[0].annotator_labels);
  EXPECT_EQ(e[0].gold_label, d[0].gold_label);
  EXPECT_EQ(e[0].observed_label, d[0].observed_label);
}

TEST(LoadDataset, MalformedRowReportsLine) {
  try {
    parse_dataset("{\"id\":\"1\",\"text\":\"x\",\"label\":\"a\"}\n{not json\n", DatasetFormat::jsonl);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  try {
    parse_dataset("id\ttext\tlabel\n1\tx\ta\n2\ty\n", DatasetFormat::tsv);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadDataset, DuplicateIdRejected) {
  EXPECT_THROW(parse_dataset("id\ttext\tlabel\n1\tx\ta\n1\ty\tb\n", DatasetFormat::tsv), ValidationError);
}

TEST(LoadDataset, FormatFromPath) {
  EXPECT_EQ(format_from_path("a/b.jsonl"), DatasetFormat::jsonl);
  EXPECT_EQ(format_from_path("b.tsv"), DatasetFormat::tsv);
  EXPECT_THROW(format_from_path("b.csv"), ValidationError);
}

TEST(Serialize, ByteStableRoundTripBothFormats) {
  auto d = generate_synthetic_corpus(3, 40, 6, 0.5, 11);
  std::vector<Instance> inst = d.instances();
  inst[0].text = "tab\there\nnewline and back\\slash";
  d = d.with_instances(inst);
  for (auto format : {DatasetFormat::jsonl, DatasetFormat::tsv}) {
    const auto text = serialize_dataset(d, format);
    const auto back = parse_dataset(text, format, d.labels());
    EXPECT_EQ(serialize_dataset(back, format), text);
    EXPECT_EQ(back[0].text, inst[0].text);
  }
}

TEST(Serialize, SaveLoadSaveIsByteIdentical) {
  testutil::TempDir dir;
  const auto d = generate_synthetic_corpus(4, 60, 8, 0.25, 3);
  save_labels(d.labels(), dir / "labels.txt");
  for (const std::string name : {"a.jsonl", "a.tsv"}) {
    const auto format = format_from_path(name);
    save_dataset(d, dir / name, format);
    const auto loaded = load_dataset(dir / name, format);
    save_dataset(loaded, dir / ("re-" + name), format);
    EXPECT_EQ(slurp(dir / name), slurp(dir / ("re-" + name)));
  }
}

TEST(SplitDataset, TenInstancesEightOneOne) {
  const auto d = generate_synthetic_corpus(2, 10, 4, 0.0, 1);
  const auto s = split_dataset(d, {0.8, 0.1, 0.1, 7});
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.train.split(), Split::train);
  EXPECT_EQ(s.test.split(), Split::test);
}

TEST(SplitDataset, DeterministicForSeed) {
  const auto d = generate_synthetic_corpus(3, 50, 4, 0.0, 1);
  const auto a = split_dataset(d, {0.6, 0.2, 0.2, 9});
  const auto b = split_dataset(d, {0.6, 0.2, 0.2, 9});
  EXPECT_EQ(serialize_dataset(a.train, DatasetFormat::jsonl), serialize_dataset(b.train, DatasetFormat::jsonl));
  EXPECT_EQ(serialize_dataset(a.test, DatasetFormat::jsonl), serialize_dataset(b.test, DatasetFormat::jsonl));
}

TEST(SplitDataset, UnionEqualsInputAsMultiset) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = generate_synthetic_corpus(3, 37 + seed * 13, 4, 0.0, seed);
    const auto s = split_dataset(d, {0.7, 0.15, 0.15, seed});
    auto u = ids_of(s.train);
    for (const auto& id : ids_of(s.validation)) u.insert(id);
    for (const auto& id : ids_of(s.test)) u.insert(id);
    EXPECT_EQ(u, ids_of(d));
  }
}

TEST(SplitDataset, InvalidSpecs) {
  const auto d = generate_synthetic_corpus(2, 10, 4, 0.0, 1);
  EXPECT_THROW(split_dataset(d, {0.5, 0.2, 0.2, 0}), ValidationError);
  EXPECT_THROW(split_dataset(d, {1.2, -0.1, -0.1, 0}), ValidationError);
  const auto three = generate_synthetic_corpus(2, 3, 4, 0.0, 1);
  const auto s = split_dataset(three, {0.98, 0.01, 0.01, 0});
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_THROW(split_dataset(d.with_split(Split::test), {0.8, 0.1, 0.1, 0}), ValidationError);
}

TEST(SyntheticCorpus, SameSeedByteIdentical) {
  const auto a = generate_synthetic_corpus(5, 300, 20, 0.2, 42);
  const auto b = generate_synthetic_corpus(5, 300, 20, 0.2, 42);
  const auto c = generate_synthetic_corpus(5, 300, 20, 0.2, 43);
  EXPECT_EQ(serialize_dataset(a, DatasetFormat::jsonl), serialize_dataset(b, DatasetFormat::jsonl));
  EXPECT_NE(serialize_dataset(a, DatasetFormat::jsonl), serialize_dataset(c, DatasetFormat::jsonl));
}

TEST(SyntheticCorpus, GoldEqualsObservedAndAllClassesPresent) {
  const auto d = generate_synthetic_corpus(6, 600, 10, 0.3, 5);
  std::set<LabelIndex> seen;
  for (const auto& inst : d.instances()) {
    ASSERT_TRUE(inst.gold_label);
    EXPECT_EQ(*inst.gold_label, inst.observed_label);
    seen.insert(inst.observed_label);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(SyntheticCorpus, OverlapControlsSharedVocabulary) {
  const auto disjoint = synthetic_vocabularies(4, 10, 0.0);
  for (std::size_t c = 0; c + 1 < 4; ++c) {
    std::set<std::string> a(disjoint[c].begin(), disjoint[c].end());
    for (const auto& t : disjoint[c + 1]) EXPECT_FALSE(a.count(t));
  }
  const auto shared = synthetic_vocabularies(4, 10, 0.3);
  std::set<std::string> a(shared[1].begin(), shared[1].end());
  std::size_t common = 0;
  for (const auto& t : shared[2]) common += a.count(t);
  EXPECT_EQ(common, 3u);
  const auto one = synthetic_vocabularies(4, 10, 1.0);
  for (std::size_t c = 1; c < 4; ++c) {
    EXPECT_EQ(std::set<std::string>(one[c].begin(), one[c].end()),
              std::set<std::string>(one[0].begin(), one[0].end()));
  }
}

TEST(SyntheticCorpus, TextsUseOwnClassVocabulary) {
  const auto d = generate_synthetic_corpus(3, 90, 8, 0.0, 2);
  const auto vocab = synthetic_vocabularies(3, 8, 0.0);
  for (const auto& inst : d.instances()) {
    std::set<std::string> allowed(vocab[inst.observed_label].begin(), vocab[inst.observed_label].end());
    for (const auto& tok : tokenize(inst.text)) EXPECT_TRUE(allowed.count(tok)) << tok;
  }
}

TEST(SyntheticCorpus, InvalidParameters) {
  EXPECT_THROW(generate_synthetic_corpus(1, 10, 8, 0.0, 0), ValidationError);
  EXPECT_THROW(generate_synthetic_corpus(5, 4, 8, 0.0, 0), ValidationError);
  EXPECT_THROW(generate_synthetic_corpus(3, 10, 3, 0.0, 0), ValidationError);
  EXPECT_THROW(generate_synthetic_corpus(3, 10, 8, 1.5, 0), ValidationError);
}

TEST(SyntheticCorpus, FullOverlapIsChanceLevel) {
  const std::size_t k = 5;
  const auto d = generate_synthetic_corpus(k, 2000, 40, 1.0, 17);
  const auto s = split_dataset(d, {0.8, 0.1, 0.1, 17});
  TrainConfig cfg;
  cfg.seed = 17;
  const Featurizer fz(1u << 14);
  const auto model = train_vanilla(s.train, s.validation, cfg, fz);
  const double acc = evaluate(model.params, fz, s.test, Heads::one(0)).accuracy;
  EXPECT_NEAR(acc, 1.0 / k, 0.05);
}
