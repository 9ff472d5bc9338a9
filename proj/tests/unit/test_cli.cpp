#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "test_util.hpp"

namespace {

int run(const std::string& args, const std::string& env = "") {
  const auto cmd = env + " " + std::string(NOISEBENCH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run("gen --preset yoruba-like --seed 3 --out " + (dir / "d").string()), 0);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  testutil::TempDir dir;
};

}  // namespace

TEST_F(Cli, GenWritesSplitsLabelsAndRules) {
  for (const auto* f : {"d/train.jsonl", "d/validation.jsonl", "d/test.jsonl", "d/labels.txt", "d/rules.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(run("gen --classes 3 --size 100 --vocab 8 --split 0.8,0.1,0.1 --format tsv --out " + p("t")), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "t/train.tsv"));
  EXPECT_EQ(run("gen --classes 3 --size 100 --split 0.5,0.1,0.1 --out " + p("bad")), 1);
}

TEST_F(Cli, NoiseTrainCleanPipeline) {
  ASSERT_EQ(run("noise --input " + p("d/train.jsonl") + " --out " + p("d/noisy.jsonl") +
                " --kind feature_dependent --rules " + p("d/rules.json") + " --matrix " + p("m.csv")),
            0);
  EXPECT_NE(slurp(dir / "m.csv").find("gold\\observed"), std::string::npos);
  const std::string data = " --train " + p("d/noisy.jsonl") + " --val " + p("d/validation.jsonl") +
                           " --test " + p("d/test.jsonl") + " --hash-dim 4096 --hidden 16 --steps 100";
  EXPECT_EQ(run("train --method ceta --out " + p("m.json") + data), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.json"));
  EXPECT_EQ(run("clean --folds 3 --report " + p("rep.json") + " --out " + p("clean.jsonl") + data), 0);
  const auto report = nlohmann::json::parse(slurp(dir / "rep.json"));
  EXPECT_TRUE(report.contains("diagnostics"));
  EXPECT_TRUE(report.contains("kept_ids"));
  EXPECT_EQ(run("plotdata --report " + p("rep.json") + " --out-dir " + p("plots")), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "plots/threshold_series.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "plots/matrix_before.csv"));
}

TEST_F(Cli, ExitCodes) {
  const std::string data = " --train " + p("d/train.jsonl") + " --val " + p("d/validation.jsonl");
  EXPECT_EQ(run("train --lr -1" + data), 1);
  EXPECT_EQ(run("train --method mentornet" + data), 1);
  EXPECT_EQ(run("train --train " + p("missing.jsonl") + " --val " + p("d/validation.jsonl")), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("clean --threshold 0 --folds 2 --hash-dim 1024 --hidden 8 --steps 20" + data), 2);
  ASSERT_EQ(run("gen --preset separable --seed 1 --out " + p("s")), 0);
  EXPECT_EQ(run("train --steps 20 --hidden 8 --hash-dim 1024 --lr 1e200 --weight-decay 0 --train " +
                p("s/train.jsonl") + " --val " + p("s/validation.jsonl")),
            2);
  EXPECT_EQ(run("train --steps 20 --hidden 8 --hash-dim 1024" + data, "NOISEBENCH_WORKERS=abc"), 0);
  EXPECT_EQ(run("--workers 0 train --steps 20" + data), 1);
}

TEST_F(Cli, EnsembleTrainAndPredictFromManifest) {
  const std::string data = " --train " + p("d/train.jsonl") + " --val " + p("d/validation.jsonl") +
                           " --hash-dim 4096 --hidden 16 --steps 100";
  ASSERT_EQ(run("ensemble --kind boosting --members 2 --fraction 0.5 --out " + p("e/ens.json") + data), 0);
  EXPECT_EQ(run("ensemble --manifest " + p("e/ens.json") + " --data " + p("d/test.jsonl") + " --predictions " +
                p("pred.csv")),
            0);
  EXPECT_NE(slurp(dir / "pred.csv").find("id,predicted,p_c0"), std::string::npos);
}

TEST_F(Cli, RunIsReproducibleAndTomlDrivesSubcommands) {
  std::ofstream(dir / "exp.json") << R"({"dataset":{"synthetic":{"num_classes":3,"train_size":200,
    "validation_size":50,"test_size":50,"vocab_per_class":10,"overlap":0.2}},
    "noise":{"kind":"uniform_random","level":0.2},"method":"ceta",
    "settings":{"train":{"steps":80,"hidden_size":16}},"runs":2,"base_seed":4})";
  ASSERT_EQ(run("run --experiment " + p("exp.json") + " --reproducible --out " + p("a.json")), 0);
  ASSERT_EQ(run("--workers 1 run --experiment " + p("exp.json") + " --reproducible --out " + p("b.json")), 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  std::ofstream(dir / "cfg.toml") << "[run]\nexperiment = \"" << p("exp.json") << "\"\nreproducible = true\nout = \""
                                  << p("c.json") << "\"\n";
  ASSERT_EQ(run("--config " + p("cfg.toml") + " run"), 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "c.json"));
}

TEST_F(Cli, CompareWritesCsv) {
  std::ofstream(dir / "cmp.json") << R"({"base":{"dataset":{"synthetic":{"num_classes":3,"train_size":200,
    "validation_size":50,"test_size":50,"vocab_per_class":10}},
    "settings":{"train":{"steps":60,"hidden_size":16}},"runs":1},
    "methods":["vanilla","coteaching"],"noise":[{"kind":"none"},{"kind":"uniform_random","level":0.3}]})";
  ASSERT_EQ(run("compare --experiments " + p("cmp.json") + " --csv " + p("t.csv")), 0);
  const auto csv = slurp(dir / "t.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}
