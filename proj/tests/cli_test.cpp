// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cda/cli.hpp"

namespace cda {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cda_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  // Small dataset and model settings used by the pipeline tests.
  std::vector<std::string> small_synth() const {
    return {"synth.n_pairs=60",      "synth.vocab_size=60", "synth.n_topics=3",
            "synth.max_sentences=4", "synth.min_sentences=2", "synth.max_tokens=5"};
  }
  std::vector<std::string> small_model() const {
    return {"model.embed_dim=4", "model.hidden=3", "train.max_epochs=2", "train.batch_size=8",
            "train.learning_rate=0.01", "--threads", "1"};
  }

  void make_data() {
    std::vector<std::string> args{"gen-synth", "--out-dir", (dir_ / "data").string(), "--seed", "5"};
    for (const auto& s : small_synth()) args.push_back(s);
    ASSERT_EQ(run(args), 0) << err_.str();
  }

  void make_checkpoint(const std::string& variant = "shallow") {
    make_data();
    std::vector<std::string> args{"train",     "--train",   (dir_ / "data/train.jsonl").string(),
                                  "--dev",     (dir_ / "data/dev.jsonl").string(),
                                  "--out-dir", (dir_ / "run").string(),
                                  "--variant", variant};
    for (const auto& s : small_model()) args.push_back(s);
    ASSERT_EQ(run(args), 0) << err_.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, GenSynthMatchesLibrary) {
  make_data();
  SyntheticSpec spec;
  spec.n_pairs = 60;
  spec.vocab_size = 60;
  spec.n_topics = 3;
  spec.max_sentences = 4;
  spec.min_sentences = 2;
  spec.max_tokens = 5;
  spec.seed = 5;
  const auto data = gen_synthetic(spec);
  std::ostringstream expected;
  write_pairs(expected, data.train);
  EXPECT_EQ(slurp(dir_ / "data/train.jsonl"), expected.str());
  EXPECT_EQ(parse_pairs((dir_ / "data/test.jsonl").string()).size(), data.test.size());
  const auto meta = nlohmann::json::parse(slurp(dir_ / "data/synth_meta.json"));
  EXPECT_EQ(meta["spec"]["seed"], 5);
  EXPECT_EQ(meta["spec"]["n_pairs"], 60);
}

TEST_F(CliTest, TrainMatchesLibrary) {
  make_checkpoint();
  const auto ck = load_checkpoint<float>((dir_ / "run/checkpoint.json").string());

  RunSettings s;
  for (const auto& o : small_model())
    if (o.find('=') != std::string::npos) apply_override(s, o);
  s.train.threads = s.eval.threads = 1;
  apply_setting(s, "cda.variant", "shallow");
  const auto lib = train_command(s, (dir_ / "data/train.jsonl").string(), (dir_ / "data/dev.jsonl").string(),
                                 dir_ / "lib");
  const auto ref = load_checkpoint<float>(lib.checkpoint);
  ASSERT_EQ(ck.model.params().size(), ref.model.params().size());
  for (std::size_t i = 0; i < ck.model.params().size(); ++i)
    EXPECT_EQ(ck.model.params()[i].value.data, ref.model.params()[i].value.data);
  EXPECT_EQ(ck.vocab.tokens(), ref.vocab.tokens());
  EXPECT_EQ(ck.model.config().cda.variant, CdaVariant::shallow);

  std::ifstream log(dir_ / "run/train_log.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 2u);
}

TEST_F(CliTest, EvalMatchesLibraryAndRandomScorerIsReproducible) {
  make_checkpoint();
  const auto ckpt = (dir_ / "run/checkpoint.json").string(), test = (dir_ / "data/test.jsonl").string();
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "e1").string(), "--scorer",
                 "random", "--seed", "7"}),
            0)
      << err_.str();
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "e2").string(), "--scorer",
                 "random", "--seed", "7"}),
            0);
  EXPECT_EQ(slurp(dir_ / "e1/metrics.json"), slurp(dir_ / "e2/metrics.json"));
  EXPECT_NE(out_.str().find("mrr"), std::string::npos);

  auto ck = load_checkpoint<float>(ckpt);
  const auto pairs = load_indexed_pairs(test, ck);
  EvalOptions opt;
  opt.scorer = Scorer::random;
  opt.seed = 7;
  const auto lib = joint_eval(ck.model, pairs, opt);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "e1/metrics.json")), to_json(lib.report));
}

TEST_F(CliTest, EvalOracleAndVariantFlags) {
  make_checkpoint("deep");
  const auto ckpt = (dir_ / "run/checkpoint.json").string(), test = (dir_ / "data/test.jsonl").string();
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "o").string(), "--oracle"}), 0)
      << err_.str();
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "o/metrics.json"))["oracle"].get<bool>());
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "v").string(), "--variant",
                 "shallow"}),
            0)
      << err_.str();

  fs::remove_all(dir_ / "run");
  make_checkpoint("none");
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "bad").string(), "--variant",
                 "deep"}),
            1);
  EXPECT_FALSE(fs::exists(dir_ / "bad"));
  EXPECT_NE(err_.str().find("cda.variant"), std::string::npos);
}

TEST_F(CliTest, LocalizeMatchesLibraryAndRendersHeatmaps) {
  make_checkpoint();
  const auto ckpt = (dir_ / "run/checkpoint.json").string(), test = (dir_ / "data/test.jsonl").string();
  ASSERT_EQ(run({"localize", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "loc").string(),
                 "--heatmap", "html", "--oracle"}),
            0)
      << err_.str();
  auto ck = load_checkpoint<float>(ckpt);
  EvalOptions opt;
  opt.oracle = true;
  const auto lib = joint_eval(ck.model, load_indexed_pairs(test, ck), opt);
  std::ifstream in(dir_ / "loc/alignments.jsonl");
  std::size_t i = 0;
  for (std::string line; std::getline(in, line); ++i) {
    ASSERT_LT(i, lib.alignments.size());
    EXPECT_EQ(nlohmann::json::parse(line), to_json(lib.alignments[i]));
  }
  EXPECT_EQ(i, lib.alignments.size());
  ASSERT_GT(i, 0u);
  std::size_t pages = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "loc/heatmaps")) {
    ++pages;
    EXPECT_NE(slurp(e.path()).find("<!DOCTYPE html>"), std::string::npos);
  }
  EXPECT_EQ(pages, i);

  ASSERT_EQ(run({"localize", "--checkpoint", ckpt, "--test", test, "--out-dir", (dir_ / "loc2").string(),
                 "--heatmap", "ansi"}),
            0);
  EXPECT_NE(out_.str().find("\x1b[48;2;"), std::string::npos);
}

TEST_F(CliTest, ParamsReportsDelta) {
  ASSERT_EQ(run({"params", "--variant", "shallow", "--integration", "add", "--json"}), 0);
  EXPECT_EQ(nlohmann::json::parse(out_.str())["cda_delta"], 0);
  ASSERT_EQ(run({"params", "--variant", "shallow", "--json"}), 0);
  EXPECT_EQ(nlohmann::json::parse(out_.str())["cda_delta"], 20100);
  ASSERT_EQ(run({"params", "--variant", "deep", "model.vocab_size=100"}), 0);
  EXPECT_NE(out_.str().find("40200"), std::string::npos);
  EXPECT_NE(out_.str().find("cda_sent"), std::string::npos);
}

TEST_F(CliTest, ConfigFileAndOverridePrecedence) {
  std::ofstream(dir_ / "cfg.json") << R"({"cda.variant": "deep", "model.hidden": 10})";
  ASSERT_EQ(run({"params", "--config", (dir_ / "cfg.json").string(), "--json"}), 0) << err_.str();
  const auto deep = nlohmann::json::parse(out_.str());
  EXPECT_EQ(deep["cda_delta"], 2 * (20 * 40 + 20));
  ASSERT_EQ(run({"params", "--config", (dir_ / "cfg.json").string(), "cda.variant=none", "--json"}), 0);
  EXPECT_EQ(nlohmann::json::parse(out_.str())["cda_delta"], 0);
  ASSERT_EQ(run({"params", "--config", (dir_ / "cfg.json").string(), "cda.variant=none", "--variant", "shallow",
                 "--json"}),
            0);
  EXPECT_EQ(nlohmann::json::parse(out_.str())["cda_delta"], 20 * 40 + 20);
}

TEST_F(CliTest, BadConfigFailsWithoutWriting) {
  make_data();
  const auto train = (dir_ / "data/train.jsonl").string(), dev = (dir_ / "data/dev.jsonl").string();
  const auto out = (dir_ / "never").string();
  EXPECT_EQ(run({"train", "--train", train, "--dev", dev, "--out-dir", out, "no.such.key=1"}), 1);
  EXPECT_NE(err_.str().find("no.such.key"), std::string::npos);
  EXPECT_EQ(run({"train", "--train", train, "--dev", dev, "--out-dir", out, "train.patience=0"}), 1);
  EXPECT_EQ(run({"train", "--train", train, "--dev", dev, "--out-dir", out, "cda.variant=sideways"}), 1);
  EXPECT_EQ(run({"train", "--train", train, "--dev", dev, "--out-dir", out, "model.hidden=\"wide\""}), 1);
  EXPECT_EQ(run({"gen-synth", "--out-dir", out, "synth.n_topics=1"}), 1);
  std::ofstream(dir_ / "broken.json") << "{not json";
  EXPECT_EQ(run({"params", "--config", (dir_ / "broken.json").string()}), 1);
  EXPECT_EQ(run({"train", "--dev", dev, "--out-dir", out}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, MalformedDataIsExitCodeTwo) {
  make_data();
  std::ofstream(dir_ / "bad.jsonl") << "{\"id\": \"x\", \"label\": 3}\n";
  const auto out = (dir_ / "never").string();
  EXPECT_EQ(run({"train", "--train", (dir_ / "bad.jsonl").string(), "--dev", (dir_ / "data/dev.jsonl").string(),
                 "--out-dir", out}),
            2);
  EXPECT_NE(err_.str().find("bad.jsonl"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, HelpExitsCleanly) {
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_NE(out_.str().find("gen-synth"), std::string::npos);
}

TEST(Heatmap, NormalizationExamples) {
  EXPECT_EQ(normalize_intensities({0.1, 0.9}), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(normalize_intensities({0.42}), (std::vector<double>{1.0}));
  const auto u = normalize_intensities({0.3, 0.3, 0.3});
  EXPECT_EQ(u, (std::vector<double>{1.0, 1.0, 1.0}));
  const auto m = normalize_intensities({2.0, 1.0, 1.5});
  EXPECT_DOUBLE_EQ(m[2], 0.5);
}

PairExample heatmap_pair() {
  PairExample p;
  p.id = "p<1>";
  p.label = 1;
  p.doc_a = make_document("a", {"first one .", "second & last ."});
  p.doc_b = make_document("b", {"other ."});
  p.gold_side = 'a';
  p.gold_sentences = {1};
  return p;
}

TEST(Heatmap, HtmlIsStandaloneAndMarksGold) {
  const auto p = heatmap_pair();
  AlignmentResult r;
  r.pair_id = p.id;
  r.side = 'a';
  r.sentence_scores = {0.1, 0.9};
  r.ranking = {1, 0};
  r.gold = {1};
  const auto html = emit_heatmap(r, p, HeatmapFormat::html);
  EXPECT_EQ(html.rfind("<!DOCTYPE html>", 0), 0u);
  EXPECT_NE(html.find("p&lt;1&gt;"), std::string::npos);
  EXPECT_NE(html.find("* second &amp; last ."), std::string::npos);
  EXPECT_NE(html.find("rgb(255,255,255)"), std::string::npos);
  EXPECT_NE(html.find("rgb(40,40,255)"), std::string::npos);
  EXPECT_EQ(html.find("http"), std::string::npos);
  EXPECT_EQ(html.find("<script"), std::string::npos);
}

TEST(Heatmap, UniformScoresRenderUniformly) {
  const auto p = heatmap_pair();
  AlignmentResult r;
  r.pair_id = p.id;
  r.side = 'a';
  r.sentence_scores = {0.5, 0.5};
  r.gold = {1};
  const auto ansi = emit_heatmap(r, p, HeatmapFormat::ansi);
  std::size_t hits = 0;
  for (auto pos = ansi.find("48;2;40;40;255m"); pos != std::string::npos; pos = ansi.find("48;2;40;40;255m", pos + 1))
    ++hits;
  EXPECT_EQ(hits, 2u);
  EXPECT_NE(ansi.find("* second"), std::string::npos);
  r.sentence_scores.clear();
  EXPECT_THROW(emit_heatmap(r, p, HeatmapFormat::ansi), DataError);
}

}  // namespace
}  // namespace cda
