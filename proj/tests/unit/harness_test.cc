#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ctcam/harness.h"
#include "ctcam/toy_corpus.h"
#include "oracles.h"

namespace ctcam {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ctcam_harness_" + name)).string();
}

std::vector<double> Flatten(const ModelParams& p) {
  std::vector<double> out;
  p.ForEachTensor([&](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

TEST(WordInventory, FrequencyOrderAndThreshold) {
  const std::vector<std::vector<std::string>> tr = {{"b", "a", "c"}, {"a", "b"}, {"a", "d"}};
  const auto inv = BuildWordInventory(tr, 2);
  EXPECT_EQ(inv.names(), (std::vector<std::string>{"a", "b", kBlankName}));
  EXPECT_EQ(inv.kind(), LabelKind::kWord);
  EXPECT_EQ(BuildWordInventory(tr, 1).size(), 5);
  EXPECT_THROW(BuildWordInventory(tr, 4), Error);
  EXPECT_THROW(BuildWordInventory(std::vector<std::vector<std::string>>{}, 1), Error);
  EXPECT_EQ(WordInventoryPreset("7k-style"), 150);
  EXPECT_EQ(WordInventoryPreset("25k-style"), 20);
}

TEST(TranscriptLabels, WordsAndLexicon) {
  const auto words = BuildWordInventory(std::vector<std::vector<std::string>>{{"x", "y"}}, 1);
  const std::vector<std::string> t = {"y", "oov", "x"};
  EXPECT_EQ(TranscriptLabels(t, words), (std::vector<int>{words.id("y"), words.id("x")}));

  const auto phones = oracle::LetterInventory(3, true);
  Lexicon lex;
  lex.Add("x", {0, 1});
  lex.Add("y", {2});
  EXPECT_EQ(TranscriptLabels(std::vector<std::string>{"x", "y"}, phones, &lex),
            (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(TranscriptLabels(t, phones, &lex), Error);
}

TEST(TranscriptLabels, EdgeSilence) {
  EXPECT_EQ(WithEdgeSilence({1, 2}, 0), (std::vector<int>{0, 1, 2, 0}));
  EXPECT_EQ(WithEdgeSilence({0, 2}, 0), (std::vector<int>{0, 2, 0}));
  EXPECT_EQ(WithEdgeSilence({0, 2, 0}, 0), (std::vector<int>{0, 2, 0}));
  EXPECT_EQ(WithEdgeSilence({}, 0), (std::vector<int>{0}));
  EXPECT_EQ(WithEdgeSilence({0}, 0), (std::vector<int>{0}));
}

TEST(Manifest, RoundTrip) {
  const std::vector<Utterance> utts = {{"u1", "/a/b.wav", {"hello", "world"}},
                                       {"u2", "c.feat", {}}};
  const auto path = TempPath("manifest.tsv");
  WriteManifest(path, utts);
  const auto back = ReadManifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "u1");
  EXPECT_EQ(back[0].path, "/a/b.wav");
  EXPECT_EQ(back[0].transcript, utts[0].transcript);
  EXPECT_TRUE(back[1].transcript.empty());
  std::filesystem::remove(path);
}

TEST(EpochOrder, IsASeededPermutation) {
  for (int n : {1, 2, 7, 50}) {
    auto a = EpochOrder(n, 3, 0);
    EXPECT_EQ(a, EpochOrder(n, 3, 0));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
  }
  EXPECT_NE(EpochOrder(50, 3, 0), EpochOrder(50, 3, 1));
  EXPECT_NE(EpochOrder(50, 3, 0), EpochOrder(50, 4, 0));
}

std::vector<TrainUtterance> ToyTrainSet(int n, uint64_t seed) {
  ToyCorpusOptions o;
  o.num_utterances = n;
  o.dim = 8;
  o.num_labels = 3;
  o.seed = seed;
  const auto corpus = MakeToyCorpus(o);
  std::vector<TrainUtterance> out;
  for (const auto& u : corpus.utterances) out.push_back({u.id, u.feats, u.labels, u.alignment});
  return out;
}

TrainConfig SmallConfig() {
  TrainConfig cfg;
  cfg.layers = {{8, Direction::kForward, std::nullopt}};
  cfg.inventory = oracle::LetterInventory(3, true);
  cfg.stack = {2, 2, EdgePadding::kReplicateLast};
  cfg.steps = 20;
  cfg.learning_rate = 0.01;
  return cfg;
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto data = ToyTrainSet(6, 1);
  auto cfg = SmallConfig();
  cfg.learning_rate = 0;
  const auto res = Train(cfg, data, std::nullopt);
  const int input_dim = 8 * 2;
  EXPECT_EQ(Flatten(res.model.params),
            Flatten(InitParams(cfg.layers, input_dim, cfg.inventory, cfg.seed)));
  EXPECT_EQ(res.metrics.size(), 20u);
  EXPECT_EQ(res.model.step, 20);
}

TEST(Train, SameSeedGivesIdenticalModels) {
  const auto data = ToyTrainSet(6, 2);
  const auto cfg = SmallConfig();
  const auto a = Train(cfg, data, std::nullopt);
  const auto b = Train(cfg, data, std::nullopt);
  EXPECT_EQ(Flatten(a.model.params), Flatten(b.model.params));
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(Flatten(Train(other, data, std::nullopt).model.params), Flatten(a.model.params));
}

TEST(Train, EveryCriterionReducesLossOnToyData) {
  const auto data = ToyTrainSet(10, 3);
  for (auto crit : {Criterion::kCtc, Criterion::kCe, Criterion::kRealign}) {
    auto cfg = SmallConfig();
    cfg.criterion = crit;
    cfg.steps = 150;
    cfg.learning_rate = 0.05;
    if (crit != Criterion::kCtc) {
      // Blank-free phone targets: map toy silence to its own label.
      cfg.inventory = oracle::LetterInventory(4, false);
    }
    auto train = data;
    if (crit == Criterion::kRealign) {
      for (auto& u : train) {
        u.labels.clear();
        for (const auto& r : oracle::RunLengths(u.alignment)) u.labels.push_back(r.label);
      }
    }
    const auto res = Train(cfg, train, std::nullopt);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) first += res.metrics[i].loss;
    for (int i = 140; i < 150; ++i) last += res.metrics[i].loss;
    EXPECT_LT(last, first) << CriterionName(crit);
  }
}

TEST(Train, DivergenceSavesLastGoodParameters) {
  auto data = ToyTrainSet(4, 4);
  auto cfg = SmallConfig();
  cfg.batch_size = 4;
  cfg.checkpoint_path = TempPath("diverged.ckpt");
  Checkpoint init;
  init.params = InitParams(cfg.layers, 16, cfg.inventory, 9);
  init.stack = cfg.stack;
  data[2].feats.data(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    Train(cfg, data, init);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
  }
  const auto saved = LoadCheckpoint(cfg.checkpoint_path);
  EXPECT_EQ(Flatten(saved.params), Flatten(init.params));
  std::filesystem::remove(cfg.checkpoint_path);
}

TEST(Train, RejectsBadConfig) {
  const auto data = ToyTrainSet(2, 5);
  auto cfg = SmallConfig();
  cfg.momentum = 1.0;
  EXPECT_THROW(Train(cfg, data, std::nullopt), Error);
  cfg = SmallConfig();
  cfg.criterion = Criterion::kSmbr;
  EXPECT_THROW(Train(cfg, data, std::nullopt), Error);
}

// Identity-like network: input is a one-hot label per frame and the output
// reproduces it with posterior ≈ 1.
Checkpoint OneHotModel(const LabelInventory& inv) {
  const int L = inv.size();
  Checkpoint ckpt;
  ckpt.params = InitParams({{L, Direction::kForward, std::nullopt}}, L, inv, 1);
  ckpt.params.ForEachTensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  auto& w = ckpt.params.layers[0].fwd;
  w.bias.segment(0, L).setConstant(30);      // input gate open
  w.bias.segment(L, L).setConstant(-30);     // forget gate closed
  w.input.middleRows(2 * L, L) = 5.0 * Matrix::Identity(L, L);
  w.bias.segment(3 * L, L).setConstant(30);  // output gate open
  ckpt.params.output_weights = 40.0 * Matrix::Identity(L, L);
  ckpt.stack = {1, 1, EdgePadding::kReplicateLast};
  return ckpt;
}

FeatureMatrix OneHot(const std::vector<int>& frames, int L) {
  FeatureMatrix f;
  f.data = Matrix::Zero(static_cast<Eigen::Index>(frames.size()), L);
  for (size_t t = 0; t < frames.size(); ++t) f.data(static_cast<Eigen::Index>(t), frames[t]) = 1;
  return f;
}

TEST(Evaluate, PerfectModelScoresZero) {
  const auto inv = oracle::LetterInventory(3, true);
  const int b = *inv.blank_id();
  const auto model = OneHotModel(inv);
  const std::vector<EvalUtterance> data = {{"u1", OneHot({0, 0, b, 1, 2}, 4), {"a", "b", "c"}},
                                           {"u2", OneHot({b, 2, b, 2}, 4), {"c", "c"}}};
  const auto res = Evaluate(model, data, {});
  EXPECT_EQ(res.report.wer_percent, 0.0);
  EXPECT_EQ(res.report.ref_words, 5);
  EXPECT_EQ(res.failures, 0);
}

TEST(Evaluate, HandScoredFixture) {
  const auto inv = oracle::LetterInventory(3, true);
  const int b = *inv.blank_id();
  const auto model = OneHotModel(inv);
  const std::vector<EvalUtterance> data = {
      {"u1", OneHot({0, 0, 1}, 4), {"a", "b"}},       // correct
      {"u2", OneHot({0, b, 0}, 4), {"a"}},            // one insertion
      {"u3", OneHot({1, 2}, 4), {"b", "a"}},          // one substitution
      {"u4", OneHot({b, b}, 4), {"c"}},               // one deletion
      {"u5", OneHot({2, 2}, 4), {"c", "b", "a"}},     // two deletions
  };
  const auto res = Evaluate(model, data, {});
  EXPECT_EQ(res.report.ref_words, 9);
  EXPECT_EQ(res.report.substitutions, 1);
  EXPECT_EQ(res.report.insertions, 1);
  EXPECT_EQ(res.report.deletions, 3);
  EXPECT_NEAR(res.report.wer_percent, 500.0 / 9, 1e-12);
  EXPECT_EQ(res.utterances[1].hypothesis, (std::vector<std::string>{"a", "a"}));
}

TEST(Evaluate, ShapeErrorsAreRecordedPerUtterance) {
  const auto inv = oracle::LetterInventory(3, true);
  const auto model = OneHotModel(inv);
  const std::vector<EvalUtterance> data = {{"ok", OneHot({0}, 4), {"a"}},
                                           {"bad", OneHot({0}, 3), {"a"}}};
  const auto res = Evaluate(model, data, {});
  EXPECT_EQ(res.failures, 1);
  EXPECT_FALSE(res.utterances[1].error.empty());
  EXPECT_EQ(res.report.deletions, 1);
}

TEST(SweepBlankScale, OnePointPerGridValue) {
  const auto inv = oracle::LetterInventory(3, true);
  const int b = *inv.blank_id();
  const auto model = OneHotModel(inv);
  const std::vector<EvalUtterance> data = {{"u1", OneHot({0, b, 1}, 4), {"a", "b"}}};
  const std::vector<double> grid = {0.5, 1.0, 2.0};
  const auto points = SweepBlankScale(model, data, {}, grid);
  ASSERT_EQ(points.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(points[i].blank_scale, grid[i]);
    EXPECT_EQ(points[i].report.wer_percent, 0.0);
  }
}

TEST(DumpPosteriorgram, StrictThresholdAndHeader) {
  const auto inv = oracle::LetterInventory(2, true);
  Posteriorgram post;
  post.data.resize(2, 3);
  post.data << 0.05, 0.9, 0.05, 0.2, 0.3, 0.5;
  std::ostringstream os;
  DumpPosteriorgram(post, inv, os, 0.05);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "frame_index\tlabel_name\tposterior");
  std::vector<std::string> rows;
  while (std::getline(is, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "0\tb\t0.90000000000000002");
  EXPECT_EQ(rows[3], std::string("1\t") + kBlankName + "\t0.5");
}

TEST(ReadKeyValueFile, ParsesAndRejects) {
  const auto path = TempPath("cfg.txt");
  {
    std::ofstream os(path);
    os << "# comment\nsteps = 10\n lr=0.5 # trailing\n\n";
  }
  const auto kv = ReadKeyValueFile(path);
  EXPECT_EQ(kv.at("steps"), "10");
  EXPECT_EQ(kv.at("lr"), "0.5");
  {
    std::ofstream os(path);
    os << "novalue\n";
  }
  EXPECT_THROW(ReadKeyValueFile(path), Error);
  std::filesystem::remove(path);
}

TEST(ToyCorpus, NoAdjacentRepeatsAndConsistentAlignment) {
  ToyCorpusOptions o;
  o.num_utterances = 30;
  const auto c = MakeToyCorpus(o);
  ASSERT_EQ(c.utterances.size(), 30u);
  const int blank = *c.inventory.blank_id();
  for (const auto& u : c.utterances) {
    EXPECT_EQ(static_cast<Eigen::Index>(u.alignment.size()), u.feats.frames());
    EXPECT_EQ(oracle::Collapse(u.alignment, blank), u.labels);
    for (size_t i = 1; i < u.labels.size(); ++i) EXPECT_NE(u.labels[i], u.labels[i - 1]);
  }
}

}  // namespace
}  // namespace ctcam
