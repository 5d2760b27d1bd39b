#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <random>

#include "ctcam/cdphone.h"
#include "oracles.h"

namespace ctcam {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ctcam_cd_" + name)).string();
}

// Names outside every broad class, so only singleton questions exist.
LabelInventory Phones(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("q" + std::to_string(i));
  return LabelInventory(names, std::nullopt, LabelKind::kCiPhone);
}

FeatureMatrix FrameIndexFeatures(int T) {
  FeatureMatrix f;
  f.data.resize(T, kPhoneVectorBands);
  for (int t = 0; t < T; ++t) f.data.row(t).setConstant(t);
  return f;
}

TEST(CollectSamples, MatchesRunLengthOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = std::uniform_int_distribution<int>(1, 40)(rng);
    std::vector<int> al(T);
    for (int& a : al) a = std::uniform_int_distribution<int>(0, 3)(rng);
    const auto samples = CollectSamples(al, FrameIndexFeatures(T));
    const auto runs = oracle::RunLengths(al);
    ASSERT_EQ(samples.size(), runs.size());
    for (size_t i = 0; i < runs.size(); ++i) {
      const auto& s = samples[i];
      EXPECT_EQ(s.phone, runs[i].label);
      EXPECT_EQ(s.duration_frames, runs[i].length);
      EXPECT_EQ(s.left, i == 0 ? kBoundaryPhone : runs[i - 1].label);
      EXPECT_EQ(s.right, i + 1 == runs.size() ? kBoundaryPhone : runs[i + 1].label);
      EXPECT_EQ(s.vec[0], runs[i].start);
      EXPECT_EQ(s.vec[kPhoneVectorBands], runs[i].start + (runs[i].length - 1) / 2);
      EXPECT_EQ(s.vec[2 * kPhoneVectorBands], runs[i].start + runs[i].length - 1);
    }
  }
}

TEST(CollectSamples, BlankIsDroppedFromContext) {
  // map: label 3 is blank.
  const std::vector<int> map = {0, 1, 2, -1};
  const std::vector<int> al = {3, 0, 0, 3, 3, 1, 3, 1, 2};
  const auto s = CollectSamples(al, FrameIndexFeatures(9), map);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].left, kBoundaryPhone);
  EXPECT_EQ(s[0].right, 1);
  EXPECT_EQ(s[1].phone, 1);
  EXPECT_EQ(s[1].left, 0);
  EXPECT_EQ(s[2].phone, 1);  // blank-separated repeat is a new token
  EXPECT_EQ(s[2].left, 1);
  EXPECT_EQ(s[3].right, kBoundaryPhone);
}

TEST(CollectSamples, Errors) {
  EXPECT_THROW(CollectSamples(std::vector<int>{0, 0}, FrameIndexFeatures(3)), Error);
  FeatureMatrix narrow;
  narrow.data = Matrix::Zero(2, 10);
  EXPECT_THROW(CollectSamples(std::vector<int>{0, 0}, narrow), Error);
}

// Phone 0 occurs after phones 1, 2, 3; its vectors are shifted when the left
// neighbour is 2.
std::vector<PhoneSample> PlantedSamples(std::mt19937_64& rng, int per_context) {
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<PhoneSample> out;
  for (int left : {1, 2, 3}) {
    for (int k = 0; k < per_context; ++k) {
      PhoneSample s;
      s.phone = 0;
      s.left = left;
      s.right = std::uniform_int_distribution<int>(1, 3)(rng);
      s.vec.resize(3 * kPhoneVectorBands);
      for (Eigen::Index d = 0; d < s.vec.size(); ++d) s.vec[d] = noise(rng) + (left == 2 ? 2.0 : 0.0);
      s.duration_frames = 1 + k % 5;
      out.push_back(s);
    }
  }
  for (int p = 1; p <= 3; ++p) {
    for (int k = 0; k < 5; ++k) {
      PhoneSample s;
      s.phone = p;
      s.left = 0;
      s.vec = Vector::Zero(3 * kPhoneVectorBands);
      s.vec[0] = k;
      out.push_back(s);
    }
  }
  return out;
}

TEST(BestSplit, AgreesWithExhaustiveOracle) {
  std::mt19937_64 rng(22);
  const auto phones = Phones(4);
  const auto questions = DefaultQuestions(phones);
  for (int trial = 0; trial < 20; ++trial) {
    const auto samples = PlantedSamples(rng, 6 + trial);
    std::vector<const PhoneSample*> pool;
    for (const auto& s : samples) {
      if (s.phone == 0) pool.push_back(&s);
    }
    const auto choice = BestSplit(pool, questions, 1);
    const auto ref = oracle::ExhaustiveSplit(pool, questions);
    ASSERT_EQ(choice.question, ref.question);
    EXPECT_NEAR(choice.gain, ref.gain, 1e-7 * std::abs(ref.gain));
    EXPECT_EQ(questions[choice.question].name, "L_q2");
  }
}

TEST(GrowTrees, RecoversPlantedSplit) {
  std::mt19937_64 rng(23);
  const auto phones = Phones(4);
  const auto questions = DefaultQuestions(phones);
  const auto samples = PlantedSamples(rng, 30);
  TreeGrowOptions opts;
  opts.max_leaves = 5;
  const auto tree = GrowTrees(samples, questions, 4, opts);
  EXPECT_EQ(tree.num_leaves(), 5);
  const auto& root = tree.nodes()[tree.root(0)];
  ASSERT_GE(root.question, 0);
  EXPECT_EQ(tree.questions()[root.question].name, "L_q2");
  EXPECT_NE(tree.MapContext(0, 2, 1), tree.MapContext(0, 1, 1));
  EXPECT_EQ(tree.MapContext(0, 1, 1), tree.MapContext(0, 3, 1));
  int total = 0;
  for (int leaf = 0; leaf < tree.num_leaves(); ++leaf) total += tree.LeafSampleCount(leaf);
  EXPECT_EQ(total, static_cast<int>(samples.size()));
}

TEST(GrowTrees, InfiniteThresholdGivesContextIndependentPhones) {
  std::mt19937_64 rng(24);
  const auto phones = Phones(4);
  const auto samples = PlantedSamples(rng, 10);
  TreeGrowOptions opts;
  opts.min_gain = std::numeric_limits<double>::infinity();
  const auto tree = GrowTrees(samples, DefaultQuestions(phones), 4, opts);
  EXPECT_EQ(tree.num_leaves(), 4);
  for (int p = 0; p < 4; ++p) {
    EXPECT_EQ(tree.LeafPhone(tree.MapContext(p, 2, 2)), p);
  }
}

TEST(GrowTrees, UncoveredPhoneIsDataError) {
  std::mt19937_64 rng(25);
  const auto phones = Phones(5);
  const auto samples = PlantedSamples(rng, 4);
  EXPECT_THROW(GrowTrees(samples, DefaultQuestions(phones), 5, {}), Error);
}

TEST(CDPhoneTree, MapContextIsTotal) {
  std::mt19937_64 rng(26);
  const auto phones = Phones(4);
  const auto samples = PlantedSamples(rng, 20);
  TreeGrowOptions opts;
  opts.max_leaves = 8;
  const auto tree = GrowTrees(samples, DefaultQuestions(phones), 4, opts);
  for (int p = 0; p < 4; ++p) {
    for (int l = -1; l < 9; ++l) {
      for (int r = -1; r < 9; ++r) {
        const int leaf = tree.MapContext(p, l, r);
        EXPECT_GE(leaf, 0);
        EXPECT_LT(leaf, tree.num_leaves());
        EXPECT_EQ(tree.LeafPhone(leaf), p);
      }
    }
  }
  EXPECT_THROW(tree.MapContext(7, 0, 0), Error);
}

TEST(CDPhoneTree, FileRoundTrip) {
  std::mt19937_64 rng(27);
  const auto phones = Phones(4);
  const auto samples = PlantedSamples(rng, 20);
  TreeGrowOptions opts;
  opts.max_leaves = 7;
  const auto tree = GrowTrees(samples, DefaultQuestions(phones), 4, opts);
  const auto path = TempPath("tree.txt");
  tree.Write(path, phones);
  const auto back = CDPhoneTree::Read(path, phones);
  EXPECT_EQ(back.num_leaves(), tree.num_leaves());
  for (int p = 0; p < 4; ++p) {
    for (int l = -1; l < 4; ++l) {
      for (int r = -1; r < 4; ++r) EXPECT_EQ(back.MapContext(p, l, r), tree.MapContext(p, l, r));
    }
  }
  EXPECT_EQ(back.MakeInventory(phones, true).names(), tree.MakeInventory(phones, true).names());
  std::filesystem::remove(path);
}

TEST(CDPhoneTree, InventoryNames) {
  std::mt19937_64 rng(28);
  const auto phones = Phones(4);
  TreeGrowOptions opts;
  opts.min_gain = std::numeric_limits<double>::infinity();
  const auto tree = GrowTrees(PlantedSamples(rng, 3), DefaultQuestions(phones), 4, opts);
  const auto inv = tree.MakeInventory(phones, true);
  EXPECT_EQ(inv.names(), (std::vector<std::string>{"q0_0", "q1_0", "q2_0", "q3_0", kBlankName}));
  EXPECT_EQ(inv.kind(), LabelKind::kCdPhone);
}

TEST(DurationCutoff, MatchesSortOracle) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    const int max_d = std::uniform_int_distribution<int>(1, 15)(rng);
    std::vector<int> d(n);
    for (int& x : d) x = std::uniform_int_distribution<int>(0, max_d)(rng);
    for (double p : {0.0, 0.05, 0.1, 0.5, 1.0}) {
      EXPECT_EQ(DurationCutoff(d, p), oracle::DurationBySort(d, p));
    }
  }
  // Nine samples of 1 frame and one of 7: the 10th percentile is 1.
  EXPECT_EQ(DurationCutoff(std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1, 1, 7}, 0.10), 1);
  EXPECT_EQ(DurationCutoff(std::vector<int>{4, 5, 6, 7, 8, 9, 10, 11, 12, 13}, 0.10), 4);
  EXPECT_EQ(DurationCutoff(std::vector<int>{4, 5, 6, 7, 8, 9, 10, 11, 12, 13}, 0.11), 5);
}

TEST(DurationStats, FileRoundTrip) {
  DurationStats s;
  s.min_frames = {1, 3, 2};
  const auto path = TempPath("dur.txt");
  s.Write(path);
  EXPECT_EQ(DurationStats::Read(path).min_frames, s.min_frames);
  std::filesystem::remove(path);
}

TEST(GaussianStats, MatchesTwoPassLikelihood) {
  std::mt19937_64 rng(30);
  const auto samples = PlantedSamples(rng, 9);
  std::vector<const PhoneSample*> pool;
  GaussianStats st;
  for (const auto& s : samples) {
    pool.push_back(&s);
    st.Add(s.vec);
  }
  const double ref = oracle::PoolLogLikelihood(pool);
  EXPECT_NEAR(st.LogLikelihood(), ref, 1e-8 * std::abs(ref));
}

}  // namespace
}  // namespace ctcam
