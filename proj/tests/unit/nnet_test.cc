#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ctcam/nnet.h"
#include "oracles.h"

namespace ctcam {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ctcam_nnet_" + name)).string();
}

std::vector<double> Flatten(const ModelParams& p) {
  std::vector<double> out;
  p.ForEachTensor([&](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

void Unflatten(ModelParams& p, const std::vector<double>& v) {
  size_t i = 0;
  p.ForEachTensor([&](std::span<double> t) {
    for (double& x : t) x = v[i++];
  });
  ++p.version;
}

FeatureMatrix RandomFeats(std::mt19937_64& rng, int T, int D) {
  FeatureMatrix f;
  f.data = oracle::RandomMatrix(rng, T, D);
  return f;
}

// Objective Σ R ⊙ logits, so ∂/∂logits = R.
void CheckGradient(const std::vector<LayerSpec>& arch, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto inv = oracle::LetterInventory(4, true);
  auto params = oracle::RandomModel(rng, arch, 3, inv, 0.5);
  const auto feats = RandomFeats(rng, 6, 3);
  const Matrix R = oracle::RandomMatrix(rng, 6, inv.size());
  const ClipConfig no_clip{false};

  ForwardCache cache;
  ForwardLogits(params, feats, &cache, no_clip);
  const auto analytic = Flatten(Backward(params, cache, R).grads);

  auto base = Flatten(params);
  std::vector<double> numeric(base.size());
  const double h = 1e-6;
  for (size_t i = 0; i < base.size(); ++i) {
    auto v = base;
    v[i] += h;
    Unflatten(params, v);
    const double up = (ForwardLogits(params, feats, nullptr, no_clip).array() * R.array()).sum();
    v[i] -= 2 * h;
    Unflatten(params, v);
    const double down = (ForwardLogits(params, feats, nullptr, no_clip).array() * R.array()).sum();
    numeric[i] = (up - down) / (2 * h);
  }
  const Eigen::Map<const Vector> a(analytic.data(), static_cast<Eigen::Index>(analytic.size()));
  const Eigen::Map<const Vector> n(numeric.data(), static_cast<Eigen::Index>(numeric.size()));
  EXPECT_LT(oracle::RelativeError(a, n), 1e-7);
}

TEST(Backward, MatchesFiniteDifferencesUnidirectional) {
  CheckGradient({{5, Direction::kForward, std::nullopt}, {4, Direction::kForward, std::nullopt}}, 1);
}

TEST(Backward, MatchesFiniteDifferencesBidirectional) {
  CheckGradient({{3, Direction::kBidirectional, std::nullopt}, {2, Direction::kBidirectional, std::nullopt}}, 2);
}

TEST(Backward, MatchesFiniteDifferencesWithProjection) {
  CheckGradient({{6, Direction::kForward, 3}, {4, Direction::kBidirectional, 2}}, 3);
}

TEST(Forward, ZeroWeightsGiveUniformPosteriors) {
  const auto inv = oracle::LetterInventory(5, true);
  auto params = InitParams({{4, Direction::kForward, std::nullopt}}, 3, inv, 1);
  params.ForEachTensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  std::mt19937_64 rng(1);
  const auto post = Forward(params, RandomFeats(rng, 7, 3));
  EXPECT_LT((post.data.array() - 1.0 / 6).abs().maxCoeff(), 1e-15);
}

TEST(Forward, InitIsDeterministicAndInRange) {
  const auto inv = oracle::LetterInventory(3, true);
  const auto arch = ArchitecturePreset("ctc-uni");
  const auto a = InitParams({{8, Direction::kForward, 4}}, 5, inv, 42);
  const auto b = InitParams({{8, Direction::kForward, 4}}, 5, inv, 42);
  const auto c = InitParams({{8, Direction::kForward, 4}}, 5, inv, 43);
  EXPECT_EQ(Flatten(a), Flatten(b));
  EXPECT_NE(Flatten(a), Flatten(c));
  for (double v : Flatten(a)) {
    EXPECT_LT(std::abs(v), 0.04);
    EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
  EXPECT_EQ(arch.size(), 5u);
  EXPECT_EQ(arch[0].cells, 500);
}

TEST(Forward, PosteriorsAreStochastic) {
  std::mt19937_64 rng(4);
  const auto inv = oracle::LetterInventory(6, true);
  const auto params = oracle::RandomModel(rng, {{5, Direction::kBidirectional, std::nullopt}}, 4, inv, 1.0);
  const auto post = Forward(params, RandomFeats(rng, 9, 4));
  EXPECT_EQ(post.labels(), 7);
  EXPECT_LT((post.data.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Forward, UnidirectionalIsCausal) {
  std::mt19937_64 rng(5);
  const auto inv = oracle::LetterInventory(3, true);
  const auto params = oracle::RandomModel(rng, {{4, Direction::kForward, std::nullopt},
                                                {4, Direction::kForward, 2}}, 3, inv, 1.0);
  auto feats = RandomFeats(rng, 10, 3);
  const Matrix before = ForwardLogits(params, feats);
  feats.data.row(6).setConstant(9.0);
  const Matrix after = ForwardLogits(params, feats);
  EXPECT_EQ(before.topRows(6), after.topRows(6));
  EXPECT_NE(before.row(6), after.row(6));
}

TEST(Forward, BidirectionalTimeReversalSymmetry) {
  std::mt19937_64 rng(6);
  const auto inv = oracle::LetterInventory(3, true);
  auto params = oracle::RandomModel(rng, {{4, Direction::kBidirectional, std::nullopt}}, 3, inv, 1.0);
  params.layers[0].bwd = params.layers[0].fwd;
  auto feats = RandomFeats(rng, 8, 3);
  ForwardCache a, b;
  ForwardLogits(params, feats, &a);
  feats.data = feats.data.colwise().reverse().eval();
  ForwardLogits(params, feats, &b);
  const Matrix& out_a = a.layers[0].output;
  const Matrix& out_b = b.layers[0].output;
  EXPECT_LT((out_a.leftCols(4) - out_b.rightCols(4).colwise().reverse()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((out_a.rightCols(4) - out_b.leftCols(4).colwise().reverse()).cwiseAbs().maxCoeff(), 1e-14);
}

// One cell whose input and forget gates are saturated open and whose
// candidate is ≈1, so the cell state grows by one per frame.
ModelParams Integrator() {
  const auto inv = oracle::LetterInventory(1, true);
  auto p = InitParams({{1, Direction::kForward, std::nullopt}}, 1, inv, 1);
  p.ForEachTensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  auto& w = p.layers[0].fwd;
  w.bias << 30.0, 30.0, 30.0, 0.0;
  ++p.version;
  return p;
}

TEST(Forward, CellStateIsClippedAtFifty) {
  const auto params = Integrator();
  FeatureMatrix feats;
  feats.data = Matrix::Zero(120, 1);
  ForwardCache clipped, free;
  ForwardLogits(params, feats, &clipped);
  ForwardLogits(params, feats, &free, ClipConfig{false});
  EXPECT_DOUBLE_EQ(clipped.layers[0].fwd.cells.maxCoeff(), 50.0);
  EXPECT_GT(free.layers[0].fwd.cells.maxCoeff(), 100.0);
  EXPECT_NEAR(free.layers[0].fwd.cells(119, 0), 120.0, 1e-6);
}

TEST(Backward, StaleCacheIsRejected) {
  std::mt19937_64 rng(7);
  const auto inv = oracle::LetterInventory(2, true);
  auto params = oracle::RandomModel(rng, {{3, Direction::kForward, std::nullopt}}, 2, inv, 1.0);
  const auto feats = RandomFeats(rng, 4, 2);
  ForwardCache cache;
  const Matrix logits = ForwardLogits(params, feats, &cache);
  RoundToStoragePrecision(params);
  try {
    Backward(params, cache, logits);
    FAIL() << "expected stale cache error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
  }
}

TEST(Forward, RejectsWrongDimension) {
  const auto inv = oracle::LetterInventory(2, true);
  const auto params = InitParams({{3, Direction::kForward, std::nullopt}}, 4, inv, 1);
  std::mt19937_64 rng(8);
  EXPECT_THROW(Forward(params, RandomFeats(rng, 4, 3)), Error);
}

TEST(BakeBlankScale, DividesBlankPosteriorBeforeRenormalising) {
  std::mt19937_64 rng(9);
  const auto inv = oracle::LetterInventory(3, true);
  const auto params = oracle::RandomModel(rng, {{3, Direction::kForward, std::nullopt}}, 2, inv, 1.0);
  const auto feats = RandomFeats(rng, 5, 2);
  const auto p = Forward(params, feats).data;
  const auto q = Forward(BakeBlankScale(params, 4.0), feats).data;
  const int blank = *inv.blank_id();
  for (int t = 0; t < 5; ++t) {
    Vector expect = p.row(t).transpose();
    expect[blank] /= 4.0;
    expect /= expect.sum();
    EXPECT_LT((q.row(t).transpose() - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(BakeBlankScale(params, 0.0), Error);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(10);
  const auto inv = oracle::LetterInventory(4, true);
  Checkpoint ckpt;
  ckpt.params = oracle::RandomModel(rng, {{5, Direction::kBidirectional, 3}, {4, Direction::kForward, std::nullopt}},
                                    6, inv, 0.3);
  RoundToStoragePrecision(ckpt.params);
  ckpt.stack = {8, 3, EdgePadding::kReplicateLast};
  ckpt.normalizer.mean = Vector::LinSpaced(6, -1, 1);
  ckpt.normalizer.inv_stddev = Vector::Constant(6, 0.5);
  ckpt.step = 1234;
  const auto path = TempPath("model.ckpt");
  SaveCheckpoint(path, ckpt);
  const auto loaded = LoadCheckpoint(path);
  EXPECT_EQ(Flatten(loaded.params), Flatten(ckpt.params));
  EXPECT_EQ(loaded.params.inventory.names(), inv.names());
  EXPECT_EQ(loaded.params.inventory.blank_id(), inv.blank_id());
  EXPECT_EQ(loaded.stack.stack, 8);
  EXPECT_EQ(loaded.stack.skip, 3);
  EXPECT_EQ(loaded.step, 1234);
  EXPECT_EQ(loaded.normalizer.mean, ckpt.normalizer.mean);
  EXPECT_EQ(loaded.normalizer.inv_stddev, ckpt.normalizer.inv_stddev);
  ASSERT_EQ(loaded.params.layers.size(), 2u);
  EXPECT_EQ(loaded.params.layers[0].spec.projection, 3);
  EXPECT_EQ(loaded.params.layers[0].spec.direction, Direction::kBidirectional);

  const auto path2 = TempPath("model2.ckpt");
  SaveCheckpoint(path2, loaded);
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(path), slurp(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST(Checkpoint, TruncatedFileIsDataError) {
  const auto inv = oracle::LetterInventory(2, true);
  Checkpoint ckpt;
  ckpt.params = InitParams({{3, Direction::kForward, std::nullopt}}, 2, inv, 1);
  const auto path = TempPath("trunc.ckpt");
  SaveCheckpoint(path, ckpt);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 7);
  try {
    LoadCheckpoint(path);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
  std::filesystem::remove(path);
}

TEST(Presets, Geometries) {
  const auto bi = ArchitecturePreset("ctc-bi");
  ASSERT_EQ(bi.size(), 5u);
  EXPECT_EQ(bi[0].OutputDim(), 600);
  const auto conv = ArchitecturePreset("conventional");
  ASSERT_EQ(conv.size(), 2u);
  EXPECT_EQ(conv[0].cells, 1000);
  EXPECT_EQ(conv[0].projection, 512);
  EXPECT_THROW(ArchitecturePreset("nope"), Error);
}

}  // namespace
}  // namespace ctcam
