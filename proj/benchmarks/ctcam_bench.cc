#include <benchmark/benchmark.h>

#include <random>

#include "ctcam/decoder.h"
#include "ctcam/frontend.h"
#include "ctcam/graphs.h"
#include "ctcam/nnet.h"

namespace ctcam {
namespace {

LabelInventory Phones(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("p" + std::to_string(i));
  return LabelInventory::WithBlank(names, LabelKind::kCiPhone);
}

Matrix RandomLogPosteriors(std::mt19937_64& rng, Eigen::Index frames, Eigen::Index labels) {
  std::normal_distribution<double> normal(0.0, 2.0);
  Matrix logits(frames, labels);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = normal(rng);
  return LogSoftmaxRows(logits);
}

// CTC forward-backward over T frames for a transcript of T/4 labels.
void BM_CtcForwardBackward(benchmark::State& state) {
  const auto frames = static_cast<int>(state.range(0));
  const auto inv = Phones(40);
  std::mt19937_64 rng(1);
  std::vector<int> labels(frames / 4);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>((i * 7) % 40);
  const auto g = BuildCtcGraph(labels, inv);
  const Matrix lp = RandomLogPosteriors(rng, frames, inv.size());
  for (auto _ : state) benchmark::DoNotOptimize(ForwardBackwardLog(g, lp).log_total);
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_CtcForwardBackward)->Arg(100)->Arg(400)->Arg(1000);

// 3x256 unidirectional LSTM over 1000 input frames at a given skip.
void BM_LstmForward(benchmark::State& state) {
  const int skip = static_cast<int>(state.range(0));
  const auto inv = Phones(40);
  const int dim = 40, stack = 8;
  const std::vector<LayerSpec> layers(3, LayerSpec{256, Direction::kForward, std::nullopt});
  const auto params = InitParams(layers, dim * stack, inv, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  FeatureMatrix raw;
  raw.data.resize(1000, dim);
  for (Eigen::Index i = 0; i < raw.data.size(); ++i) raw.data.data()[i] = normal(rng);
  const auto in = StackFrames(raw, {stack, skip, EdgePadding::kReplicateLast});
  for (auto _ : state) benchmark::DoNotOptimize(ForwardLogits(params, in).data());
  state.counters["steps"] = static_cast<double>(in.frames());
}
BENCHMARK(BM_LstmForward)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

// Word-loop decoding over 300 frames with a 200-word lexicon.
void BM_BeamSearch(benchmark::State& state) {
  const auto inv = Phones(40);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> phone(0, 39), length(2, 6);
  Lexicon lex;
  std::vector<std::string> words;
  for (int w = 0; w < 200; ++w) {
    std::vector<int> pron(length(rng));
    for (int& p : pron) p = phone(rng);
    words.push_back("w" + std::to_string(w));
    lex.Add(words.back(), pron);
  }
  const auto g = BuildDecodeGraph(lex, NgramLm::Uniform(words), inv, nullptr, {});
  const Matrix lp = RandomLogPosteriors(rng, 300, inv.size());
  DecodeParams p;
  p.beam = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(BeamSearch(g, lp, p).best.score);
}
BENCHMARK(BM_BeamSearch)->Arg(5)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ctcam

BENCHMARK_MAIN();
