#include "ctcam/toy_corpus.h"

#include <cmath>
#include <numbers>
#include <random>

namespace ctcam {

ToyCorpus MakeToyCorpus(const ToyCorpusOptions& opts) {
  if (opts.num_labels < 2 || opts.dim < 1 || opts.num_utterances < 0 || opts.min_labels < 1 ||
      opts.max_labels < opts.min_labels || opts.min_duration < 1 ||
      opts.max_duration < opts.min_duration || opts.min_gap < 0 || opts.max_gap < opts.min_gap ||
      opts.edge_silence < 0 || !(opts.noise_stddev >= 0)) {
    ThrowUsage("invalid config: toy corpus options");
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::string> names;
  for (int k = 0; k < opts.num_labels; ++k) names.push_back("l" + std::to_string(k));
  ToyCorpus corpus{LabelInventory::WithBlank(names, LabelKind::kCiPhone), Matrix(), {}};
  const int blank = *corpus.inventory.blank_id();

  corpus.templates.resize(opts.num_labels, opts.dim);
  for (int k = 0; k < opts.num_labels; ++k) {
    for (int d = 0; d < opts.dim; ++d) corpus.templates(k, d) = opts.template_scale * normal(rng);
  }

  auto uniform = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  for (int u = 0; u < opts.num_utterances; ++u) {
    ToyUtterance utt;
    utt.id = "toy" + std::to_string(u);
    const int n = uniform(opts.min_labels, opts.max_labels);
    for (int i = 0; i < n; ++i) {
      int label = uniform(0, opts.num_labels - 1);
      if (i > 0 && label == utt.labels.back()) label = (label + 1) % opts.num_labels;
      utt.labels.push_back(label);
    }
    utt.alignment.assign(opts.edge_silence, blank);
    for (int i = 0; i < n; ++i) {
      if (i > 0) utt.alignment.insert(utt.alignment.end(), uniform(opts.min_gap, opts.max_gap), blank);
      utt.alignment.insert(utt.alignment.end(), uniform(opts.min_duration, opts.max_duration),
                           utt.labels[i]);
    }
    utt.alignment.insert(utt.alignment.end(), opts.edge_silence, blank);

    const auto frames = static_cast<Eigen::Index>(utt.alignment.size());
    std::vector<double> gain(frames, 1.0);
    if (opts.hann_envelope) {
      for (Eigen::Index start = 0; start < frames;) {
        Eigen::Index end = start;
        while (end < frames && utt.alignment[end] == utt.alignment[start]) ++end;
        const double len = static_cast<double>(end - start);
        for (Eigen::Index t = start; t < end; ++t) {
          const double s = std::sin(std::numbers::pi * (static_cast<double>(t - start) + 0.5) / len);
          gain[t] = s * s;
        }
        start = end;
      }
    }
    utt.feats.data.resize(frames, opts.dim);
    for (Eigen::Index t = 0; t < frames; ++t) {
      const int label = utt.alignment[t];
      for (int d = 0; d < opts.dim; ++d) {
        const double base = label == blank ? 0.0 : gain[t] * corpus.templates(label, d);
        utt.feats.data(t, d) = base + opts.noise_stddev * normal(rng);
      }
    }
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace ctcam
