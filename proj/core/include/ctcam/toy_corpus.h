#ifndef CTCAM_TOY_CORPUS_H_
#define CTCAM_TOY_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "ctcam/frontend.h"
#include "ctcam/graphs.h"

namespace ctcam {

// Synthetic corpus: every label owns a fixed random feature template; an
// utterance is a label sequence rendered as template runs of random length
// plus Gaussian noise, separated by silence (all-zero template) gaps. With
// hann_envelope each run fades in and out under a raised-cosine gain, so only
// its middle frames carry a strong template.
struct ToyCorpusOptions {
  int num_labels = 6;
  int dim = 40;
  int num_utterances = 200;
  int min_labels = 2;
  int max_labels = 6;
  int min_duration = 8;  // frames per label occurrence
  int max_duration = 16;
  int min_gap = 0;  // silence frames between labels
  int max_gap = 4;
  int edge_silence = 3;  // leading and trailing silence frames
  double template_scale = 1.0;
  double noise_stddev = 0.5;
  bool hann_envelope = true;
  uint64_t seed = 7;
};

struct ToyUtterance {
  std::string id;
  FeatureMatrix feats;
  std::vector<int> labels;
  // Per-frame label; silence frames carry the blank id.
  std::vector<int> alignment;
};

struct ToyCorpus {
  LabelInventory inventory;  // "l0".."l{K-1}" plus blank
  Matrix templates;          // K × dim
  std::vector<ToyUtterance> utterances;
};

/// Never places the same label twice in a row, so every sequence is
/// recoverable from its frames.
ToyCorpus MakeToyCorpus(const ToyCorpusOptions& opts);

}  // namespace ctcam

#endif  // CTCAM_TOY_CORPUS_H_
