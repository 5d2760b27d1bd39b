#ifndef CTCAM_HARNESS_H_
#define CTCAM_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctcam/cdphone.h"
#include "ctcam/criteria.h"
#include "ctcam/decoder.h"
#include "ctcam/frontend.h"
#include "ctcam/graphs.h"
#include "ctcam/nnet.h"

namespace ctcam {

// --- data -------------------------------------------------------------------

struct Utterance {
  std::string id;
  std::string path;  // audio (.wav) or feature file
  std::vector<std::string> transcript;
};

/// "id TAB path TAB transcript" per line.
std::vector<Utterance> ReadManifest(const std::string& path);
void WriteManifest(const std::string& path, std::span<const Utterance> utts);

std::vector<std::string> SplitWords(const std::string& text);
std::string JoinWords(std::span<const std::string> words);

/// Minimum-exemplar thresholds: "7k-style" = 150, "25k-style" = 20.
int WordInventoryPreset(const std::string& name);

/// Words seen at least `min_exemplars` times, most frequent first (ties
/// lexicographic), followed by the blank.
LabelInventory BuildWordInventory(std::span<const std::vector<std::string>> transcripts,
                                  int min_exemplars);

/// Label ids for a transcript. With a lexicon, words expand to their first
/// pronunciation (mapped to CD units through `tree`, with boundary context
/// at word edges); without one, words are labels themselves. Word
/// inventories skip out-of-vocabulary words; other kinds throw.
std::vector<int> TranscriptLabels(std::span<const std::string> words, const LabelInventory& inv,
                                  const Lexicon* lex = nullptr,
                                  const CDPhoneTree* tree = nullptr);

/// Surrounds a label sequence with `silence`, skipping an edge that already
/// carries it.
std::vector<int> WithEdgeSilence(std::vector<int> labels, int silence);

/// Normalise (when the model carries statistics), stack, run the network.
Posteriorgram RunModel(const Checkpoint& model, const FeatureMatrix& raw);
FeatureMatrix PrepareInput(const Checkpoint& model, const FeatureMatrix& raw);

// --- training ---------------------------------------------------------------

enum class Criterion { kCe, kCtc, kRealign, kSmbr };

const char* CriterionName(Criterion c);
Criterion ParseCriterion(const std::string& name);

struct TrainUtterance {
  std::string id;
  FeatureMatrix feats;    // raw frames
  std::vector<int> labels;  // label sequence (ctc, realign, smbr)
  // Per raw frame (ce); sampled every `skip` frames for the network.
  std::vector<int> alignment;
};

struct TrainConfig {
  Criterion criterion = Criterion::kCtc;
  // Preset name; ignored when `layers` is non-empty.
  std::string arch = "ctc-uni";
  std::vector<LayerSpec> layers;
  // Output labels of a freshly initialised model.
  LabelInventory inventory;
  StackConfig stack{8, 3, EdgePadding::kReplicateLast};
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 1;
  int64_t steps = 1000;
  uint64_t seed = 1;
  // CE targets are shifted this many network frames later.
  int target_delay = 0;
  // sMBR: κ, and the blank scale used when generating competitor lattices.
  double acoustic_scale = 1.0;
  double blank_scale = 1.0;
  DecodeParams lattice_params{16.0, 2000, 1.0, 1.0, 8};
  // Halve the learning rate when a window's mean loss fails to improve on
  // the best window by `plateau_tolerance` (relative). 0 disables.
  int plateau_window = 500;
  double plateau_tolerance = 0.01;
  // Gradient L2 norm ceiling; 0 disables.
  double max_grad_norm = 0.0;
  int64_t checkpoint_every = 0;
  std::string checkpoint_path;  // empty: no checkpoint files
};

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;  // per network frame
  double grad_norm = 0.0;
  double time_ms = 0.0;

  /// "step loss grad_norm time_ms".
  std::string Line() const;
};

struct TrainResult {
  Checkpoint model;
  std::vector<StepMetrics> metrics;
  double final_learning_rate = 0.0;
};

/// Momentum SGD over seeded per-epoch shuffles. `init` continues from a
/// checkpoint (its geometry, stacking and normaliser win over `cfg`).
/// sMBR needs `init` and a decode graph over the model's labels. Throws a
/// numerical error on NaN/Inf loss after saving the last good parameters.
TrainResult Train(const TrainConfig& cfg, std::span<const TrainUtterance> data,
                  const std::optional<Checkpoint>& init, const DecodeGraph* smbr_graph = nullptr,
                  std::ostream* metrics_log = nullptr);

/// Permutation used for epoch `epoch`; exposed for tests.
std::vector<int> EpochOrder(int n, uint64_t seed, int64_t epoch);

/// Numerator (best CTC alignment of `labels`) and denominator (beam-search
/// lattice over `graph`) for one utterance.
std::pair<Lattice, Lattice> SmbrLattices(const Matrix& log_post, std::span<const int> labels,
                                         const LabelInventory& inv, const DecodeGraph& graph,
                                         const DecodeParams& params);

/// Mean per-frame sMBR objective of `model` over `data`, with lattices
/// regenerated from the model itself.
double SmbrObjective(const Checkpoint& model, std::span<const TrainUtterance> data,
                     const DecodeGraph& graph, const TrainConfig& cfg);

// --- evaluation -------------------------------------------------------------

struct EvalUtterance {
  std::string id;
  FeatureMatrix feats;
  std::vector<std::string> reference;
};

struct EvalConfig {
  bool greedy = true;
  DecodeParams decode;
  const DecodeGraph* graph = nullptr;  // required unless greedy
  OovMode oov = OovMode::kAll;
  const std::set<std::string>* vocab = nullptr;
};

struct UtteranceResult {
  std::string id;
  std::vector<std::string> hypothesis;
  double score = 0.0;
  std::string error;  // decode failure, empty on success
};

struct EvalResult {
  WerReport report;
  std::vector<UtteranceResult> utterances;
  int failures = 0;
};

/// Greedy hypotheses are label names, so phone-level models yield a label
/// error rate and word models a word error rate.
EvalResult Evaluate(const Checkpoint& model, std::span<const EvalUtterance> data,
                    const EvalConfig& cfg);

/// Greedy CTC decode after dividing the blank posterior by `blank_scale`.
std::vector<int> ScaledGreedyDecode(const Posteriorgram& post, const LabelInventory& inv,
                                    double blank_scale);

struct SweepPoint {
  double blank_scale = 1.0;
  WerReport report;
};

std::vector<SweepPoint> SweepBlankScale(const Checkpoint& model,
                                        std::span<const EvalUtterance> data,
                                        const EvalConfig& cfg, std::span<const double> grid);

/// TSV "frame_index TAB label_name TAB posterior" for posteriors strictly
/// above `threshold`, after a header line.
void DumpPosteriorgram(const Posteriorgram& post, const LabelInventory& inv, std::ostream& os,
                       double threshold = 0.05);

// --- config files -----------------------------------------------------------

/// Flat "key=value" file; '#' starts a comment.
std::map<std::string, std::string> ReadKeyValueFile(const std::string& path);

}  // namespace ctcam

#endif  // CTCAM_HARNESS_H_
