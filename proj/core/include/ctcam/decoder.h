#ifndef CTCAM_DECODER_H_
#define CTCAM_DECODER_H_

#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctcam/cdphone.h"
#include "ctcam/common.h"
#include "ctcam/criteria.h"
#include "ctcam/graphs.h"

namespace ctcam {

inline constexpr int kEpsilon = -1;
inline constexpr int kNoWord = -1;

// Unigram/bigram backoff model with log10 weights (ARPA subset).
struct NgramLm {
  std::map<std::string, double> unigram;
  std::map<std::string, double> backoff;
  std::map<std::pair<std::string, std::string>, double> bigram;

  bool has_bigrams() const { return !bigram.empty(); }
  /// Words that need lexicon entries (everything but <s>, </s>, <unk>).
  std::vector<std::string> Vocabulary() const;

  /// Uniform unigram over `words`.
  static NgramLm Uniform(std::span<const std::string> words);
  /// Reads \1-grams: and \2-grams: sections of an ARPA file.
  static NgramLm ReadArpa(const std::string& path);
};

// Frame-synchronous search network. Arcs with ilabel kEpsilon consume no
// frame; epsilon arcs must be acyclic. Every other arc consumes one frame
// and scores that frame's posterior for `ilabel`.
class DecodeGraph {
 public:
  struct Arc {
    int from = 0;
    int to = 0;
    int ilabel = kEpsilon;
    int word = kNoWord;
    double weight = 0.0;  // natural-log graph score
  };

  int AddState(bool starts_segment = true);
  void AddArc(int from, int to, int ilabel, int word, double weight);
  void SetStart(int s) { start_ = s; }
  void SetFinal(int s, double weight = 0.0);
  int AddWord(const std::string& word);

  /// Builds adjacency and the epsilon order; throws on epsilon cycles,
  /// non-finite weights or disconnected states.
  void Finalize(int num_labels);

  int num_states() const { return static_cast<int>(starts_segment_.size()); }
  int start() const { return start_; }
  bool is_final(int s) const { return final_weight_[s] != kLogZero; }
  double final_weight(int s) const { return final_weight_[s]; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const std::vector<std::string>& words() const { return words_; }
  /// Entering this state from another state opens a new label segment.
  bool starts_segment(int s) const { return starts_segment_[s] != 0; }

  std::span<const int> EmittingArcs(int s) const {
    return {emit_arcs_.data() + emit_offset_[s], emit_arcs_.data() + emit_offset_[s + 1]};
  }
  std::span<const int> EpsilonArcs(int s) const {
    return {eps_arcs_.data() + eps_offset_[s], eps_arcs_.data() + eps_offset_[s + 1]};
  }
  /// States ordered so epsilon arcs always point forward.
  const std::vector<int>& EpsilonOrder() const { return eps_order_; }

  bool allow_blank = false;
  std::optional<int> blank_label;
  bool min_duration = false;

 private:
  std::vector<Arc> arcs_;
  std::vector<char> starts_segment_;
  std::vector<double> final_weight_;
  std::vector<std::string> words_;
  std::map<std::string, int> word_index_;
  int start_ = 0;
  std::vector<int> emit_offset_, emit_arcs_, eps_offset_, eps_arcs_, eps_order_;
};

struct DecodeGraphOptions {
  bool allow_blank = true;
  // Minimum frames per acoustic unit, indexed by acoustic label.
  const DurationStats* min_dur = nullptr;
};

/// Lexicon × LM network. Words expand to phone chains (or to CD phones via
/// `tree`, with word-internal context and boundary context at word edges);
/// optional blank states sit between phones and between words.
/// `acoustic` is the posteriorgram label inventory.
DecodeGraph BuildDecodeGraph(const Lexicon& lex, const NgramLm& lm,
                             const LabelInventory& acoustic, const CDPhoneTree* tree,
                             const DecodeGraphOptions& opts);

/// Linear network accepting exactly `words`, any pronunciation of each.
DecodeGraph BuildTranscriptGraph(const Lexicon& lex, std::span<const std::string> words,
                                 const LabelInventory& acoustic, const CDPhoneTree* tree,
                                 const DecodeGraphOptions& opts);

struct DecodeParams {
  double beam = std::numeric_limits<double>::infinity();
  int max_active = std::numeric_limits<int>::max();
  double am_weight = 1.0;
  double blank_scale = 1.0;
  int lattice_k = 1;  // word histories kept per state; bounds n-best depth
};

/// 1.0 for CI-phone CTC models, 2.1 for CD-phone CTC models.
double DefaultAmWeight(LabelKind kind);

struct LabelSegment {
  int label = 0;
  int start = 0;  // first frame
  int end = 0;    // one past the last frame
  int word = kNoWord;  // set on the first segment of a word
};

struct Hypothesis {
  std::vector<std::string> words;
  double score = kLogZero;
  std::vector<std::pair<int, int>> word_times;  // [start, end) frames
  std::vector<LabelSegment> segments;

  ForcedAlignment FrameLabels() const;
};

struct DecodeResult {
  Hypothesis best;
  Lattice lattice;
  std::vector<Hypothesis> nbest;  // distinct word sequences, best first
};

/// Viterbi beam search over `log_post` (T×L log posteriors); the blank's
/// log-posterior is reduced by log(blank_scale).
DecodeResult BeamSearch(const DecodeGraph& g, const Matrix& log_post,
                        const DecodeParams& p);

/// Per-frame argmax, merge repeats, drop blanks.
std::vector<int> GreedyCtcDecode(const Matrix& post, const LabelInventory& inv);

// --- scoring ----------------------------------------------------------------

enum class OovMode { kAll, kExcludeOov };

struct WerReport {
  double wer_percent = 0.0;
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t ref_words = 0;
  int64_t utterances = 0;
  int64_t excluded_utterances = 0;
  double oov_token_rate_percent = 0.0;
  double oov_utterance_rate_percent = 0.0;

  /// "key=value" lines.
  std::string Summary() const;
};

struct EditCounts {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t errors() const { return substitutions + insertions + deletions; }
};

/// Levenshtein alignment of two word sequences.
EditCounts AlignWords(std::span<const std::string> ref, std::span<const std::string> hyp);

WerReport ScoreWer(const std::vector<std::vector<std::string>>& refs,
                   const std::vector<std::vector<std::string>>& hyps, OovMode mode,
                   const std::set<std::string>* vocab = nullptr);

}  // namespace ctcam

#endif  // CTCAM_DECODER_H_
