#ifndef CTCAM_GRAPHS_H_
#define CTCAM_GRAPHS_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctcam/common.h"

namespace ctcam {

enum class LabelKind { kCdState, kCiPhone, kCdPhone, kWord };

const char* LabelKindName(LabelKind kind);
LabelKind ParseLabelKind(const std::string& name);

// Canonical spelling of the blank label in inventory files.
inline constexpr const char* kBlankName = "<b>";

class LabelInventory {
 public:
  LabelInventory() = default;
  LabelInventory(std::vector<std::string> names, std::optional<int> blank_id,
                 LabelKind kind);

  /// Builds an inventory from names and appends a blank when `with_blank`.
  static LabelInventory WithBlank(std::vector<std::string> names, LabelKind kind);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<int> blank_id() const { return blank_id_; }
  bool has_blank() const { return blank_id_.has_value(); }
  LabelKind kind() const { return kind_; }
  bool contains(int id) const { return id >= 0 && id < size(); }

  /// Id for `name`, or nullopt.
  std::optional<int> find(const std::string& name) const;
  /// Id for `name`; throws "unknown label".
  int id(const std::string& name) const;

  std::vector<int> Encode(std::span<const std::string> tokens) const;

  /// One label per line; "<b>" (or "⟨b⟩") marks the blank.
  static LabelInventory ReadFile(const std::string& path, LabelKind kind);
  void WriteFile(const std::string& path) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::optional<int> blank_id_;
  LabelKind kind_ = LabelKind::kCiPhone;
};

// word → pronunciations over a phone inventory.
class Lexicon {
 public:
  void Add(const std::string& word, std::vector<int> phones);

  const std::vector<std::vector<int>>& Pronunciations(const std::string& word) const;
  bool contains(const std::string& word) const { return prons_.count(word) != 0; }
  const std::map<std::string, std::vector<std::vector<int>>>& entries() const {
    return prons_;
  }

  /// "word TAB phone phone ..." per line, phones resolved against `phones`.
  static Lexicon ReadFile(const std::string& path, const LabelInventory& phones);

 private:
  std::map<std::string, std::vector<std::vector<int>>> prons_;
};

// State-labelled alignment graph: occupying state s at frame t emits
// label(s). Self-loops are explicit arcs. A path of length T starts in one of
// `initial`, follows one arc per frame transition, and ends in `finals`.
struct AlignmentGraph {
  struct Arc {
    int from;
    int to;
    int label;  // label of `to`
  };

  std::vector<int> state_label;
  std::vector<Arc> arcs;
  std::vector<int> initial;
  std::vector<int> finals;

  int num_states() const { return static_cast<int>(state_label.size()); }

  /// Fewest frames any accepted path needs.
  int MinPathLength() const;

  /// Throws unless every state is reachable and co-reachable.
  void Validate(int num_labels) const;
};

using PriorVector = Vector;

/// CTC topology: blank, l1, blank, l2, ..., ln, blank (2n+1 states).
AlignmentGraph BuildCtcGraph(std::span<const int> labels, const LabelInventory& inv);

/// Blank-free linear chain with self-loops.
AlignmentGraph BuildForcedGraph(std::span<const int> labels);

struct ForwardBackwardResult {
  double log_total = kLogZero;
  Matrix gamma;  // T×L label occupancies; rows sum to 1
};

/// Forward-backward over per-frame log scores (T×L).
ForwardBackwardResult ForwardBackwardLog(const AlignmentGraph& g,
                                         const Matrix& log_scores);

/// Forward-backward over a posteriorgram. With priors, frame scores are
/// posterior / prior (scaled likelihoods); otherwise raw posteriors.
ForwardBackwardResult ForwardBackward(const AlignmentGraph& g, const Matrix& posteriors,
                                      const PriorVector* priors = nullptr);

struct ViterbiResult {
  double log_score = kLogZero;
  ForcedAlignment labels;
  std::vector<int> states;
};

/// Best single path. Among exactly tied paths the one that moves to
/// higher-numbered states earliest wins (advance beats self-loop).
ViterbiResult ViterbiAlignLog(const AlignmentGraph& g, const Matrix& log_scores);
ViterbiResult ViterbiAlign(const AlignmentGraph& g, const Matrix& posteriors);

/// Relative label frequencies, floored at 1e-8 and renormalised.
PriorVector EstimatePriors(std::span<const ForcedAlignment> alignments,
                           const LabelInventory& inv);

}  // namespace ctcam

#endif  // CTCAM_GRAPHS_H_
