#ifndef CTCAM_CDPHONE_H_
#define CTCAM_CDPHONE_H_

#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctcam/common.h"
#include "ctcam/frontend.h"
#include "ctcam/graphs.h"

namespace ctcam {

// Context id used at utterance (and, in decoding graphs, word) edges.
inline constexpr int kBoundaryPhone = -1;

// Number of filterbank coefficients per frame used for phone vectors.
inline constexpr int kPhoneVectorBands = 40;

struct PhoneSample {
  int phone = 0;
  int left = kBoundaryPhone;
  int right = kBoundaryPhone;
  Vector vec;  // first | centre | last frame, 3 × 40 values
  int duration_frames = 1;
};

enum class ContextSide { kLeft, kRight };

struct PhoneticQuestion {
  std::string name;
  ContextSide side = ContextSide::kLeft;
  std::set<int> phones;  // may contain kBoundaryPhone

  bool Answer(int left, int right) const {
    return phones.count(side == ContextSide::kLeft ? left : right) != 0;
  }
};

/// Turns each contiguous run of one phone into a sample. `phone_map`
/// translates alignment labels into phone ids; empty means identity, and a
/// negative entry drops that label's frames from context (e.g. blank).
std::vector<PhoneSample> CollectSamples(std::span<const int> alignment,
                                        const FeatureMatrix& feats,
                                        std::span<const int> phone_map = {});

/// Default questions: broad classes (vowel, nasal, plosive, fricative,
/// approximant, silence) for phones whose names are recognised, one
/// singleton question per phone, and a boundary question; both sides.
std::vector<PhoneticQuestion> DefaultQuestions(const LabelInventory& phones);

/// "name TAB left|right TAB phone phone ..." per line; "#" for boundary.
std::vector<PhoneticQuestion> ReadQuestions(const std::string& path,
                                            const LabelInventory& phones);

struct TreeGrowOptions {
  int min_leaf_count = 1;
  double min_gain = 0.0;
  int max_leaves = std::numeric_limits<int>::max();
};

/// Diagonal-Gaussian sufficient statistics for a pool of phone vectors.
struct GaussianStats {
  double count = 0;
  Vector sum;
  Vector sum_sq;

  void Add(const Vector& v);
  void Add(const GaussianStats& other);
  /// Total log-likelihood of the pool under its own ML Gaussian, with
  /// per-dimension variance floored at 1e-4.
  double LogLikelihood() const;
};

class CDPhoneTree {
 public:
  struct Node {
    int question = -1;  // index into questions(); -1 for a leaf
    int yes = -1;
    int no = -1;
    int leaf_id = -1;
    int sample_count = 0;
    double split_gain = 0.0;
  };

  CDPhoneTree() = default;

  int num_leaves() const { return num_leaves_; }
  int num_phones() const { return static_cast<int>(roots_.size()); }
  const std::vector<PhoneticQuestion>& questions() const { return questions_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  int root(int phone) const { return roots_.at(phone); }
  /// Centre phone of a leaf.
  int LeafPhone(int leaf_id) const { return leaf_phone_.at(leaf_id); }
  int LeafSampleCount(int leaf_id) const;

  /// Tied CD-phone id for `phone` in context. Unseen context phones answer
  /// "not in set"; an unknown centre phone throws "unknown phone".
  int MapContext(int phone, int left, int right) const;

  /// CD-phone inventory "<phone>_<k>" for every leaf, optionally with blank.
  LabelInventory MakeInventory(const LabelInventory& phones, bool with_blank) const;

  /// s-expression text: a (questions ...) section then one (tree ...) per phone.
  void Write(const std::string& path, const LabelInventory& phones) const;
  static CDPhoneTree Read(const std::string& path, const LabelInventory& phones);

 private:
  friend CDPhoneTree GrowTrees(std::span<const PhoneSample>,
                               const std::vector<PhoneticQuestion>&, int,
                               const TreeGrowOptions&);
  friend class TreeParser;

  void NumberLeaves();

  std::vector<PhoneticQuestion> questions_;
  std::vector<Node> nodes_;
  std::vector<int> roots_;
  std::vector<int> leaf_phone_;
  std::vector<int> leaf_node_;
  int num_leaves_ = 0;
};

/// Best question for a pool of samples, by likelihood gain.
struct SplitChoice {
  int question = -1;
  double gain = -std::numeric_limits<double>::infinity();
};
SplitChoice BestSplit(std::span<const PhoneSample* const> pool,
                      const std::vector<PhoneticQuestion>& questions,
                      int min_leaf_count);

/// Greedy divisive clustering: one tree per phone, repeatedly splitting
/// the leaf (over all phones) whose best question has the largest gain.
CDPhoneTree GrowTrees(std::span<const PhoneSample> samples,
                      const std::vector<PhoneticQuestion>& questions, int num_phones,
                      const TreeGrowOptions& opts);

struct DurationStats {
  std::vector<std::map<int, int>> histogram;  // per CD phone: frames → count
  std::vector<int> min_frames;                // per CD phone, ≥ 1

  int MinFrames(int cd_phone) const { return min_frames.at(cd_phone); }

  /// "cdphone_id TAB min_frames" per line.
  void Write(const std::string& path) const;
  static DurationStats Read(const std::string& path);
};

/// Smallest d whose cumulative fraction of durations ≤ d reaches
/// `percentile`, floored at one frame.
int DurationCutoff(std::span<const int> durations, double percentile = 0.10);

/// Per-CD-phone minimum durations from training samples.
DurationStats DurationMinima(const CDPhoneTree& tree, std::span<const PhoneSample> samples,
                             double percentile = 0.10);

}  // namespace ctcam

#endif  // CTCAM_CDPHONE_H_
