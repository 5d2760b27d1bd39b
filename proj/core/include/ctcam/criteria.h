#ifndef CTCAM_CRITERIA_H_
#define CTCAM_CRITERIA_H_

#include <span>
#include <string>
#include <vector>

#include "ctcam/common.h"
#include "ctcam/graphs.h"

namespace ctcam {

// Timed label lattice. Node 0 is the start node at frame 0. Arc a covers
// frames [frame(from), frame(to)) and emits its label on each of them.
struct Lattice {
  struct Arc {
    int from = 0;
    int to = 0;
    int label = 0;
    double am_score = 0.0;  // acoustic log-score recorded at creation
    double lm_score = 0.0;  // graph log-score
  };

  std::vector<int> node_frame;
  std::vector<Arc> arcs;
  std::vector<int> finals;

  int num_nodes() const { return static_cast<int>(node_frame.size()); }
  bool empty() const { return arcs.empty() || finals.empty(); }

  int AddNode(int frame) {
    node_frame.push_back(frame);
    return num_nodes() - 1;
  }

  /// Throws unless arcs advance time, nodes are in range and the start node
  /// sits at frame 0.
  void Validate() const;

  /// Text format: "node ID FRAME", "arc FROM TO LABEL AM LM" and "final ID"
  /// lines.
  void Write(const std::string& path) const;
  static Lattice Read(const std::string& path);
  std::string ToText() const;
  static Lattice FromText(const std::string& text);
};

struct LossAndGrad {
  double loss = 0.0;
  Matrix dlogits;  // T×L
};

/// Frame cross-entropy against a fixed alignment.
LossAndGrad CeLossGrad(const Matrix& logits, std::span<const int> alignment);

/// CTC: −log Σ over CTC paths; dlogits = softmax − occupancy.
LossAndGrad CtcLossGrad(const Matrix& logits, std::span<const int> labels,
                        const LabelInventory& inv);

/// Forward-backward realignment over a blank-free forced graph with frame
/// scores divided by `priors` (nullptr: unscaled).
LossAndGrad RealignLossGrad(const Matrix& logits, std::span<const int> labels,
                            const PriorVector* priors = nullptr);

struct SmbrOptions {
  double acoustic_scale = 1.0;  // κ
};

struct SmbrResult {
  double objective = 0.0;  // expected frame accuracy over the den lattice
  Matrix dlogits;          // ∂objective/∂logits (ascent direction)
  ForcedAlignment reference;
};

/// State-level minimum Bayes risk. Arc acoustic scores are recomputed from
/// `logits` (Σ log-softmax over the arc's frames); the reference labelling
/// is the best numerator path under the same scores.
SmbrResult SmbrLossGrad(const Lattice& num, const Lattice& den, const Matrix& logits,
                        const SmbrOptions& opts = {});

/// Best path through a lattice under κ·acoustic + graph scores, as a
/// per-frame label sequence.
ForcedAlignment LatticeBestPath(const Lattice& lat, const Matrix& log_post,
                                double acoustic_scale);

}  // namespace ctcam

#endif  // CTCAM_CRITERIA_H_
