// Brute-force reference implementations used to check the library. None of
// these call into the code they check beyond plain data types.
#ifndef CTCAM_TESTS_ORACLES_H_
#define CTCAM_TESTS_ORACLES_H_

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctcam/cdphone.h"
#include "ctcam/common.h"
#include "ctcam/criteria.h"
#include "ctcam/decoder.h"
#include "ctcam/graphs.h"
#include "ctcam/nnet.h"

namespace oracle {

using ctcam::Matrix;
using ctcam::Vector;

// --- label paths ------------------------------------------------------------

/// Collapse repeats, then drop `blank` (pass -1 for no blank).
std::vector<int> Collapse(const std::vector<int>& frames, int blank);

/// Calls fn for every length-T sequence over L labels.
void ForEachSequence(int T, int L, const std::function<void(const std::vector<int>&)>& fn);

struct PathSum {
  double total = 0.0;  // Σ over accepted paths of Π_t scores(t, path_t)
  Matrix gamma;        // label marginals, rows normalised by total
  int paths = 0;
};

/// CTC: every frame labelling whose collapse equals `labels`.
PathSum CtcBruteForce(const Matrix& probs, const std::vector<int>& labels, int blank);

/// Blank-free: every labelling whose run-length collapse equals `labels`.
/// Only meaningful when `labels` has no adjacent repeats.
PathSum ForcedBruteForce(const Matrix& probs, const std::vector<int>& labels);

/// Explicit DFS over an alignment graph's state paths.
PathSum GraphBruteForce(const ctcam::AlignmentGraph& g, const Matrix& probs);

// --- finite differences -----------------------------------------------------

/// Central differences of f at x, entry by entry.
Matrix NumericGradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                       double h = 1e-5);

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂), 0 when both vanish.
double RelativeError(const Matrix& a, const Matrix& b);

// --- lattices ---------------------------------------------------------------

struct LatticePath {
  std::vector<int> arcs;
  std::vector<int> frame_labels;
};

std::vector<LatticePath> EnumerateLatticePaths(const ctcam::Lattice& lat);

struct SmbrOracle {
  double objective = 0.0;
  Matrix dlogits;
  std::vector<int> reference;
};

/// sMBR by enumerating both lattices.
SmbrOracle SmbrByEnumeration(const ctcam::Lattice& num, const ctcam::Lattice& den,
                             const Matrix& logits, double kappa);

/// Random lattice with `paths` distinct label paths over T frames and L labels.
ctcam::Lattice RandomLattice(std::mt19937_64& rng, int T, int L, int paths);

// --- decoding ---------------------------------------------------------------

struct DecodeOracle {
  bool found = false;
  double score = ctcam::kLogZero;
  std::vector<int> words;  // graph word ids
  bool unique = true;      // no other word sequence reaches the same score
  long paths = 0;
};

/// Exhaustive search over every T-frame path of a decode graph, scoring
/// each step exactly as the beam search does.
DecodeOracle ExhaustiveDecode(const ctcam::DecodeGraph& g, const Matrix& log_post,
                              const ctcam::DecodeParams& p);

/// Number of T-frame start→final paths (capped at `cap`).
long CountDecodePaths(const ctcam::DecodeGraph& g, int T, long cap);

/// Small random acyclic-ε decode graph; finalized.
ctcam::DecodeGraph RandomDecodeGraph(std::mt19937_64& rng, int num_labels, int num_words);

// --- scoring ----------------------------------------------------------------

/// Minimum number of word edits (single-row DP, written independently).
long EditDistance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// --- clustering -------------------------------------------------------------

/// Smallest duration d with fraction(durations ≤ d) ≥ percentile, via sort.
int DurationBySort(std::vector<int> durations, double percentile);

/// Two-pass Gaussian log-likelihood of a pool (variance floor 1e-4).
double PoolLogLikelihood(const std::vector<const ctcam::PhoneSample*>& pool);

struct SplitOracle {
  int question = -1;
  double gain = -1e300;
  std::vector<double> gains;  // per question; -inf when a side is empty
};

SplitOracle ExhaustiveSplit(const std::vector<const ctcam::PhoneSample*>& pool,
                            const std::vector<ctcam::PhoneticQuestion>& questions);

struct Run {
  int label;
  int start;
  int length;
};

std::vector<Run> RunLengths(const std::vector<int>& seq);

// --- models -----------------------------------------------------------------

/// Model with weights uniform in (−scale, scale) and random biases.
ctcam::ModelParams RandomModel(std::mt19937_64& rng, const std::vector<ctcam::LayerSpec>& arch,
                               int input_dim, const ctcam::LabelInventory& inv, double scale);

Matrix RandomMatrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0);

/// Stochastic rows from random logits.
Matrix RandomPosteriors(std::mt19937_64& rng, int T, int L, double sharpness = 1.0);

ctcam::LabelInventory LetterInventory(int num_labels, bool with_blank);

}  // namespace oracle

#endif  // CTCAM_TESTS_ORACLES_H_
