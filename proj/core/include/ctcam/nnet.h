#ifndef CTCAM_NNET_H_
#define CTCAM_NNET_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctcam/common.h"
#include "ctcam/frontend.h"
#include "ctcam/graphs.h"

namespace ctcam {

enum class Direction { kForward, kBidirectional };

struct LayerSpec {
  int cells = 0;
  Direction direction = Direction::kForward;
  std::optional<int> projection;

  int OutputDim() const {
    const int per_dir = projection.value_or(cells);
    return direction == Direction::kBidirectional ? 2 * per_dir : per_dir;
  }
};

// Weights of one LSTM running in one time direction. Gate rows are stacked
// [input; forget; cell; output], each `cells` tall.
struct LstmWeights {
  Matrix input;       // 4H × In
  Matrix recurrent;   // 4H × P
  Vector bias;        // 4H
  Matrix projection;  // P × H, empty when the layer has no projection
};

struct LayerParams {
  LayerSpec spec;
  LstmWeights fwd;
  std::optional<LstmWeights> bwd;
};

struct ModelParams {
  int input_dim = 0;
  std::vector<LayerParams> layers;
  Matrix output_weights;  // L × top
  Vector output_bias;     // L
  LabelInventory inventory;
  // Bumped by every in-place update; caches remember it.
  uint64_t version = 0;

  int num_labels() const { return static_cast<int>(output_bias.size()); }
  int64_t NumParameters() const;

  /// Visits every tensor in checkpoint order.
  void ForEachTensor(const std::function<void(std::span<double>)>& fn);
  void ForEachTensor(const std::function<void(std::span<const double>)>& fn) const;

  /// Same geometry, all entries zero (gradient accumulator shape).
  ModelParams ZerosLike() const;
};

struct ClipConfig {
  bool enabled = true;
  double cell_limit = 50.0;
  double cell_grad_limit = 1.0;
};

// Gate activations, cell states and outputs kept for backprop.
struct DirectionCache {
  Matrix input;      // T × In (what this sub-layer consumed)
  Matrix gates;      // T × 4H, post-nonlinearity [i f g o]
  Matrix cells;      // T × H, after clipping
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> saturated;
  Matrix hidden;     // T × H, o ⊙ tanh(c)
  Matrix output;     // T × P, projected (or == hidden)
};

struct LayerCache {
  DirectionCache fwd;
  std::optional<DirectionCache> bwd;
  Matrix output;  // T × OutputDim
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix logits;
  uint64_t params_version = 0;
  int64_t params_count = 0;
  ClipConfig clip;
};

// Label ids index columns of the producing model's inventory.
struct Posteriorgram {
  Matrix data;  // T × L, row-stochastic

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index labels() const { return data.cols(); }
};

struct GradientSet {
  ModelParams grads;
  double loss = 0.0;
  // Largest |∂/∂c_t| seen after clipping; diagnostics only.
  double max_cell_grad = 0.0;
};

/// Uniform (−0.04, 0.04) weights, zero biases, deterministic in `seed`.
/// Weights are representable in 32 bits so checkpoints round-trip exactly.
ModelParams InitParams(const std::vector<LayerSpec>& arch, int input_dim,
                       const LabelInventory& inventory, uint64_t seed);

/// Named geometries: "ctc-uni" (5×500), "ctc-bi" (5×2×300), "conventional"
/// (2×1000 with a 512-unit recurrent projection), "conventional-bi".
std::vector<LayerSpec> ArchitecturePreset(const std::string& name);

/// Stacking presets paired with the geometries above.
StackConfig StackPreset(const std::string& name);

/// Runs the network; logits are also returned in the cache.
Posteriorgram Forward(const ModelParams& params, const FeatureMatrix& feats,
                      ForwardCache* cache = nullptr, const ClipConfig& clip = {});

/// Logits only (no softmax), for criteria that work in logit space.
Matrix ForwardLogits(const ModelParams& params, const FeatureMatrix& feats,
                     ForwardCache* cache = nullptr, const ClipConfig& clip = {});

/// Exact BPTT from ∂loss/∂logits back to every parameter.
GradientSet Backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& dlogits);

/// Adds −log(scale) to the blank output bias.
ModelParams BakeBlankScale(const ModelParams& params, double scale);

/// Rounds every parameter to float32 (checkpoint storage precision).
void RoundToStoragePrecision(ModelParams& params);

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  StackConfig stack;
  FeatureNormalizer normalizer;
  int64_t step = 0;
};

/// "CTCM1", u32 descriptor length, JSON architecture descriptor, then every
/// tensor as little-endian f32 in ForEachTensor order, then the normaliser.
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace ctcam

#endif  // CTCAM_NNET_H_
