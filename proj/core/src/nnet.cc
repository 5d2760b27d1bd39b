#include "ctcam/nnet.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace ctcam {
namespace {

constexpr double kInitRange = 0.04;

template <typename Params, typename Fn>
void VisitTensors(Params& params, Fn&& fn) {
  auto visit_dir = [&fn](auto& w) {
    fn(w.input.data(), w.input.size(), false);
    fn(w.recurrent.data(), w.recurrent.size(), false);
    fn(w.bias.data(), w.bias.size(), true);
    if (w.projection.size() > 0) fn(w.projection.data(), w.projection.size(), false);
  };
  for (auto& layer : params.layers) {
    visit_dir(layer.fwd);
    if (layer.bwd) visit_dir(*layer.bwd);
  }
  fn(params.output_weights.data(), params.output_weights.size(), false);
  fn(params.output_bias.data(), params.output_bias.size(), true);
}

LstmWeights ZeroWeights(int in_dim, const LayerSpec& spec) {
  const int h = spec.cells;
  const int p = spec.projection.value_or(h);
  LstmWeights w;
  w.input = Matrix::Zero(4 * h, in_dim);
  w.recurrent = Matrix::Zero(4 * h, p);
  w.bias = Vector::Zero(4 * h);
  if (spec.projection) w.projection = Matrix::Zero(p, h);
  return w;
}

ModelParams ZeroModel(const std::vector<LayerSpec>& arch, int input_dim,
                      const LabelInventory& inventory) {
  if (arch.empty()) ThrowUsage("invalid architecture: no layers");
  if (input_dim < 1) ThrowUsage("invalid architecture: input dimension");
  if (inventory.size() < 1) ThrowUsage("invalid architecture: empty inventory");
  ModelParams params;
  params.input_dim = input_dim;
  params.inventory = inventory;
  int in_dim = input_dim;
  for (const auto& spec : arch) {
    if (spec.cells < 1 || (spec.projection && *spec.projection < 1)) {
      ThrowUsage("invalid architecture: zero-size layer");
    }
    LayerParams layer;
    layer.spec = spec;
    layer.fwd = ZeroWeights(in_dim, spec);
    if (spec.direction == Direction::kBidirectional) layer.bwd = ZeroWeights(in_dim, spec);
    params.layers.push_back(std::move(layer));
    in_dim = spec.OutputDim();
  }
  params.output_weights = Matrix::Zero(inventory.size(), in_dim);
  params.output_bias = Vector::Zero(inventory.size());
  return params;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void RunDirection(const LstmWeights& w, const LayerSpec& spec, const Matrix& x,
                  bool reverse, const ClipConfig& clip, DirectionCache& dc) {
  const int h = spec.cells;
  const Eigen::Index frames = x.rows();
  const bool project = w.projection.size() > 0;

  Matrix pre = x * w.input.transpose();
  pre.rowwise() += w.bias.transpose();

  dc.input = x;
  dc.gates.resize(frames, 4 * h);
  dc.cells.resize(frames, h);
  dc.saturated.setConstant(frames, h, false);
  dc.hidden.resize(frames, h);
  dc.output.resize(frames, w.recurrent.cols());

  Eigen::RowVectorXd r_prev = Eigen::RowVectorXd::Zero(w.recurrent.cols());
  Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd a(4 * h);
  for (Eigen::Index k = 0; k < frames; ++k) {
    const Eigen::Index t = reverse ? frames - 1 - k : k;
    a.noalias() = pre.row(t) + r_prev * w.recurrent.transpose();
    auto gates = dc.gates.row(t);
    for (int j = 0; j < h; ++j) {
      gates[j] = Sigmoid(a[j]);
      gates[h + j] = Sigmoid(a[h + j]);
      gates[2 * h + j] = std::tanh(a[2 * h + j]);
      gates[3 * h + j] = Sigmoid(a[3 * h + j]);
    }
    for (int j = 0; j < h; ++j) {
      double c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
      if (clip.enabled && std::abs(c) > clip.cell_limit) {
        c = std::clamp(c, -clip.cell_limit, clip.cell_limit);
        dc.saturated(t, j) = true;
      }
      dc.cells(t, j) = c;
      dc.hidden(t, j) = gates[3 * h + j] * std::tanh(c);
    }
    if (project) {
      dc.output.row(t).noalias() = dc.hidden.row(t) * w.projection.transpose();
    } else {
      dc.output.row(t) = dc.hidden.row(t);
    }
    r_prev = dc.output.row(t);
    c_prev = dc.cells.row(t);
  }
}

// Returns ∂loss/∂input for this sub-layer and accumulates weight gradients.
Matrix BackwardDirection(const LstmWeights& w, const LayerSpec& spec,
                         const DirectionCache& dc, const Matrix& dout, bool reverse,
                         const ClipConfig& clip, LstmWeights& grad,
                         double& max_cell_grad) {
  const int h = spec.cells;
  const Eigen::Index frames = dout.rows();
  const bool project = w.projection.size() > 0;
  const Eigen::Index p = w.recurrent.cols();

  Matrix da(frames, 4 * h);
  Matrix r_prev_rows = Matrix::Zero(frames, p);
  Eigen::RowVectorXd dr_next = Eigen::RowVectorXd::Zero(p);
  Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd dr(p), dm(h);

  for (Eigen::Index k = frames - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? frames - 1 - k : k;
    const bool has_prev = k > 0;
    const Eigen::Index tp = reverse ? t + 1 : t - 1;

    dr = dout.row(t) + dr_next;
    if (project) {
      grad.projection.noalias() += dr.transpose() * dc.hidden.row(t);
      dm.noalias() = dr * w.projection;
    } else {
      dm = dr;
    }

    const auto gates = dc.gates.row(t);
    auto da_row = da.row(t);
    for (int j = 0; j < h; ++j) {
      const double ig = gates[j], fg = gates[h + j], gg = gates[2 * h + j],
                   og = gates[3 * h + j];
      const double tanh_c = std::tanh(dc.cells(t, j));
      double dcell = dm[j] * og * (1.0 - tanh_c * tanh_c) + dc_next[j];
      if (clip.enabled) {
        dcell = std::clamp(dcell, -clip.cell_grad_limit, clip.cell_grad_limit);
        if (dc.saturated(t, j)) dcell = 0.0;
      }
      max_cell_grad = std::max(max_cell_grad, std::abs(dcell));
      const double c_prev = has_prev ? dc.cells(tp, j) : 0.0;
      da_row[j] = dcell * gg * ig * (1.0 - ig);
      da_row[h + j] = dcell * c_prev * fg * (1.0 - fg);
      da_row[2 * h + j] = dcell * ig * (1.0 - gg * gg);
      da_row[3 * h + j] = dm[j] * tanh_c * og * (1.0 - og);
      dc_next[j] = dcell * fg;
    }
    if (has_prev) r_prev_rows.row(t) = dc.output.row(tp);
    dr_next.noalias() = da_row * w.recurrent;
  }

  grad.input.noalias() += da.transpose() * dc.input;
  grad.recurrent.noalias() += da.transpose() * r_prev_rows;
  grad.bias += da.colwise().sum().transpose();
  return da * w.input;
}

}  // namespace

int64_t ModelParams::NumParameters() const {
  int64_t n = 0;
  VisitTensors(*this, [&n](const double*, Eigen::Index size, bool) { n += size; });
  return n;
}

void ModelParams::ForEachTensor(const std::function<void(std::span<double>)>& fn) {
  VisitTensors(*this, [&fn](double* data, Eigen::Index size, bool) {
    fn(std::span<double>(data, static_cast<size_t>(size)));
  });
}

void ModelParams::ForEachTensor(
    const std::function<void(std::span<const double>)>& fn) const {
  VisitTensors(*this, [&fn](const double* data, Eigen::Index size, bool) {
    fn(std::span<const double>(data, static_cast<size_t>(size)));
  });
}

ModelParams ModelParams::ZerosLike() const {
  ModelParams zero = *this;
  zero.ForEachTensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  return zero;
}

ModelParams InitParams(const std::vector<LayerSpec>& arch, int input_dim,
                       const LabelInventory& inventory, uint64_t seed) {
  ModelParams params = ZeroModel(arch, input_dim, inventory);
  std::mt19937_64 gen(seed);
  auto draw = [&gen]() {
    while (true) {
      const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;
      const double w = static_cast<float>(-kInitRange + 2.0 * kInitRange * unit);
      if (std::abs(w) < kInitRange) return w;
    }
  };
  VisitTensors(params, [&draw](double* data, Eigen::Index size, bool is_bias) {
    if (is_bias) return;
    for (Eigen::Index i = 0; i < size; ++i) data[i] = draw();
  });
  return params;
}

std::vector<LayerSpec> ArchitecturePreset(const std::string& name) {
  if (name == "ctc-uni") {
    return std::vector<LayerSpec>(5, LayerSpec{500, Direction::kForward, std::nullopt});
  }
  if (name == "ctc-bi") {
    return std::vector<LayerSpec>(5, LayerSpec{300, Direction::kBidirectional, std::nullopt});
  }
  if (name == "conventional") {
    return std::vector<LayerSpec>(2, LayerSpec{1000, Direction::kForward, 512});
  }
  if (name == "conventional-bi") {
    return std::vector<LayerSpec>(2, LayerSpec{1000, Direction::kBidirectional, 512});
  }
  ThrowUsage("unknown architecture preset: " + name);
}

StackConfig StackPreset(const std::string& name) {
  if (name == "ctc-uni") return {8, 3, EdgePadding::kReplicateLast};
  if (name == "ctc-bi") return {3, 3, EdgePadding::kReplicateLast};
  if (name == "conventional") return {8, 1, EdgePadding::kReplicateLast};
  if (name == "conventional-bi") return {1, 1, EdgePadding::kReplicateLast};
  ThrowUsage("unknown stacking preset: " + name);
}

Matrix ForwardLogits(const ModelParams& params, const FeatureMatrix& feats,
                     ForwardCache* cache, const ClipConfig& clip) {
  if (feats.dim() != params.input_dim) {
    ThrowData("shape error: features have dimension " + std::to_string(feats.dim()) +
              ", model expects " + std::to_string(params.input_dim));
  }
  if (feats.frames() < 1) ThrowData("shape error: no frames");

  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c.layers.clear();
  c.layers.resize(params.layers.size());
  c.params_version = params.version;
  c.params_count = params.NumParameters();
  c.clip = clip;

  const Matrix* x = &feats.data;
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    auto& lc = c.layers[i];
    RunDirection(layer.fwd, layer.spec, *x, false, clip, lc.fwd);
    if (layer.bwd) {
      lc.bwd.emplace();
      RunDirection(*layer.bwd, layer.spec, *x, true, clip, *lc.bwd);
      lc.output.resize(x->rows(), layer.spec.OutputDim());
      const auto half = lc.fwd.output.cols();
      lc.output.leftCols(half) = lc.fwd.output;
      lc.output.rightCols(half) = lc.bwd->output;
    } else {
      lc.output = lc.fwd.output;
    }
    x = &lc.output;
  }
  c.logits = *x * params.output_weights.transpose();
  c.logits.rowwise() += params.output_bias.transpose();
  return c.logits;
}

Posteriorgram Forward(const ModelParams& params, const FeatureMatrix& feats,
                      ForwardCache* cache, const ClipConfig& clip) {
  Posteriorgram post;
  post.data = SoftmaxRows(ForwardLogits(params, feats, cache, clip));
  return post;
}

GradientSet Backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& dlogits) {
  if (cache.params_version != params.version ||
      cache.params_count != params.NumParameters() ||
      cache.layers.size() != params.layers.size() ||
      cache.logits.cols() != params.num_labels()) {
    ThrowUsage("stale cache: forward cache was produced by different parameters");
  }
  if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols()) {
    ThrowData("shape error: dlogits does not match forward output");
  }

  GradientSet gs;
  gs.grads = params.ZerosLike();
  const Matrix& top = params.layers.empty() ? cache.logits : cache.layers.back().output;
  gs.grads.output_weights.noalias() = dlogits.transpose() * top;
  gs.grads.output_bias = dlogits.colwise().sum().transpose();

  Matrix dout = dlogits * params.output_weights;
  for (int i = static_cast<int>(params.layers.size()) - 1; i >= 0; --i) {
    const auto& layer = params.layers[i];
    const auto& lc = cache.layers[i];
    auto& g = gs.grads.layers[i];
    if (layer.bwd) {
      const auto half = lc.fwd.output.cols();
      const Matrix dfwd = dout.leftCols(half);
      const Matrix dbwd = dout.rightCols(half);
      Matrix dx = BackwardDirection(layer.fwd, layer.spec, lc.fwd, dfwd, false,
                                    cache.clip, g.fwd, gs.max_cell_grad);
      dx += BackwardDirection(*layer.bwd, layer.spec, *lc.bwd, dbwd, true, cache.clip,
                              *g.bwd, gs.max_cell_grad);
      dout = std::move(dx);
    } else {
      dout = BackwardDirection(layer.fwd, layer.spec, lc.fwd, dout, false, cache.clip,
                               g.fwd, gs.max_cell_grad);
    }
  }
  return gs;
}

ModelParams BakeBlankScale(const ModelParams& params, double scale) {
  if (!params.inventory.has_blank()) ThrowData("not a CTC model: no blank label");
  if (!(scale > 0.0) || !std::isfinite(scale)) ThrowUsage("invalid config: blank scale");
  ModelParams baked = params;
  baked.output_bias[*params.inventory.blank_id()] += -std::log(scale);
  ++baked.version;
  return baked;
}

void RoundToStoragePrecision(ModelParams& params) {
  params.ForEachTensor([](std::span<double> t) {
    for (double& v : t) v = static_cast<float>(v);
  });
  ++params.version;
}

}  // namespace ctcam
