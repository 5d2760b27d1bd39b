#include "ctcam/criteria.h"

#include <algorithm>
#include <numeric>

namespace ctcam {

LossAndGrad CeLossGrad(const Matrix& logits, std::span<const int> alignment) {
  if (static_cast<Eigen::Index>(alignment.size()) != logits.rows()) {
    ThrowData("length mismatch: " + std::to_string(alignment.size()) +
              " targets for " + std::to_string(logits.rows()) + " frames");
  }
  const Matrix log_post = LogSoftmaxRows(logits);
  LossAndGrad out;
  out.dlogits = log_post.array().exp().matrix();
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const int target = alignment[t];
    if (target < 0 || target >= logits.cols()) ThrowData("unknown label in alignment");
    out.loss -= log_post(t, target);
    out.dlogits(t, target) -= 1.0;
  }
  return out;
}

LossAndGrad CtcLossGrad(const Matrix& logits, std::span<const int> labels,
                        const LabelInventory& inv) {
  if (logits.cols() != inv.size()) ThrowData("shape error: logits vs inventory");
  const Matrix log_post = LogSoftmaxRows(logits);
  const auto fb = ForwardBackwardLog(BuildCtcGraph(labels, inv), log_post);
  LossAndGrad out;
  out.loss = -fb.log_total;
  out.dlogits = log_post.array().exp().matrix() - fb.gamma;
  return out;
}

LossAndGrad RealignLossGrad(const Matrix& logits, std::span<const int> labels,
                            const PriorVector* priors) {
  const Matrix log_post = LogSoftmaxRows(logits);
  Matrix scores = log_post;
  if (priors != nullptr) {
    if (priors->size() != logits.cols()) ThrowData("shape error: prior size");
    scores.rowwise() -= priors->array().log().matrix().transpose();
  }
  for (int l : labels) {
    if (l < 0 || l >= logits.cols()) ThrowData("unknown label: " + std::to_string(l));
  }
  const auto fb = ForwardBackwardLog(BuildForcedGraph(labels), scores);
  LossAndGrad out;
  out.loss = -fb.log_total;
  out.dlogits = log_post.array().exp().matrix() - fb.gamma;
  return out;
}

namespace {

// Arcs reordered so that every arc's source precedes its destination.
struct LatticeView {
  std::vector<int> order;  // nodes by frame, ties by id
  std::vector<std::vector<int>> in;
  std::vector<std::vector<int>> out;
  std::vector<double> weight;
  std::vector<double> acoustic;
};

LatticeView PrepareLattice(const Lattice& lat, const Matrix& log_post, double kappa) {
  if (lat.empty()) ThrowData("no paths: empty lattice");
  lat.Validate();
  const auto frames = static_cast<int>(log_post.rows());
  for (int f : lat.finals) {
    if (lat.node_frame[f] != frames) {
      ThrowData("lattice final node at frame " + std::to_string(lat.node_frame[f]) +
                " does not close the " + std::to_string(frames) + "-frame utterance");
    }
  }
  LatticeView v;
  v.order.resize(lat.num_nodes());
  std::iota(v.order.begin(), v.order.end(), 0);
  std::stable_sort(v.order.begin(), v.order.end(), [&lat](int a, int b) {
    return lat.node_frame[a] < lat.node_frame[b];
  });
  v.in.resize(lat.num_nodes());
  v.out.resize(lat.num_nodes());
  v.weight.resize(lat.arcs.size());
  v.acoustic.resize(lat.arcs.size());
  for (int i = 0; i < static_cast<int>(lat.arcs.size()); ++i) {
    const auto& a = lat.arcs[i];
    if (lat.node_frame[a.to] > frames) ThrowData("lattice extends past the last frame");
    if (a.label < 0 || a.label >= log_post.cols()) ThrowData("unknown label in lattice");
    double am = 0;
    for (int t = lat.node_frame[a.from]; t < lat.node_frame[a.to]; ++t) {
      am += log_post(t, a.label);
    }
    v.acoustic[i] = am;
    v.weight[i] = kappa * am + a.lm_score;
    v.in[a.to].push_back(i);
    v.out[a.from].push_back(i);
  }
  return v;
}

}  // namespace

ForcedAlignment LatticeBestPath(const Lattice& lat, const Matrix& log_post,
                                double acoustic_scale) {
  const LatticeView v = PrepareLattice(lat, log_post, acoustic_scale);
  std::vector<double> best(lat.num_nodes(), kLogZero);
  std::vector<int> back(lat.num_nodes(), -1);
  best[0] = 0.0;
  for (int n : v.order) {
    for (int i : v.in[n]) {
      const double s = best[lat.arcs[i].from] + v.weight[i];
      if (best[lat.arcs[i].from] != kLogZero && s > best[n]) {
        best[n] = s;
        back[n] = i;
      }
    }
  }
  int end = -1;
  for (int f : lat.finals) {
    if (best[f] != kLogZero && (end < 0 || best[f] > best[end])) end = f;
  }
  if (end < 0) ThrowData("no paths: lattice final is unreachable");
  ForcedAlignment path(static_cast<size_t>(log_post.rows()), -1);
  for (int n = end; n != 0;) {
    const auto& a = lat.arcs[back[n]];
    for (int t = lat.node_frame[a.from]; t < lat.node_frame[a.to]; ++t) path[t] = a.label;
    n = a.from;
  }
  if (std::find(path.begin(), path.end(), -1) != path.end()) {
    ThrowData("lattice path does not cover every frame");
  }
  return path;
}

SmbrResult SmbrLossGrad(const Lattice& num, const Lattice& den, const Matrix& logits,
                        const SmbrOptions& opts) {
  const double kappa = opts.acoustic_scale;
  const Matrix log_post = LogSoftmaxRows(logits);
  SmbrResult result;
  result.reference = LatticeBestPath(num, log_post, kappa);

  const LatticeView v = PrepareLattice(den, log_post, kappa);
  const int n_nodes = den.num_nodes();
  const auto& arcs = den.arcs;

  std::vector<double> accuracy(arcs.size());
  for (size_t i = 0; i < arcs.size(); ++i) {
    double acc = 0;
    for (int t = den.node_frame[arcs[i].from]; t < den.node_frame[arcs[i].to]; ++t) {
      acc += arcs[i].label == result.reference[t] ? 1.0 : 0.0;
    }
    accuracy[i] = acc;
  }

  // Forward: log mass and expected accuracy of partial paths into each node.
  std::vector<double> alpha(n_nodes, kLogZero), alpha_acc(n_nodes, 0.0);
  alpha[0] = 0.0;
  for (int n : v.order) {
    if (n == 0) continue;
    for (int i : v.in[n]) alpha[n] = LogAdd(alpha[n], alpha[arcs[i].from] + v.weight[i]);
    if (alpha[n] == kLogZero) continue;
    double acc = 0;
    for (int i : v.in[n]) {
      const int from = arcs[i].from;
      if (alpha[from] == kLogZero) continue;
      acc += std::exp(alpha[from] + v.weight[i] - alpha[n]) * (alpha_acc[from] + accuracy[i]);
    }
    alpha_acc[n] = acc;
  }

  std::vector<char> is_final(n_nodes, 0);
  for (int f : den.finals) is_final[f] = 1;
  std::vector<double> beta(n_nodes, kLogZero), beta_acc(n_nodes, 0.0);
  for (auto it = v.order.rbegin(); it != v.order.rend(); ++it) {
    const int n = *it;
    if (is_final[n]) beta[n] = 0.0;
    for (int i : v.out[n]) beta[n] = LogAdd(beta[n], v.weight[i] + beta[arcs[i].to]);
    if (beta[n] == kLogZero) continue;
    double acc = 0;
    for (int i : v.out[n]) {
      const int to = arcs[i].to;
      if (beta[to] == kLogZero) continue;
      acc += std::exp(v.weight[i] + beta[to] - beta[n]) * (accuracy[i] + beta_acc[to]);
    }
    beta_acc[n] = acc;
  }

  double log_z = kLogZero;
  for (int f : den.finals) log_z = LogAdd(log_z, alpha[f]);
  if (log_z == kLogZero || !std::isfinite(log_z)) ThrowData("no paths: empty lattice");

  double expected = 0;
  for (int f : den.finals) {
    if (alpha[f] != kLogZero) expected += std::exp(alpha[f] - log_z) * alpha_acc[f];
  }
  result.objective = expected;

  result.dlogits = Matrix::Zero(logits.rows(), logits.cols());
  for (size_t i = 0; i < arcs.size(); ++i) {
    const auto& a = arcs[i];
    if (alpha[a.from] == kLogZero || beta[a.to] == kLogZero) continue;
    const double post = std::exp(alpha[a.from] + v.weight[i] + beta[a.to] - log_z);
    const double arc_acc = alpha_acc[a.from] + accuracy[i] + beta_acc[a.to];
    const double g = kappa * post * (arc_acc - expected);
    for (int t = den.node_frame[a.from]; t < den.node_frame[a.to]; ++t) {
      result.dlogits(t, a.label) += g;
    }
  }
  // Softmax chain rule. Each row of the log-posterior gradient sums to zero
  // when every path covers every frame, so this only removes rounding.
  const Vector row_sums = result.dlogits.rowwise().sum();
  result.dlogits -= (log_post.array().exp().colwise() * row_sums.array()).matrix();
  return result;
}

}  // namespace ctcam
