#include "ctcam/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "binary_io.h"

namespace ctcam {

// --- data -------------------------------------------------------------------

std::vector<std::string> SplitWords(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

std::string JoinWords(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<Utterance> ReadManifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open manifest " + path);
  std::vector<Utterance> utts;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos) {
      ThrowData(path + ":" + std::to_string(line_no) + ": expected id TAB path TAB transcript");
    }
    Utterance u;
    u.id = line.substr(0, tab1);
    u.path = line.substr(tab1 + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab1 - 1);
    if (tab2 != std::string::npos) u.transcript = SplitWords(line.substr(tab2 + 1));
    if (u.id.empty() || u.path.empty()) {
      ThrowData(path + ":" + std::to_string(line_no) + ": empty id or path");
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

void WriteManifest(const std::string& path, std::span<const Utterance> utts) {
  std::ostringstream os;
  for (const auto& u : utts) os << u.id << '\t' << u.path << '\t' << JoinWords(u.transcript) << '\n';
  io::AtomicWrite(path, os.str());
}

int WordInventoryPreset(const std::string& name) {
  if (name == "7k-style") return 150;
  if (name == "25k-style") return 20;
  ThrowUsage("unknown word inventory preset: " + name);
}

LabelInventory BuildWordInventory(std::span<const std::vector<std::string>> transcripts,
                                  int min_exemplars) {
  if (min_exemplars < 1) ThrowUsage("invalid config: min_exemplars must be ≥ 1");
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& t : transcripts) {
    for (const auto& w : t) ++counts[w];
  }
  if (counts.empty()) ThrowData("empty corpus");
  std::vector<std::pair<std::string, int64_t>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_exemplars) kept.emplace_back(w, c);
  }
  if (kept.empty()) {
    ThrowData("threshold excludes all words (min_exemplars=" + std::to_string(min_exemplars) + ")");
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> names;
  for (auto& [w, _] : kept) names.push_back(std::move(w));
  return LabelInventory::WithBlank(std::move(names), LabelKind::kWord);
}

std::vector<int> WithEdgeSilence(std::vector<int> labels, int silence) {
  if (labels.empty() || labels.front() != silence) labels.insert(labels.begin(), silence);
  if (labels.back() != silence) labels.push_back(silence);
  return labels;
}

std::vector<int> TranscriptLabels(std::span<const std::string> words, const LabelInventory& inv,
                                  const Lexicon* lex, const CDPhoneTree* tree) {
  std::vector<int> labels;
  if (lex == nullptr) {
    for (const auto& w : words) {
      const auto id = inv.find(w);
      if (id) {
        labels.push_back(*id);
      } else if (inv.kind() != LabelKind::kWord) {
        ThrowData("unknown label: " + w);
      }
    }
    return labels;
  }
  for (const auto& w : words) {
    const auto& pron = lex->Pronunciations(w).front();
    for (size_t i = 0; i < pron.size(); ++i) {
      int unit = pron[i];
      if (tree != nullptr) {
        unit = tree->MapContext(pron[i], i > 0 ? pron[i - 1] : kBoundaryPhone,
                                i + 1 < pron.size() ? pron[i + 1] : kBoundaryPhone);
      }
      if (!inv.contains(unit) || inv.blank_id() == unit) {
        ThrowData("pronunciation of " + w + " uses a unit outside the inventory");
      }
      labels.push_back(unit);
    }
  }
  return labels;
}

FeatureMatrix PrepareInput(const Checkpoint& model, const FeatureMatrix& raw) {
  FeatureMatrix feats = raw;
  model.normalizer.Apply(feats);
  feats = StackFrames(feats, model.stack);
  if (feats.dim() != model.params.input_dim) {
    ThrowData("shape error: stacked input has " + std::to_string(feats.dim()) +
              " dims, model expects " + std::to_string(model.params.input_dim));
  }
  return feats;
}

Posteriorgram RunModel(const Checkpoint& model, const FeatureMatrix& raw) {
  return Forward(model.params, PrepareInput(model, raw));
}

// --- training ---------------------------------------------------------------

const char* CriterionName(Criterion c) {
  switch (c) {
    case Criterion::kCe: return "ce";
    case Criterion::kCtc: return "ctc";
    case Criterion::kRealign: return "realign";
    case Criterion::kSmbr: return "smbr";
  }
  return "?";
}

Criterion ParseCriterion(const std::string& name) {
  if (name == "ce") return Criterion::kCe;
  if (name == "ctc") return Criterion::kCtc;
  if (name == "realign") return Criterion::kRealign;
  if (name == "smbr") return Criterion::kSmbr;
  ThrowUsage("unknown criterion: " + name);
}

std::string StepMetrics::Line() const {
  std::ostringstream os;
  os << step << ' ' << std::setprecision(9) << loss << ' ' << grad_norm << ' '
     << std::setprecision(4) << std::fixed << time_ms;
  return os.str();
}

std::vector<int> EpochOrder(int n, uint64_t seed, int64_t epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(epoch), static_cast<uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

std::vector<std::span<double>> Tensors(ModelParams& p) {
  std::vector<std::span<double>> out;
  p.ForEachTensor([&out](std::span<double> t) { out.push_back(t); });
  return out;
}

Lattice ChainLattice(std::span<const int> frame_labels) {
  Lattice lat;
  lat.AddNode(0);
  const int frames = static_cast<int>(frame_labels.size());
  int start = 0, from = 0;
  for (int t = 1; t <= frames; ++t) {
    if (t < frames && frame_labels[t] == frame_labels[start]) continue;
    const int to = lat.AddNode(t);
    lat.arcs.push_back({from, to, frame_labels[start], 0.0, 0.0});
    from = to;
    start = t;
  }
  lat.finals.push_back(from);
  return lat;
}

// Network-frame CE targets: every skip-th raw frame, delayed.
std::vector<int> CeTargets(const TrainUtterance& u, int skip, int delay, Eigen::Index frames) {
  if (static_cast<Eigen::Index>(u.alignment.size()) != u.feats.frames()) {
    ThrowData("length mismatch: alignment of " + u.id + " does not cover its frames");
  }
  std::vector<int> sampled(frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto raw = std::min<Eigen::Index>(t * skip, u.feats.frames() - 1);
    sampled[t] = u.alignment[raw];
  }
  std::vector<int> targets(frames);
  for (Eigen::Index t = 0; t < frames; ++t) targets[t] = sampled[std::max<Eigen::Index>(0, t - delay)];
  return targets;
}

struct UttLoss {
  double loss = 0.0;
  Matrix dlogits;
};

UttLoss CriterionLoss(const TrainConfig& cfg, const ModelParams& params,
                      const TrainUtterance& u, const Matrix& logits, int skip,
                      const DecodeGraph* graph) {
  switch (cfg.criterion) {
    case Criterion::kCe: {
      auto r = CeLossGrad(logits, CeTargets(u, skip, cfg.target_delay, logits.rows()));
      return {r.loss, std::move(r.dlogits)};
    }
    case Criterion::kCtc: {
      auto r = CtcLossGrad(logits, u.labels, params.inventory);
      return {r.loss, std::move(r.dlogits)};
    }
    case Criterion::kRealign: {
      auto r = RealignLossGrad(logits, u.labels);
      return {r.loss, std::move(r.dlogits)};
    }
    case Criterion::kSmbr: {
      DecodeParams lp = cfg.lattice_params;
      lp.blank_scale = cfg.blank_scale;
      const auto [num, den] =
          SmbrLattices(LogSoftmaxRows(logits), u.labels, params.inventory, *graph, lp);
      auto r = SmbrLossGrad(num, den, logits, {cfg.acoustic_scale});
      return {-r.objective, -r.dlogits};
    }
  }
  return {};
}

void SaveIfRequested(const std::string& path, const Checkpoint& ckpt) {
  if (path.empty()) return;
  Checkpoint stored = ckpt;
  RoundToStoragePrecision(stored.params);
  SaveCheckpoint(path, stored);
}

}  // namespace

std::pair<Lattice, Lattice> SmbrLattices(const Matrix& log_post, std::span<const int> labels,
                                         const LabelInventory& inv, const DecodeGraph& graph,
                                         const DecodeParams& params) {
  const auto best = ViterbiAlignLog(BuildCtcGraph(labels, inv), log_post);
  Lattice num = ChainLattice(best.labels);
  Lattice den;
  try {
    den = BeamSearch(graph, log_post, params).lattice;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kData) throw;
    den = num;  // no competitors survived: zero gradient
  }
  return {std::move(num), std::move(den)};
}

double SmbrObjective(const Checkpoint& model, std::span<const TrainUtterance> data,
                     const DecodeGraph& graph, const TrainConfig& cfg) {
  DecodeParams lp = cfg.lattice_params;
  lp.blank_scale = cfg.blank_scale;
  double total = 0;
  int64_t frames = 0;
  for (const auto& u : data) {
    const Matrix logits = ForwardLogits(model.params, PrepareInput(model, u.feats));
    const Matrix log_post = LogSoftmaxRows(logits);
    const auto [num, den] = SmbrLattices(log_post, u.labels, model.params.inventory, graph, lp);
    total += SmbrLossGrad(num, den, logits, {cfg.acoustic_scale}).objective;
    frames += logits.rows();
  }
  return frames > 0 ? total / static_cast<double>(frames) : 0.0;
}

TrainResult Train(const TrainConfig& cfg, std::span<const TrainUtterance> data,
                  const std::optional<Checkpoint>& init, const DecodeGraph* smbr_graph,
                  std::ostream* metrics_log) {
  if (data.empty()) ThrowData("no training utterances");
  if (!(cfg.learning_rate >= 0) || !(cfg.momentum >= 0 && cfg.momentum < 1) ||
      cfg.batch_size < 1 || cfg.steps < 0 || cfg.target_delay < 0 || cfg.plateau_window < 0 ||
      !(cfg.max_grad_norm >= 0)) {
    ThrowUsage("invalid config: training hyperparameters");
  }

  TrainResult result;
  Checkpoint& model = result.model;
  if (init) {
    model = *init;
  } else {
    if (cfg.inventory.size() == 0) ThrowUsage("invalid config: no label inventory");
    const auto layers = cfg.layers.empty() ? ArchitecturePreset(cfg.arch) : cfg.layers;
    std::vector<FeatureMatrix> raw;
    for (const auto& u : data) raw.push_back(u.feats);
    model.normalizer = FeatureNormalizer::Estimate(raw);
    model.stack = cfg.stack;
    const int input_dim = static_cast<int>(data.front().feats.dim()) * cfg.stack.stack;
    model.params = InitParams(layers, input_dim, cfg.inventory, cfg.seed);
  }
  ModelParams& params = model.params;
  const auto& inv = params.inventory;

  switch (cfg.criterion) {
    case Criterion::kCtc:
      if (!inv.has_blank()) ThrowData("not CTC: inventory has no blank label");
      break;
    case Criterion::kSmbr:
      if (!init) ThrowUsage("sMBR training needs an initial model");
      if (smbr_graph == nullptr) ThrowUsage("sMBR training needs a decode graph");
      if (!inv.has_blank()) ThrowData("not CTC: inventory has no blank label");
      break;
    default:
      break;
  }
  for (const auto& u : data) {
    if (cfg.criterion != Criterion::kCe && u.labels.empty()) {
      ThrowData("utterance " + u.id + " has an empty transcript");
    }
    for (int l : u.labels) {
      if (!inv.contains(l)) ThrowData("unknown label in " + u.id);
    }
  }

  std::vector<FeatureMatrix> inputs;
  inputs.reserve(data.size());
  for (const auto& u : data) inputs.push_back(PrepareInput(model, u.feats));

  ModelParams velocity = params.ZerosLike();
  ModelParams last_good = params;
  double lr = cfg.learning_rate;
  double best_window = std::numeric_limits<double>::infinity();
  double window_sum = 0;
  int window_count = 0;

  const int n = static_cast<int>(data.size());
  int64_t cursor = 0;
  std::vector<int> order;
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelParams grads = params.ZerosLike();
    auto grad_tensors = Tensors(grads);
    double loss_sum = 0;
    int64_t frames = 0;
    for (int b = 0; b < cfg.batch_size; ++b, ++cursor) {
      if (cursor % n == 0) order = EpochOrder(n, cfg.seed, cursor / n);
      const int idx = order[cursor % n];
      ForwardCache cache;
      const Matrix logits = ForwardLogits(params, inputs[idx], &cache);
      if (!logits.allFinite()) {
        loss_sum = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      const int skip = model.stack.skip;
      UttLoss ul = CriterionLoss(cfg, params, data[idx], logits, skip, smbr_graph);
      loss_sum += ul.loss;
      frames += logits.rows();
      if (!std::isfinite(ul.loss)) break;
      GradientSet g = Backward(params, cache, ul.dlogits);
      auto src = Tensors(g.grads);
      for (size_t k = 0; k < src.size(); ++k) {
        for (size_t i = 0; i < src[k].size(); ++i) grad_tensors[k][i] += src[k][i];
      }
    }
    const double inv_frames = 1.0 / static_cast<double>(std::max<int64_t>(frames, 1));
    const double loss = loss_sum * inv_frames;
    double norm_sq = 0;
    for (auto& t : grad_tensors) {
      for (double& v : t) {
        v *= inv_frames;
        norm_sq += v * v;
      }
    }
    const double grad_norm = std::sqrt(norm_sq);
    if (!std::isfinite(loss) || !std::isfinite(grad_norm)) {
      Checkpoint good = model;
      good.params = last_good;
      good.step = model.step;
      SaveIfRequested(cfg.checkpoint_path, good);
      ThrowNumerical("training diverged at step " + std::to_string(step) + ": loss " +
                     std::to_string(loss) +
                     (cfg.checkpoint_path.empty()
                          ? std::string()
                          : "; last good parameters saved to " + cfg.checkpoint_path));
    }
    const double clip = cfg.max_grad_norm > 0 && grad_norm > cfg.max_grad_norm
                            ? cfg.max_grad_norm / grad_norm
                            : 1.0;

    last_good = params;
    auto p = Tensors(params);
    auto v = Tensors(velocity);
    for (size_t k = 0; k < p.size(); ++k) {
      for (size_t i = 0; i < p[k].size(); ++i) {
        v[k][i] = cfg.momentum * v[k][i] - lr * clip * grad_tensors[k][i];
        p[k][i] += v[k][i];
      }
    }
    ++params.version;
    ++model.step;

    StepMetrics m{model.step, loss, grad_norm,
                  std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count()};
    if (metrics_log != nullptr) *metrics_log << m.Line() << '\n';
    result.metrics.push_back(m);

    if (cfg.plateau_window > 0) {
      window_sum += loss;
      if (++window_count == cfg.plateau_window) {
        const double mean = window_sum / window_count;
        if (std::isfinite(best_window) && mean > best_window * (1.0 - cfg.plateau_tolerance)) {
          lr *= 0.5;
        }
        best_window = std::min(best_window, mean);
        window_sum = 0;
        window_count = 0;
      }
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      SaveIfRequested(cfg.checkpoint_path, model);
    }
  }
  result.final_learning_rate = lr;
  return result;
}

// --- evaluation -------------------------------------------------------------

std::vector<int> ScaledGreedyDecode(const Posteriorgram& post, const LabelInventory& inv,
                                    double blank_scale) {
  if (!(blank_scale > 0)) ThrowUsage("invalid config: blank_scale must be positive");
  if (blank_scale == 1.0 || !inv.has_blank()) return GreedyCtcDecode(post.data, inv);
  Matrix scaled = post.data;
  scaled.col(*inv.blank_id()) /= blank_scale;
  return GreedyCtcDecode(scaled, inv);
}

EvalResult Evaluate(const Checkpoint& model, std::span<const EvalUtterance> data,
                    const EvalConfig& cfg) {
  if (!cfg.greedy && cfg.graph == nullptr) ThrowUsage("beam decoding needs a decode graph");
  const auto& inv = model.params.inventory;
  EvalResult result;
  std::vector<std::vector<std::string>> refs, hyps;
  for (const auto& u : data) {
    UtteranceResult r;
    r.id = u.id;
    try {
      const Posteriorgram post = RunModel(model, u.feats);
      if (cfg.greedy) {
        for (int l : ScaledGreedyDecode(post, inv, cfg.decode.blank_scale)) {
          r.hypothesis.push_back(inv.name(l));
        }
      } else {
        const Matrix log_post = post.data.array().log().matrix();
        const auto decoded = BeamSearch(*cfg.graph, log_post, cfg.decode);
        r.hypothesis = decoded.best.words;
        r.score = decoded.best.score;
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kUsage) throw;
      r.error = e.what();
      ++result.failures;
    }
    refs.push_back(u.reference);
    hyps.push_back(r.hypothesis);
    result.utterances.push_back(std::move(r));
  }
  result.report = ScoreWer(refs, hyps, cfg.oov, cfg.vocab);
  return result;
}

std::vector<SweepPoint> SweepBlankScale(const Checkpoint& model,
                                        std::span<const EvalUtterance> data,
                                        const EvalConfig& cfg, std::span<const double> grid) {
  std::vector<SweepPoint> points;
  for (double s : grid) {
    EvalConfig c = cfg;
    c.decode.blank_scale = s;
    points.push_back({s, Evaluate(model, data, c).report});
  }
  return points;
}

void DumpPosteriorgram(const Posteriorgram& post, const LabelInventory& inv, std::ostream& os,
                       double threshold) {
  if (post.labels() != inv.size()) ThrowData("shape error: posteriorgram vs inventory");
  os << "frame_index\tlabel_name\tposterior\n";
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index t = 0; t < post.frames(); ++t) {
    for (Eigen::Index l = 0; l < post.labels(); ++l) {
      const double p = post.data(t, l);
      if (p > threshold) os << t << '\t' << inv.name(static_cast<int>(l)) << '\t' << p << '\n';
    }
  }
  os.precision(old_precision);
}

std::map<std::string, std::string> ReadKeyValueFile(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowUsage("cannot open config " + path);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      ThrowUsage(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace ctcam
