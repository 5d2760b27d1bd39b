#include "ctcam/graphs.h"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

namespace ctcam {

const char* LabelKindName(LabelKind kind) {
  switch (kind) {
    case LabelKind::kCdState: return "cd_state";
    case LabelKind::kCiPhone: return "ci_phone";
    case LabelKind::kCdPhone: return "cd_phone";
    case LabelKind::kWord: return "word";
  }
  return "ci_phone";
}

LabelKind ParseLabelKind(const std::string& name) {
  if (name == "cd_state") return LabelKind::kCdState;
  if (name == "ci_phone") return LabelKind::kCiPhone;
  if (name == "cd_phone") return LabelKind::kCdPhone;
  if (name == "word") return LabelKind::kWord;
  ThrowUsage("unknown label kind: " + name);
}

// --- LabelInventory ---------------------------------------------------------

LabelInventory::LabelInventory(std::vector<std::string> names,
                               std::optional<int> blank_id, LabelKind kind)
    : names_(std::move(names)), blank_id_(blank_id), kind_(kind) {
  for (int i = 0; i < size(); ++i) {
    if (names_[i].empty()) ThrowData("empty label name");
    if (!index_.emplace(names_[i], i).second) {
      ThrowData("duplicate label name: " + names_[i]);
    }
  }
  if (blank_id_ && !contains(*blank_id_)) ThrowData("blank id out of range");
}

LabelInventory LabelInventory::WithBlank(std::vector<std::string> names,
                                         LabelKind kind) {
  const int blank = static_cast<int>(names.size());
  names.emplace_back(kBlankName);
  return LabelInventory(std::move(names), blank, kind);
}

std::optional<int> LabelInventory::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelInventory::id(const std::string& name) const {
  const auto found = find(name);
  if (!found) ThrowData("unknown label: " + name);
  return *found;
}

std::vector<int> LabelInventory::Encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id(tok));
  return ids;
}

LabelInventory LabelInventory::ReadFile(const std::string& path, LabelKind kind) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open inventory " + path);
  std::vector<std::string> names;
  std::optional<int> blank;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (line == kBlankName || line == "⟨b⟩") {
      if (blank) ThrowData("inventory " + path + " declares two blanks");
      blank = static_cast<int>(names.size());
      line = kBlankName;
    }
    names.push_back(line);
  }
  if (names.empty()) ThrowData("inventory " + path + " is empty");
  return LabelInventory(std::move(names), blank, kind);
}

void LabelInventory::WriteFile(const std::string& path) const {
  std::ofstream os(path);
  if (!os) ThrowData("cannot write inventory " + path);
  for (const auto& n : names_) os << n << '\n';
}

// --- Lexicon ----------------------------------------------------------------

void Lexicon::Add(const std::string& word, std::vector<int> phones) {
  if (phones.empty()) ThrowData("empty pronunciation for " + word);
  prons_[word].push_back(std::move(phones));
}

const std::vector<std::vector<int>>& Lexicon::Pronunciations(
    const std::string& word) const {
  const auto it = prons_.find(word);
  if (it == prons_.end()) ThrowData("lexicon gap: " + word);
  return it->second;
}

Lexicon Lexicon::ReadFile(const std::string& path, const LabelInventory& phones) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open lexicon " + path);
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ThrowData(path + ":" + std::to_string(lineno) + ": expected word<TAB>phones");
    }
    std::istringstream ps(line.substr(tab + 1));
    std::vector<int> pron;
    std::string phone;
    while (ps >> phone) pron.push_back(phones.id(phone));
    lex.Add(line.substr(0, tab), std::move(pron));
  }
  return lex;
}

// --- AlignmentGraph ---------------------------------------------------------

namespace {

// Compressed adjacency for one direction of the arc list.
struct Adjacency {
  std::vector<int> offset;
  std::vector<int> other;

  Adjacency(const AlignmentGraph& g, bool incoming) {
    const int n = g.num_states();
    offset.assign(n + 1, 0);
    for (const auto& a : g.arcs) ++offset[(incoming ? a.to : a.from) + 1];
    for (int s = 0; s < n; ++s) offset[s + 1] += offset[s];
    other.resize(g.arcs.size());
    std::vector<int> fill(offset.begin(), offset.end() - 1);
    for (const auto& a : g.arcs) {
      const int key = incoming ? a.to : a.from;
      other[fill[key]++] = incoming ? a.from : a.to;
    }
  }
};

void CheckScores(const AlignmentGraph& g, const Matrix& log_scores) {
  if (g.num_states() == 0) ThrowData("empty alignment graph");
  if (log_scores.rows() < 1) ThrowData("empty alignment set: no frames");
  for (int label : g.state_label) {
    if (label < 0 || label >= log_scores.cols()) ThrowData("unknown label in graph");
  }
}

}  // namespace

int AlignmentGraph::MinPathLength() const {
  const int n = num_states();
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (int s : initial) {
    if (dist[s] < 0) {
      dist[s] = 1;
      queue.push_back(s);
    }
  }
  const Adjacency out(*this, false);
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    for (int k = out.offset[s]; k < out.offset[s + 1]; ++k) {
      const int next = out.other[k];
      if (dist[next] < 0) {
        dist[next] = dist[s] + 1;
        queue.push_back(next);
      }
    }
  }
  int best = -1;
  for (int f : finals) {
    if (dist[f] > 0 && (best < 0 || dist[f] < best)) best = dist[f];
  }
  return best;
}

void AlignmentGraph::Validate(int num_labels) const {
  const int n = num_states();
  for (int label : state_label) {
    if (label < 0 || label >= num_labels) ThrowData("unknown label in graph");
  }
  for (const auto& a : arcs) {
    if (a.from < 0 || a.from >= n || a.to < 0 || a.to >= n) {
      ThrowData("graph arc references a missing state");
    }
    if (a.label != state_label[a.to]) ThrowData("graph arc label mismatch");
  }
  auto sweep = [&](const std::vector<int>& seeds, bool incoming) {
    const Adjacency adj(*this, incoming);
    std::vector<char> seen(n, 0);
    std::vector<int> stack;
    for (int s : seeds) {
      if (s < 0 || s >= n) ThrowData("graph seed state out of range");
      if (!seen[s]) {
        seen[s] = 1;
        stack.push_back(s);
      }
    }
    while (!stack.empty()) {
      const int s = stack.back();
      stack.pop_back();
      for (int k = adj.offset[s]; k < adj.offset[s + 1]; ++k) {
        if (!seen[adj.other[k]]) {
          seen[adj.other[k]] = 1;
          stack.push_back(adj.other[k]);
        }
      }
    }
    return seen;
  };
  const auto reach = sweep(initial, false);
  const auto coreach = sweep(finals, true);
  for (int s = 0; s < n; ++s) {
    if (!reach[s] || !coreach[s]) {
      ThrowData("graph state " + std::to_string(s) + " is not on any accepting path");
    }
  }
}

AlignmentGraph BuildCtcGraph(std::span<const int> labels, const LabelInventory& inv) {
  if (!inv.has_blank()) ThrowData("not CTC: inventory has no blank label");
  if (labels.empty()) ThrowData("empty label sequence");
  const int blank = *inv.blank_id();
  for (int l : labels) {
    if (!inv.contains(l) || l == blank) ThrowData("unknown label: " + std::to_string(l));
  }
  const int n = static_cast<int>(labels.size());
  AlignmentGraph g;
  g.state_label.resize(2 * n + 1);
  for (int i = 0; i <= n; ++i) g.state_label[2 * i] = blank;
  for (int i = 0; i < n; ++i) g.state_label[2 * i + 1] = labels[i];

  auto add = [&g](int from, int to) { g.arcs.push_back({from, to, g.state_label[to]}); };
  for (int s = 0; s < 2 * n + 1; ++s) {
    add(s, s);
    if (s + 1 < 2 * n + 1) add(s, s + 1);
    if (s % 2 == 1 && s + 2 < 2 * n + 1 && labels[s / 2] != labels[s / 2 + 1]) {
      add(s, s + 2);
    }
  }
  g.initial = {0, 1};
  g.finals = {2 * n - 1, 2 * n};
  return g;
}

AlignmentGraph BuildForcedGraph(std::span<const int> labels) {
  if (labels.empty()) ThrowData("empty label sequence");
  const int n = static_cast<int>(labels.size());
  AlignmentGraph g;
  g.state_label.assign(labels.begin(), labels.end());
  for (int s = 0; s < n; ++s) {
    if (labels[s] < 0) ThrowData("unknown label: " + std::to_string(labels[s]));
    g.arcs.push_back({s, s, labels[s]});
    if (s + 1 < n) g.arcs.push_back({s, s + 1, labels[s + 1]});
  }
  g.initial = {0};
  g.finals = {n - 1};
  return g;
}

ForwardBackwardResult ForwardBackwardLog(const AlignmentGraph& g,
                                         const Matrix& log_scores) {
  CheckScores(g, log_scores);
  const int n = g.num_states();
  const Eigen::Index frames = log_scores.rows();
  const Adjacency in(g, true);
  const Adjacency out(g, false);

  Matrix alpha = Matrix::Constant(frames, n, kLogZero);
  Matrix beta = Matrix::Constant(frames, n, kLogZero);
  for (int s : g.initial) alpha(0, s) = log_scores(0, g.state_label[s]);
  for (Eigen::Index t = 1; t < frames; ++t) {
    for (int s = 0; s < n; ++s) {
      double acc = kLogZero;
      for (int k = in.offset[s]; k < in.offset[s + 1]; ++k) {
        acc = LogAdd(acc, alpha(t - 1, in.other[k]));
      }
      if (acc != kLogZero) alpha(t, s) = acc + log_scores(t, g.state_label[s]);
    }
  }
  for (int s : g.finals) beta(frames - 1, s) = 0.0;
  for (Eigen::Index t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < n; ++s) {
      double acc = kLogZero;
      for (int k = out.offset[s]; k < out.offset[s + 1]; ++k) {
        const int next = out.other[k];
        if (beta(t + 1, next) == kLogZero) continue;
        acc = LogAdd(acc, beta(t + 1, next) + log_scores(t + 1, g.state_label[next]));
      }
      beta(t, s) = acc;
    }
  }

  ForwardBackwardResult result;
  for (int s : g.finals) result.log_total = LogAdd(result.log_total, alpha(frames - 1, s));
  if (result.log_total == kLogZero || !std::isfinite(result.log_total)) {
    ThrowData("empty alignment set: transcript cannot be aligned to " +
              std::to_string(frames) + " frames");
  }

  result.gamma = Matrix::Zero(frames, log_scores.cols());
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int s = 0; s < n; ++s) {
      const double lp = alpha(t, s) + beta(t, s);
      if (lp == kLogZero || std::isnan(lp)) continue;
      result.gamma(t, g.state_label[s]) += std::exp(lp - result.log_total);
    }
  }
  return result;
}

namespace {

Matrix FrameLogScores(const Matrix& posteriors, const PriorVector* priors) {
  // Scalar log keeps equal inputs bit-equal; Eigen's packet log can differ
  // from its scalar tail by an ulp, which breaks exact Viterbi ties.
  const auto log = [](double x) { return std::log(x); };
  Matrix ls = posteriors.unaryExpr(log);
  if (priors != nullptr) {
    if (priors->size() != posteriors.cols()) ThrowData("shape error: prior size");
    ls.rowwise() -= priors->unaryExpr(log).transpose();
  }
  return ls;
}

}  // namespace

ForwardBackwardResult ForwardBackward(const AlignmentGraph& g, const Matrix& posteriors,
                                      const PriorVector* priors) {
  return ForwardBackwardLog(g, FrameLogScores(posteriors, priors));
}

ViterbiResult ViterbiAlignLog(const AlignmentGraph& g, const Matrix& log_scores) {
  CheckScores(g, log_scores);
  const int n = g.num_states();
  const Eigen::Index frames = log_scores.rows();
  const Adjacency out(g, false);

  // Best completion score from (t, s) to the end, including frame t.
  Matrix best = Matrix::Constant(frames, n, kLogZero);
  for (int s : g.finals) best(frames - 1, s) = log_scores(frames - 1, g.state_label[s]);
  for (Eigen::Index t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < n; ++s) {
      double acc = kLogZero;
      for (int k = out.offset[s]; k < out.offset[s + 1]; ++k) {
        acc = std::max(acc, best(t + 1, out.other[k]));
      }
      if (acc != kLogZero) best(t, s) = acc + log_scores(t, g.state_label[s]);
    }
  }

  // Forward trace; ties resolve to the highest-numbered state.
  auto pick = [&](Eigen::Index t, auto begin, auto end) {
    int chosen = -1;
    double score = kLogZero;
    for (auto it = begin; it != end; ++it) {
      const int s = *it;
      const double v = best(t, s);
      if (v == kLogZero) continue;
      if (chosen < 0 || v > score || (v == score && s > chosen)) {
        chosen = s;
        score = v;
      }
    }
    return chosen;
  };

  ViterbiResult result;
  int state = pick(0, g.initial.begin(), g.initial.end());
  if (state < 0) {
    ThrowData("empty alignment set: transcript cannot be aligned to " +
              std::to_string(frames) + " frames");
  }
  result.log_score = best(0, state);
  result.states.push_back(state);
  for (Eigen::Index t = 1; t < frames; ++t) {
    state = pick(t, out.other.begin() + out.offset[state],
                 out.other.begin() + out.offset[state + 1]);
    result.states.push_back(state);
  }
  result.labels.reserve(result.states.size());
  for (int s : result.states) result.labels.push_back(g.state_label[s]);
  return result;
}

ViterbiResult ViterbiAlign(const AlignmentGraph& g, const Matrix& posteriors) {
  return ViterbiAlignLog(g, FrameLogScores(posteriors, nullptr));
}

PriorVector EstimatePriors(std::span<const ForcedAlignment> alignments,
                           const LabelInventory& inv) {
  if (alignments.empty()) ThrowData("cannot estimate priors from no alignments");
  constexpr double kFloor = 1e-8;
  Vector counts = Vector::Zero(inv.size());
  double total = 0;
  for (const auto& align : alignments) {
    for (int l : align) {
      if (!inv.contains(l)) ThrowData("unknown label: " + std::to_string(l));
      counts[l] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0) ThrowData("cannot estimate priors from empty alignments");
  PriorVector priors = (counts / total).array().max(kFloor);
  priors /= priors.sum();
  return priors;
}

}  // namespace ctcam
