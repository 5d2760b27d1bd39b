#include "ctcam/decoder.h"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace ctcam {

// --- language model ---------------------------------------------------------

namespace {

constexpr double kLn10 = std::numbers::ln10;

bool IsSentenceMarker(const std::string& w) {
  return w == "<s>" || w == "</s>" || w == "<unk>";
}

}  // namespace

std::vector<std::string> NgramLm::Vocabulary() const {
  std::vector<std::string> words;
  for (const auto& [w, _] : unigram) {
    if (!IsSentenceMarker(w)) words.push_back(w);
  }
  return words;
}

NgramLm NgramLm::Uniform(std::span<const std::string> words) {
  NgramLm lm;
  const double lp = -std::log10(static_cast<double>(words.size()));
  for (const auto& w : words) lm.unigram[w] = lp;
  return lm;
}

NgramLm NgramLm::ReadArpa(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open language model " + path);
  NgramLm lm;
  int order = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "\\data\\" || line.rfind("ngram ", 0) == 0) continue;
    if (line == "\\end\\") break;
    if (line == "\\1-grams:") {
      order = 1;
      continue;
    }
    if (line == "\\2-grams:") {
      order = 2;
      continue;
    }
    if (line[0] == '\\') {
      order = -1;  // higher orders are ignored
      continue;
    }
    if (order <= 0) continue;
    std::istringstream ls(line);
    double prob = 0;
    if (!(ls >> prob)) ThrowData("malformed ARPA line: " + line);
    if (order == 1) {
      std::string w;
      double bo = 0;
      if (!(ls >> w)) ThrowData("malformed ARPA unigram: " + line);
      lm.unigram[w] = prob;
      if (ls >> bo) lm.backoff[w] = bo;
    } else {
      std::string w1, w2;
      if (!(ls >> w1 >> w2)) ThrowData("malformed ARPA bigram: " + line);
      lm.bigram[{w1, w2}] = prob;
    }
  }
  if (lm.unigram.empty()) ThrowData("language model " + path + " has no unigrams");
  return lm;
}

// --- DecodeGraph ------------------------------------------------------------

int DecodeGraph::AddState(bool starts_segment) {
  starts_segment_.push_back(starts_segment ? 1 : 0);
  final_weight_.push_back(kLogZero);
  return num_states() - 1;
}

void DecodeGraph::AddArc(int from, int to, int ilabel, int word, double weight) {
  arcs_.push_back({from, to, ilabel, word, weight});
}

void DecodeGraph::SetFinal(int s, double weight) { final_weight_.at(s) = weight; }

int DecodeGraph::AddWord(const std::string& word) {
  const auto [it, inserted] = word_index_.emplace(word, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

void DecodeGraph::Finalize(int num_labels) {
  const int n = num_states();
  if (n == 0 || start_ < 0 || start_ >= n) ThrowData("decode graph has no start state");
  for (const auto& a : arcs_) {
    if (a.from < 0 || a.from >= n || a.to < 0 || a.to >= n) {
      ThrowData("decode graph arc references a missing state");
    }
    if (a.ilabel != kEpsilon && (a.ilabel < 0 || a.ilabel >= num_labels)) {
      ThrowData("decode graph input label outside the acoustic inventory");
    }
    if (a.word != kNoWord && (a.word < 0 || a.word >= static_cast<int>(words_.size()))) {
      ThrowData("decode graph output word out of range");
    }
    if (!std::isfinite(a.weight)) ThrowData("decode graph weight is not finite");
    if (a.ilabel == kEpsilon && a.from == a.to) ThrowData("epsilon self-loop");
  }

  auto build = [&](bool epsilon, std::vector<int>& offset, std::vector<int>& ids) {
    offset.assign(n + 1, 0);
    for (const auto& a : arcs_) {
      if ((a.ilabel == kEpsilon) == epsilon) ++offset[a.from + 1];
    }
    for (int s = 0; s < n; ++s) offset[s + 1] += offset[s];
    ids.assign(offset[n], 0);
    std::vector<int> fill(offset.begin(), offset.end() - 1);
    for (int i = 0; i < static_cast<int>(arcs_.size()); ++i) {
      if ((arcs_[i].ilabel == kEpsilon) == epsilon) ids[fill[arcs_[i].from]++] = i;
    }
  };
  build(false, emit_offset_, emit_arcs_);
  build(true, eps_offset_, eps_arcs_);

  // Kahn's algorithm over epsilon arcs.
  std::vector<int> indegree(n, 0);
  for (const auto& a : arcs_) {
    if (a.ilabel == kEpsilon) ++indegree[a.to];
  }
  std::queue<int> ready;
  for (int s = 0; s < n; ++s) {
    if (indegree[s] == 0) ready.push(s);
  }
  eps_order_.clear();
  while (!ready.empty()) {
    const int s = ready.front();
    ready.pop();
    eps_order_.push_back(s);
    for (int i : EpsilonArcs(s)) {
      if (--indegree[arcs_[i].to] == 0) ready.push(arcs_[i].to);
    }
  }
  if (static_cast<int>(eps_order_.size()) != n) ThrowData("decode graph has an epsilon cycle");

  // Connectivity: reachable from start and able to reach a final state.
  std::vector<char> fwd(n, 0), bwd(n, 0);
  std::vector<int> stack = {start_};
  fwd[start_] = 1;
  while (!stack.empty()) {
    const int s = stack.back();
    stack.pop_back();
    for (auto span : {EmittingArcs(s), EpsilonArcs(s)}) {
      for (int i : span) {
        if (!fwd[arcs_[i].to]) {
          fwd[arcs_[i].to] = 1;
          stack.push_back(arcs_[i].to);
        }
      }
    }
  }
  std::vector<std::vector<int>> incoming(n);
  for (const auto& a : arcs_) incoming[a.to].push_back(a.from);
  for (int s = 0; s < n; ++s) {
    if (is_final(s)) {
      bwd[s] = 1;
      stack.push_back(s);
    }
  }
  while (!stack.empty()) {
    const int s = stack.back();
    stack.pop_back();
    for (int p : incoming[s]) {
      if (!bwd[p]) {
        bwd[p] = 1;
        stack.push_back(p);
      }
    }
  }
  for (int s = 0; s < n; ++s) {
    if (!fwd[s] || !bwd[s]) {
      ThrowData("decode graph state " + std::to_string(s) + " is disconnected");
    }
  }
}

// --- graph construction -----------------------------------------------------

namespace {

class NetworkBuilder {
 public:
  NetworkBuilder(DecodeGraph& g, const LabelInventory& acoustic, const CDPhoneTree* tree,
                 const DecodeGraphOptions& opts)
      : g_(g), acoustic_(acoustic), tree_(tree), opts_(opts) {
    if (opts.allow_blank) {
      if (!acoustic.has_blank()) ThrowData("not CTC: blank requested but inventory has none");
      blank_ = *acoustic.blank_id();
    }
    g_.allow_blank = opts.allow_blank;
    if (opts.allow_blank) g_.blank_label = blank_;
    g_.min_duration = opts.min_dur != nullptr;
  }

  // A word-boundary state plus, with blanks, its optional blank state.
  struct Hub {
    int state;
    int blank;  // -1 without blanks
  };

  Hub AddHub(bool with_blank = true) {
    Hub h{g_.AddState(true), -1};
    if (with_blank && blank_ >= 0) {
      h.blank = g_.AddState(true);
      g_.AddArc(h.state, h.blank, blank_, kNoWord, 0.0);
      g_.AddArc(h.blank, h.blank, blank_, kNoWord, 0.0);
    }
    return h;
  }

  void SetFinal(const Hub& h, double weight) {
    g_.SetFinal(h.state, weight);
    if (h.blank >= 0) g_.SetFinal(h.blank, weight);
  }

  std::vector<int> Units(const std::vector<int>& pron) const {
    std::vector<int> units;
    units.reserve(pron.size());
    for (size_t i = 0; i < pron.size(); ++i) {
      int unit = pron[i];
      if (tree_ != nullptr) {
        const int left = i > 0 ? pron[i - 1] : kBoundaryPhone;
        const int right = i + 1 < pron.size() ? pron[i + 1] : kBoundaryPhone;
        unit = tree_->MapContext(pron[i], left, right);
      }
      if (!acoustic_.contains(unit) || unit == blank_) {
        ThrowData("pronunciation unit " + std::to_string(unit) +
                  " is not an acoustic label");
      }
      units.push_back(unit);
    }
    return units;
  }

  int MinFrames(int unit) const {
    if (opts_.min_dur == nullptr) return 1;
    const auto& mins = opts_.min_dur->min_frames;
    return unit < static_cast<int>(mins.size()) ? std::max(1, mins[unit]) : 1;
  }

  // Word path from `from` to `to`; the word is emitted on the entry arcs.
  void AddWordPath(const Hub& from, int word, double weight, const std::vector<int>& units,
                   const Hub& to) {
    std::vector<int> sources = {from.state};
    if (from.blank >= 0) sources.push_back(from.blank);
    bool first = true;
    int last = -1;
    for (size_t i = 0; i < units.size(); ++i) {
      const int u = units[i];
      const int len = MinFrames(u);
      int head = -1, prev = -1;
      for (int k = 0; k < len; ++k) {
        const int s = g_.AddState(k == 0);
        if (k == 0) {
          head = s;
        } else {
          g_.AddArc(prev, s, u, kNoWord, 0.0);
        }
        prev = s;
      }
      g_.AddArc(prev, prev, u, kNoWord, 0.0);
      for (int src : sources) {
        g_.AddArc(src, head, u, first ? word : kNoWord, first ? weight : 0.0);
      }
      first = false;
      last = prev;
      sources.clear();
      if (i + 1 < units.size()) {
        if (blank_ < 0 || units[i + 1] != u) sources.push_back(prev);
        if (blank_ >= 0) {
          const int b = g_.AddState(true);
          g_.AddArc(prev, b, blank_, kNoWord, 0.0);
          g_.AddArc(b, b, blank_, kNoWord, 0.0);
          sources.push_back(b);
        }
      }
    }
    g_.AddArc(last, to.state, kEpsilon, kNoWord, 0.0);
  }

  void AddWord(const Lexicon& lex, const Hub& from, const std::string& word,
               double weight, const Hub& to) {
    const int id = g_.AddWord(word);
    for (const auto& pron : lex.Pronunciations(word)) {
      AddWordPath(from, id, weight, Units(pron), to);
    }
  }

 private:
  DecodeGraph& g_;
  const LabelInventory& acoustic_;
  const CDPhoneTree* tree_;
  DecodeGraphOptions opts_;
  int blank_ = -1;
};

}  // namespace

DecodeGraph BuildDecodeGraph(const Lexicon& lex, const NgramLm& lm,
                             const LabelInventory& acoustic, const CDPhoneTree* tree,
                             const DecodeGraphOptions& opts) {
  const auto vocab = lm.Vocabulary();
  if (vocab.empty()) ThrowData("language model has no words");
  for (const auto& w : vocab) {
    if (!lex.contains(w)) ThrowData("lexicon gap: " + w);
  }
  DecodeGraph g;
  NetworkBuilder b(g, acoustic, tree, opts);
  auto weight_of = [](double log10p) { return log10p * kLn10; };
  const auto end_it = lm.unigram.find("</s>");

  if (!lm.has_bigrams()) {
    const auto hub = b.AddHub();
    g.SetStart(hub.state);
    b.SetFinal(hub, end_it != lm.unigram.end() ? weight_of(end_it->second) : 0.0);
    for (const auto& w : vocab) b.AddWord(lex, hub, w, weight_of(lm.unigram.at(w)), hub);
  } else {
    // One hub per history word plus a backoff hub. The backoff hub is entered
    // by epsilon from a history hub or its blank state, so it has no blank of
    // its own.
    const auto backoff_hub = b.AddHub(false);
    std::map<std::string, NetworkBuilder::Hub> hubs;
    std::vector<std::string> histories = vocab;
    histories.emplace_back("<s>");
    for (const auto& h : histories) hubs.emplace(h, b.AddHub());
    g.SetStart(hubs.at("<s>").state);
    for (const auto& h : histories) {
      const auto& hub = hubs.at(h);
      const auto bo = lm.backoff.find(h);
      const double bo_w = bo != lm.backoff.end() ? weight_of(bo->second) : 0.0;
      g.AddArc(hub.state, backoff_hub.state, kEpsilon, kNoWord, bo_w);
      if (hub.blank >= 0) g.AddArc(hub.blank, backoff_hub.state, kEpsilon, kNoWord, bo_w);
      if (h == "<s>") continue;
      const auto end_bigram = lm.bigram.find({h, "</s>"});
      if (end_bigram != lm.bigram.end()) {
        b.SetFinal(hub, weight_of(end_bigram->second));
      } else {
        b.SetFinal(hub, bo_w + (end_it != lm.unigram.end() ? weight_of(end_it->second) : 0.0));
      }
    }
    for (const auto& [key, prob] : lm.bigram) {
      const auto& [h, w] = key;
      if (IsSentenceMarker(w) || !hubs.count(h)) continue;
      if (!lm.unigram.count(w)) ThrowData("bigram word missing from unigrams: " + w);
      b.AddWord(lex, hubs.at(h), w, weight_of(prob), hubs.at(w));
    }
    for (const auto& w : vocab) {
      b.AddWord(lex, backoff_hub, w, weight_of(lm.unigram.at(w)), hubs.at(w));
    }
  }
  g.Finalize(acoustic.size());
  return g;
}

DecodeGraph BuildTranscriptGraph(const Lexicon& lex, std::span<const std::string> words,
                                 const LabelInventory& acoustic, const CDPhoneTree* tree,
                                 const DecodeGraphOptions& opts) {
  DecodeGraph g;
  NetworkBuilder b(g, acoustic, tree, opts);
  auto prev = b.AddHub();
  g.SetStart(prev.state);
  for (const auto& w : words) {
    const auto next = b.AddHub();
    b.AddWord(lex, prev, w, 0.0, next);
    prev = next;
  }
  b.SetFinal(prev, 0.0);
  g.Finalize(acoustic.size());
  return g;
}

double DefaultAmWeight(LabelKind kind) {
  return kind == LabelKind::kCdPhone ? 2.1 : 1.0;
}

// --- search -----------------------------------------------------------------

ForcedAlignment Hypothesis::FrameLabels() const {
  ForcedAlignment labels;
  for (const auto& seg : segments) {
    for (int t = seg.start; t < seg.end; ++t) labels.push_back(seg.label);
  }
  return labels;
}

namespace {

struct Token {
  double score;
  int hist;   // interned word sequence
  int trace;  // last trace node, -1 at start
};

// Either a label segment (label ≥ 0) or a word mark (label < 0).
struct TraceNode {
  int label;
  int frame;
  int word;
  int prev;
  double score_at_start;
};

class Search {
 public:
  Search(const DecodeGraph& g, const Matrix& log_post, const DecodeParams& p)
      : g_(g), p_(p), cur_(g.num_states()), next_(g.num_states()),
        queued_(g.num_states(), 0), eps_pos_(g.num_states(), 0) {
    if (!(p.beam > 0)) ThrowUsage("invalid config: beam must be positive");
    if (p.max_active < 1 || p.lattice_k < 1) ThrowUsage("invalid config: max_active/lattice_k");
    if (!(p.am_weight > 0) || !(p.blank_scale > 0)) {
      ThrowUsage("invalid config: am_weight and blank_scale must be positive");
    }
    for (size_t i = 0; i < g.EpsilonOrder().size(); ++i) eps_pos_[g.EpsilonOrder()[i]] = static_cast<int>(i);
    const double blank_adj = std::log(p.blank_scale);
    acoustic_ = log_post;
    if (g.blank_label) acoustic_.col(*g.blank_label).array() -= blank_adj;
    acoustic_ *= p.am_weight;
    histories_.push_back({-1, kNoWord});
  }

  DecodeResult Run() {
    const auto frames = static_cast<int>(acoustic_.rows());
    if (frames < 1) ThrowData("no hypothesis: empty posteriorgram");
    Insert(next_, next_active_, g_.start(), Token{0.0, 0, -1});
    CloseEpsilon(0);
    std::swap(cur_, next_);
    std::swap(cur_active_, next_active_);
    for (int t = 0; t < frames; ++t) {
      for (int s : cur_active_) {
        for (const Token& tok : cur_[s]) {
          for (int ai : g_.EmittingArcs(s)) {
            const auto& arc = g_.arcs()[ai];
            const double score = tok.score + acoustic_(t, arc.ilabel) + arc.weight;
            const int hist = arc.word != kNoWord ? Extend(tok.hist, arc.word) : tok.hist;
            if (!WouldAccept(next_[arc.to], hist, score)) continue;
            int trace = tok.trace;
            if (arc.word != kNoWord) trace = AddTrace(-1, t, arc.word, trace, tok.score);
            if (arc.to != s && g_.starts_segment(arc.to)) {
              trace = AddTrace(arc.ilabel, t, kNoWord, trace, tok.score);
            }
            Insert(next_, next_active_, arc.to, Token{score, hist, trace});
          }
        }
        cur_[s].clear();
      }
      cur_active_.clear();
      CloseEpsilon(t + 1);
      Prune();
      std::swap(cur_, next_);
      std::swap(cur_active_, next_active_);
      if (cur_active_.empty()) {
        ThrowData("no hypothesis: every token was pruned at frame " + std::to_string(t));
      }
    }
    return Finish(frames);
  }

 private:
  int Extend(int hist, int word) {
    const auto key = std::make_pair(hist, word);
    const auto it = intern_.find(key);
    if (it != intern_.end()) return it->second;
    histories_.push_back(key);
    const int id = static_cast<int>(histories_.size()) - 1;
    intern_.emplace(key, id);
    return id;
  }

  int AddTrace(int label, int frame, int word, int prev, double score) {
    trace_.push_back({label, frame, word, prev, score});
    return static_cast<int>(trace_.size()) - 1;
  }

  bool WouldAccept(const std::vector<Token>& list, int hist, double score) const {
    if (static_cast<int>(list.size()) < p_.lattice_k) {
      return true;
    }
    double worst = list[0].score;
    for (const Token& tok : list) {
      if (tok.hist == hist) return score > tok.score;
      worst = std::min(worst, tok.score);
    }
    return score > worst;
  }

  void Insert(std::vector<std::vector<Token>>& slots, std::vector<int>& active, int state,
              const Token& tok) {
    auto& list = slots[state];
    if (list.empty()) active.push_back(state);
    for (Token& existing : list) {
      if (existing.hist == tok.hist) {
        if (tok.score > existing.score) existing = tok;
        return;
      }
    }
    if (static_cast<int>(list.size()) < p_.lattice_k) {
      list.push_back(tok);
      return;
    }
    auto worst = std::min_element(list.begin(), list.end(), [](const Token& a, const Token& b) {
      return a.score < b.score;
    });
    if (tok.score > worst->score) *worst = tok;
  }

  // Propagates next_ tokens through epsilon arcs; `frame` is the index of
  // the next frame to be consumed.
  void CloseEpsilon(int frame) {
    std::priority_queue<std::pair<int, int>, std::vector<std::pair<int, int>>,
                        std::greater<>> heap;
    auto enqueue = [&](int s) {
      if (!queued_[s] && !g_.EpsilonArcs(s).empty()) {
        queued_[s] = 1;
        heap.emplace(eps_pos_[s], s);
      }
    };
    for (int s : next_active_) enqueue(s);
    while (!heap.empty()) {
      const int s = heap.top().second;
      heap.pop();
      queued_[s] = 0;
      const std::vector<Token> tokens = next_[s];
      for (const Token& tok : tokens) {
        for (int ai : g_.EpsilonArcs(s)) {
          const auto& arc = g_.arcs()[ai];
          const double score = tok.score + arc.weight;
          const int hist = arc.word != kNoWord ? Extend(tok.hist, arc.word) : tok.hist;
          if (!WouldAccept(next_[arc.to], hist, score)) continue;
          int trace = tok.trace;
          if (arc.word != kNoWord) trace = AddTrace(-1, frame, arc.word, trace, tok.score);
          Insert(next_, next_active_, arc.to, Token{score, hist, trace});
          enqueue(arc.to);
        }
      }
    }
  }

  void Prune() {
    double best = kLogZero;
    size_t total = 0;
    for (int s : next_active_) {
      for (const Token& tok : next_[s]) best = std::max(best, tok.score);
      total += next_[s].size();
    }
    const bool beam_limited = std::isfinite(p_.beam);
    const bool count_limited = total > static_cast<size_t>(p_.max_active);
    if (!beam_limited && !count_limited) return;

    const double threshold = beam_limited ? best - p_.beam : kLogZero;
    double cutoff = kLogZero;
    if (count_limited) {
      std::vector<double> scores;
      scores.reserve(total);
      for (int s : next_active_) {
        for (const Token& tok : next_[s]) scores.push_back(tok.score);
      }
      std::nth_element(scores.begin(), scores.begin() + (p_.max_active - 1), scores.end(),
                       std::greater<>());
      cutoff = scores[p_.max_active - 1];
    }
    // Tokens tied at the histogram cutoff are kept in state order until the
    // budget runs out.
    size_t budget = static_cast<size_t>(p_.max_active);
    size_t above = 0;
    if (count_limited) {
      for (int s : next_active_) {
        for (const Token& tok : next_[s]) above += tok.score > cutoff ? 1 : 0;
      }
    }
    size_t tied_budget = count_limited ? budget - above : 0;
    std::vector<int> kept_states;
    for (int s : next_active_) {
      auto& list = next_[s];
      std::vector<Token> kept;
      for (const Token& tok : list) {
        if (tok.score < threshold) continue;
        if (count_limited) {
          if (tok.score < cutoff) continue;
          if (tok.score == cutoff) {
            if (tied_budget == 0) continue;
            --tied_budget;
          }
        }
        kept.push_back(tok);
      }
      list = std::move(kept);
      if (!list.empty()) kept_states.push_back(s);
    }
    next_active_ = std::move(kept_states);
  }

  Hypothesis MakeHypothesis(const Token& tok, double total, int frames) const {
    Hypothesis h;
    h.score = total;
    std::vector<int> chain;
    for (int hist = tok.hist; hist > 0; hist = histories_[hist].first) chain.push_back(hist);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      h.words.push_back(g_.words()[histories_[*it].second]);
    }
    std::vector<const TraceNode*> nodes;
    for (int i = tok.trace; i >= 0; i = trace_[i].prev) nodes.push_back(&trace_[i]);
    std::reverse(nodes.begin(), nodes.end());

    std::vector<int> word_starts;
    for (const TraceNode* n : nodes) {
      if (n->label < 0) {
        word_starts.push_back(n->frame);
        continue;
      }
      if (!h.segments.empty()) h.segments.back().end = n->frame;
      h.segments.push_back({n->label, n->frame, frames, kNoWord});
    }
    // Attach each word to the segment it starts on and close it at the last
    // non-blank segment before the next word.
    for (size_t w = 0; w < word_starts.size(); ++w) {
      const int start = word_starts[w];
      const int limit = w + 1 < word_starts.size() ? word_starts[w + 1] : frames;
      int end = start;
      for (auto& seg : h.segments) {
        if (seg.start == start && seg.word == kNoWord &&
            (!g_.blank_label || seg.label != *g_.blank_label)) {
          seg.word = static_cast<int>(w);
        }
        if (seg.start >= start && seg.start < limit &&
            (!g_.blank_label || seg.label != *g_.blank_label)) {
          end = std::max(end, seg.end);
        }
      }
      h.word_times.emplace_back(start, std::min(std::max(end, start), limit));
    }
    return h;
  }

  DecodeResult Finish(int frames) {
    struct Final {
      double total;
      Token tok;
    };
    std::map<int, Final> by_hist;
    int active_tokens = 0;
    double best_partial = kLogZero;
    for (int s : cur_active_) {
      for (const Token& tok : cur_[s]) {
        ++active_tokens;
        best_partial = std::max(best_partial, tok.score);
        if (!g_.is_final(s)) continue;
        const double total = tok.score + g_.final_weight(s);
        auto it = by_hist.find(tok.hist);
        if (it == by_hist.end() || total > it->second.total) by_hist[tok.hist] = {total, tok};
      }
    }
    if (by_hist.empty()) {
      std::ostringstream msg;
      msg << "no hypothesis: no final state reached after " << frames << " frames ("
          << active_tokens << " active tokens, best partial score " << best_partial << ")";
      ThrowData(msg.str());
    }
    std::vector<Final> finals;
    for (const auto& [_, f] : by_hist) finals.push_back(f);
    std::stable_sort(finals.begin(), finals.end(),
                     [](const Final& a, const Final& b) { return a.total > b.total; });
    if (static_cast<int>(finals.size()) > p_.lattice_k) finals.resize(p_.lattice_k);

    DecodeResult result;
    Lattice& lat = result.lattice;
    lat.AddNode(0);
    const int end_node = lat.AddNode(frames);
    lat.finals.push_back(end_node);
    for (const Final& f : finals) {
      result.nbest.push_back(MakeHypothesis(f.tok, f.total, frames));
      // Segment start scores give each arc's graph share.
      std::vector<double> starts;
      for (int i = f.tok.trace; i >= 0; i = trace_[i].prev) {
        if (trace_[i].label >= 0) starts.push_back(trace_[i].score_at_start);
      }
      std::reverse(starts.begin(), starts.end());
      const auto& segs = result.nbest.back().segments;
      int from = 0;
      for (size_t k = 0; k < segs.size(); ++k) {
        const auto& seg = segs[k];
        double am = 0, scaled = 0;
        for (int t = seg.start; t < seg.end; ++t) {
          am += acoustic_raw(t, seg.label);
          scaled += acoustic_(t, seg.label);
        }
        const double next_score = k + 1 < segs.size() ? starts[k + 1] : f.total;
        const int to = k + 1 < segs.size() ? lat.AddNode(seg.end) : end_node;
        lat.arcs.push_back({from, to, seg.label, am, next_score - starts[k] - scaled});
        from = to;
      }
    }
    result.best = result.nbest.front();
    return result;
  }

  double acoustic_raw(int t, int label) const {
    double v = acoustic_(t, label) / p_.am_weight;
    if (g_.blank_label && label == *g_.blank_label) v += std::log(p_.blank_scale);
    return v;
  }

  const DecodeGraph& g_;
  DecodeParams p_;
  Matrix acoustic_;
  std::vector<std::vector<Token>> cur_, next_;
  std::vector<int> cur_active_, next_active_;
  std::vector<char> queued_;
  std::vector<int> eps_pos_;
  std::vector<std::pair<int, int>> histories_;
  struct PairHash {
    size_t operator()(const std::pair<int, int>& k) const {
      return std::hash<uint64_t>()((static_cast<uint64_t>(static_cast<uint32_t>(k.first)) << 32) |
                                   static_cast<uint32_t>(k.second));
    }
  };
  std::unordered_map<std::pair<int, int>, int, PairHash> intern_;
  std::vector<TraceNode> trace_;
};

}  // namespace

DecodeResult BeamSearch(const DecodeGraph& g, const Matrix& log_post, const DecodeParams& p) {
  return Search(g, log_post, p).Run();
}

std::vector<int> GreedyCtcDecode(const Matrix& post, const LabelInventory& inv) {
  if (!inv.has_blank()) ThrowData("not CTC: inventory has no blank label");
  if (post.cols() != inv.size()) ThrowData("shape error: posteriorgram vs inventory");
  const int blank = *inv.blank_id();
  std::vector<int> out;
  int prev = -1;
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    Eigen::Index best = 0;
    post.row(t).maxCoeff(&best);
    const int label = static_cast<int>(best);
    if (label != prev && label != blank) out.push_back(label);
    prev = label;
  }
  return out;
}

}  // namespace ctcam
