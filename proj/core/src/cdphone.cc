#include "ctcam/cdphone.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ctcam {

// --- sample collection ------------------------------------------------------

std::vector<PhoneSample> CollectSamples(std::span<const int> alignment,
                                        const FeatureMatrix& feats,
                                        std::span<const int> phone_map) {
  if (static_cast<Eigen::Index>(alignment.size()) != feats.frames()) {
    ThrowData("alignment mismatch: " + std::to_string(alignment.size()) +
              " labels for " + std::to_string(feats.frames()) + " frames");
  }
  if (feats.dim() < kPhoneVectorBands) {
    ThrowData("shape error: phone vectors need at least 40 feature dimensions");
  }
  auto phone_of = [&](int label) {
    if (phone_map.empty()) return label;
    if (label < 0 || label >= static_cast<int>(phone_map.size())) {
      ThrowData("alignment label outside the phone map");
    }
    return phone_map[label];
  };

  struct Run {
    int phone;
    int start;
    int end;  // inclusive
  };
  std::vector<Run> runs;
  int prev_phone = -1;
  for (int t = 0; t < static_cast<int>(alignment.size()); ++t) {
    const int phone = phone_of(alignment[t]);
    if (phone < 0) {
      prev_phone = -1;
      continue;
    }
    if (phone == prev_phone) {
      runs.back().end = t;
    } else {
      runs.push_back({phone, t, t});
    }
    prev_phone = phone;
  }

  std::vector<PhoneSample> samples;
  samples.reserve(runs.size());
  for (size_t i = 0; i < runs.size(); ++i) {
    const Run& r = runs[i];
    PhoneSample s;
    s.phone = r.phone;
    s.left = i > 0 ? runs[i - 1].phone : kBoundaryPhone;
    s.right = i + 1 < runs.size() ? runs[i + 1].phone : kBoundaryPhone;
    s.duration_frames = r.end - r.start + 1;
    const int center = r.start + (r.end - r.start) / 2;
    s.vec.resize(3 * kPhoneVectorBands);
    s.vec.segment(0, kPhoneVectorBands) =
        feats.data.row(r.start).head(kPhoneVectorBands).transpose();
    s.vec.segment(kPhoneVectorBands, kPhoneVectorBands) =
        feats.data.row(center).head(kPhoneVectorBands).transpose();
    s.vec.segment(2 * kPhoneVectorBands, kPhoneVectorBands) =
        feats.data.row(r.end).head(kPhoneVectorBands).transpose();
    samples.push_back(std::move(s));
  }
  return samples;
}

// --- questions --------------------------------------------------------------

namespace {

struct PhoneClass {
  const char* name;
  std::vector<std::string> members;
};

const std::vector<PhoneClass>& BroadClasses() {
  static const std::vector<PhoneClass> kClasses = {
      {"vowel", {"aa", "ae", "ah", "ao", "aw", "ax", "ay", "eh", "er", "ey", "ih",
                 "iy", "ow", "oy", "uh", "uw", "a", "e", "i", "o", "u"}},
      {"nasal", {"m", "n", "ng", "em", "en"}},
      {"plosive", {"p", "b", "t", "d", "k", "g", "ch", "jh"}},
      {"fricative", {"f", "v", "th", "dh", "s", "z", "sh", "zh", "hh", "h"}},
      {"approximant", {"l", "r", "w", "y", "el"}},
      {"silence", {"sil", "sp", "spn", "sil0"}},
  };
  return kClasses;
}

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const char* SideName(ContextSide side) { return side == ContextSide::kLeft ? "left" : "right"; }

std::string PhoneName(int phone, const LabelInventory& phones) {
  return phone == kBoundaryPhone ? "#" : phones.name(phone);
}

int PhoneId(const std::string& name, const LabelInventory& phones) {
  return name == "#" ? kBoundaryPhone : phones.id(name);
}

}  // namespace

std::vector<PhoneticQuestion> DefaultQuestions(const LabelInventory& phones) {
  std::vector<PhoneticQuestion> out;
  for (ContextSide side : {ContextSide::kLeft, ContextSide::kRight}) {
    const std::string prefix = side == ContextSide::kLeft ? "L_" : "R_";
    for (const auto& cls : BroadClasses()) {
      PhoneticQuestion q{prefix + cls.name, side, {}};
      for (int p = 0; p < phones.size(); ++p) {
        if (phones.blank_id() == p) continue;
        const std::string lower = Lower(phones.name(p));
        if (std::find(cls.members.begin(), cls.members.end(), lower) != cls.members.end()) {
          q.phones.insert(p);
        }
      }
      if (!q.phones.empty()) out.push_back(std::move(q));
    }
    for (int p = 0; p < phones.size(); ++p) {
      if (phones.blank_id() == p) continue;
      out.push_back({prefix + phones.name(p), side, {p}});
    }
    out.push_back({prefix + "#", side, {kBoundaryPhone}});
  }
  return out;
}

std::vector<PhoneticQuestion> ReadQuestions(const std::string& path,
                                            const LabelInventory& phones) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open question file " + path);
  std::vector<PhoneticQuestion> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == ';') continue;
    std::istringstream ls(line);
    PhoneticQuestion q;
    std::string side;
    if (!(ls >> q.name >> side)) ThrowData("malformed question line: " + line);
    if (side == "left") {
      q.side = ContextSide::kLeft;
    } else if (side == "right") {
      q.side = ContextSide::kRight;
    } else {
      ThrowData("question side must be left or right: " + line);
    }
    std::string phone;
    while (ls >> phone) q.phones.insert(PhoneId(phone, phones));
    if (q.phones.empty()) ThrowData("question with empty phone set: " + q.name);
    out.push_back(std::move(q));
  }
  return out;
}

// --- Gaussian statistics ----------------------------------------------------

void GaussianStats::Add(const Vector& v) {
  if (count == 0) {
    sum = Vector::Zero(v.size());
    sum_sq = Vector::Zero(v.size());
  }
  count += 1;
  sum += v;
  sum_sq += v.array().square().matrix();
}

void GaussianStats::Add(const GaussianStats& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  count += other.count;
  sum += other.sum;
  sum_sq += other.sum_sq;
}

double GaussianStats::LogLikelihood() const {
  if (count == 0) return 0.0;
  constexpr double kVarFloor = 1e-4;
  double ll = 0;
  for (Eigen::Index d = 0; d < sum.size(); ++d) {
    const double mean = sum[d] / count;
    const double var = std::max(sum_sq[d] / count - mean * mean, 0.0);
    const double floored = std::max(var, kVarFloor);
    ll += -0.5 * count * (std::log(2.0 * std::numbers::pi * floored) + var / floored);
  }
  return ll;
}

// --- tree growth ------------------------------------------------------------

SplitChoice BestSplit(std::span<const PhoneSample* const> pool,
                      const std::vector<PhoneticQuestion>& questions,
                      int min_leaf_count) {
  GaussianStats parent;
  for (const auto* s : pool) parent.Add(s->vec);
  const double parent_ll = parent.LogLikelihood();
  const int needed = std::max(1, min_leaf_count);

  SplitChoice best;
  for (int q = 0; q < static_cast<int>(questions.size()); ++q) {
    GaussianStats yes;
    for (const auto* s : pool) {
      if (questions[q].Answer(s->left, s->right)) yes.Add(s->vec);
    }
    GaussianStats no = parent;
    if (yes.count > 0) {
      no.count -= yes.count;
      no.sum -= yes.sum;
      no.sum_sq -= yes.sum_sq;
    }
    if (yes.count < needed || no.count < needed) continue;
    const double gain = yes.LogLikelihood() + no.LogLikelihood() - parent_ll;
    if (gain > best.gain) best = {q, gain};
  }
  return best;
}

void CDPhoneTree::NumberLeaves() {
  num_leaves_ = 0;
  leaf_phone_.clear();
  leaf_node_.clear();
  for (int phone = 0; phone < static_cast<int>(roots_.size()); ++phone) {
    std::vector<int> stack = {roots_[phone]};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      Node& node = nodes_[n];
      if (node.question < 0) {
        node.leaf_id = num_leaves_++;
        leaf_phone_.push_back(phone);
        leaf_node_.push_back(n);
      } else {
        stack.push_back(node.no);
        stack.push_back(node.yes);
      }
    }
  }
}

CDPhoneTree GrowTrees(std::span<const PhoneSample> samples,
                      const std::vector<PhoneticQuestion>& questions, int num_phones,
                      const TreeGrowOptions& opts) {
  if (num_phones < 1) ThrowUsage("invalid config: no phones to cluster");
  std::vector<std::vector<const PhoneSample*>> by_phone(num_phones);
  for (const auto& s : samples) {
    if (s.phone < 0 || s.phone >= num_phones) ThrowData("unknown phone in sample");
    by_phone[s.phone].push_back(&s);
  }

  CDPhoneTree tree;
  tree.questions_ = questions;
  std::vector<std::vector<const PhoneSample*>> pools;
  std::vector<SplitChoice> choices;
  auto add_leaf = [&](std::vector<const PhoneSample*> pool) {
    CDPhoneTree::Node node;
    node.sample_count = static_cast<int>(pool.size());
    tree.nodes_.push_back(node);
    choices.push_back(BestSplit(pool, questions, opts.min_leaf_count));
    pools.push_back(std::move(pool));
    return static_cast<int>(tree.nodes_.size()) - 1;
  };
  for (int p = 0; p < num_phones; ++p) {
    if (by_phone[p].empty()) ThrowData("uncovered phone: " + std::to_string(p));
    tree.roots_.push_back(add_leaf(std::move(by_phone[p])));
  }

  int leaves = num_phones;
  while (leaves < opts.max_leaves) {
    int best_node = -1;
    for (int n = 0; n < static_cast<int>(tree.nodes_.size()); ++n) {
      if (tree.nodes_[n].question >= 0 || choices[n].question < 0) continue;
      if (best_node < 0 || choices[n].gain > choices[best_node].gain) best_node = n;
    }
    if (best_node < 0 || !(choices[best_node].gain >= opts.min_gain)) break;

    const PhoneticQuestion& q = questions[choices[best_node].question];
    std::vector<const PhoneSample*> yes, no;
    for (const auto* s : pools[best_node]) {
      (q.Answer(s->left, s->right) ? yes : no).push_back(s);
    }
    const int yes_node = add_leaf(std::move(yes));
    const int no_node = add_leaf(std::move(no));
    auto& node = tree.nodes_[best_node];
    node.question = choices[best_node].question;
    node.split_gain = choices[best_node].gain;
    node.yes = yes_node;
    node.no = no_node;
    pools[best_node].clear();
    ++leaves;
  }
  tree.NumberLeaves();
  return tree;
}

int CDPhoneTree::LeafSampleCount(int leaf_id) const {
  return nodes_.at(leaf_node_.at(leaf_id)).sample_count;
}

int CDPhoneTree::MapContext(int phone, int left, int right) const {
  if (phone < 0 || phone >= num_phones()) {
    ThrowData("unknown phone: " + std::to_string(phone));
  }
  int n = roots_[phone];
  while (nodes_[n].question >= 0) {
    n = questions_[nodes_[n].question].Answer(left, right) ? nodes_[n].yes : nodes_[n].no;
  }
  return nodes_[n].leaf_id;
}

LabelInventory CDPhoneTree::MakeInventory(const LabelInventory& phones,
                                          bool with_blank) const {
  std::vector<std::string> names;
  std::vector<int> per_phone(num_phones(), 0);
  for (int leaf = 0; leaf < num_leaves_; ++leaf) {
    const int phone = leaf_phone_[leaf];
    names.push_back(phones.name(phone) + "_" + std::to_string(per_phone[phone]++));
  }
  if (with_blank) return LabelInventory::WithBlank(std::move(names), LabelKind::kCdPhone);
  return LabelInventory(std::move(names), std::nullopt, LabelKind::kCdPhone);
}

// --- tree file --------------------------------------------------------------

void CDPhoneTree::Write(const std::string& path, const LabelInventory& phones) const {
  std::ofstream os(path);
  if (!os) ThrowData("cannot write tree file " + path);
  os << "(questions\n";
  for (const auto& q : questions_) {
    os << "  (" << q.name << ' ' << SideName(q.side);
    for (int p : q.phones) os << ' ' << PhoneName(p, phones);
    os << ")\n";
  }
  os << ")\n";
  auto emit = [&](auto&& self, int n) -> void {
    const Node& node = nodes_[n];
    if (node.question < 0) {
      os << node.leaf_id;
      return;
    }
    os << '(' << questions_[node.question].name << ' ';
    self(self, node.yes);
    os << ' ';
    self(self, node.no);
    os << ')';
  };
  for (int phone = 0; phone < num_phones(); ++phone) {
    os << "(tree " << phones.name(phone) << ' ';
    emit(emit, roots_[phone]);
    os << ")\n";
  }
}

class TreeParser {
 public:
  TreeParser(std::istream& is, const LabelInventory& phones) : phones_(phones) {
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::string tok;
    for (char c : text) {
      if (c == '(' || c == ')') {
        if (!tok.empty()) tokens_.push_back(std::move(tok)), tok.clear();
        tokens_.emplace_back(1, c);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) tokens_.push_back(std::move(tok)), tok.clear();
      } else {
        tok.push_back(c);
      }
    }
    if (!tok.empty()) tokens_.push_back(std::move(tok));
  }

  CDPhoneTree Parse() {
    CDPhoneTree tree;
    Expect("(");
    Expect("questions");
    std::map<std::string, int> by_name;
    while (Peek() == "(") {
      Next();
      PhoneticQuestion q;
      q.name = Next();
      const std::string side = Next();
      if (side != "left" && side != "right") Fail("bad question side " + side);
      q.side = side == "left" ? ContextSide::kLeft : ContextSide::kRight;
      while (Peek() != ")") q.phones.insert(PhoneId(Next(), phones_));
      Next();
      if (q.phones.empty()) Fail("empty question " + q.name);
      by_name[q.name] = static_cast<int>(tree.questions_.size());
      tree.questions_.push_back(std::move(q));
    }
    Expect(")");

    std::vector<int> roots;
    std::vector<int> seen_leaves;
    while (pos_ < tokens_.size()) {
      Expect("(");
      Expect("tree");
      const int phone = phones_.id(Next());
      if (phone != static_cast<int>(roots.size())) Fail("trees must appear in phone order");
      roots.push_back(ParseNode(tree, by_name, seen_leaves));
      Expect(")");
    }
    tree.roots_ = std::move(roots);
    tree.NumberLeaves();
    // Leaf ids in the file must match dense DFS numbering.
    for (int leaf = 0; leaf < tree.num_leaves_; ++leaf) {
      if (seen_leaves.at(leaf) != leaf) Fail("leaf ids are not dense in DFS order");
    }
    return tree;
  }

 private:
  int ParseNode(CDPhoneTree& tree, const std::map<std::string, int>& by_name,
                std::vector<int>& seen_leaves) {
    CDPhoneTree::Node node;
    if (Peek() == "(") {
      Next();
      const auto it = by_name.find(Next());
      if (it == by_name.end()) Fail("undefined question");
      node.question = it->second;
      node.yes = ParseNode(tree, by_name, seen_leaves);
      node.no = ParseNode(tree, by_name, seen_leaves);
      Expect(")");
    } else {
      const std::string tok = Next();
      try {
        seen_leaves.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        Fail("expected leaf id, got " + tok);
      }
    }
    tree.nodes_.push_back(node);
    return static_cast<int>(tree.nodes_.size()) - 1;
  }

  const std::string& Peek() const {
    static const std::string kEnd;
    return pos_ < tokens_.size() ? tokens_[pos_] : kEnd;
  }
  std::string Next() {
    if (pos_ >= tokens_.size()) Fail("unexpected end of tree file");
    return tokens_[pos_++];
  }
  void Expect(const std::string& tok) {
    if (Next() != tok) Fail("expected '" + tok + "'");
  }
  [[noreturn]] void Fail(const std::string& what) const {
    ThrowData("tree file: " + what + " (token " + std::to_string(pos_) + ")");
  }

  const LabelInventory& phones_;
  std::vector<std::string> tokens_;
  size_t pos_ = 0;
};

CDPhoneTree CDPhoneTree::Read(const std::string& path, const LabelInventory& phones) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open tree file " + path);
  return TreeParser(is, phones).Parse();
}

// --- durations --------------------------------------------------------------

int DurationCutoff(std::span<const int> durations, double percentile) {
  if (durations.empty()) return 1;
  std::map<int, int64_t> histogram;
  for (int d : durations) ++histogram[d];
  const double n = static_cast<double>(durations.size());
  int64_t cumulative = 0;
  int cutoff = histogram.rbegin()->first;
  for (const auto& [d, count] : histogram) {
    cumulative += count;
    if (static_cast<double>(cumulative) / n >= percentile) {
      cutoff = d;
      break;
    }
  }
  return std::max(1, cutoff);
}

DurationStats DurationMinima(const CDPhoneTree& tree, std::span<const PhoneSample> samples,
                             double percentile) {
  std::vector<std::vector<int>> per_leaf(tree.num_leaves());
  for (const auto& s : samples) {
    per_leaf[tree.MapContext(s.phone, s.left, s.right)].push_back(s.duration_frames);
  }
  DurationStats stats;
  stats.histogram.resize(tree.num_leaves());
  stats.min_frames.resize(tree.num_leaves());
  for (int leaf = 0; leaf < tree.num_leaves(); ++leaf) {
    for (int d : per_leaf[leaf]) ++stats.histogram[leaf][d];
    stats.min_frames[leaf] = DurationCutoff(per_leaf[leaf], percentile);
  }
  return stats;
}

void DurationStats::Write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) ThrowData("cannot write duration file " + path);
  for (size_t i = 0; i < min_frames.size(); ++i) os << i << '\t' << min_frames[i] << '\n';
}

DurationStats DurationStats::Read(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open duration file " + path);
  DurationStats stats;
  int id = 0, frames = 0;
  while (is >> id >> frames) {
    if (id < 0 || frames < 1) ThrowData("bad duration entry in " + path);
    if (id >= static_cast<int>(stats.min_frames.size())) {
      stats.min_frames.resize(id + 1, 1);
      stats.histogram.resize(id + 1);
    }
    stats.min_frames[id] = frames;
  }
  if (!is.eof()) ThrowData("malformed duration file " + path);
  return stats;
}

}  // namespace ctcam
