// ctcam command line: feature extraction, alignment, phone clustering,
// training, decoding and scoring.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctcam/cdphone.h"
#include "ctcam/criteria.h"
#include "ctcam/decoder.h"
#include "ctcam/frontend.h"
#include "ctcam/graphs.h"
#include "ctcam/harness.h"
#include "ctcam/nnet.h"
#include "ctcam/toy_corpus.h"

namespace fs = std::filesystem;
using namespace ctcam;

namespace {

bool HasSuffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

FeatureMatrix LoadFeatures(const std::string& path, const LogMelOptions& mel) {
  if (HasSuffix(path, ".wav")) return ComputeLogMel(ReadWav(path), mel);
  return ReadFeatureFile(path);
}

// "id TAB tokens..." tables (alignments, hypotheses, references). With
// `column` < 0 the last column is used.
std::map<std::string, std::vector<std::string>> ReadTable(const std::string& path, int column) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open " + path);
  std::map<std::string, std::vector<std::string>> table;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (line.back() == '\t') fields.emplace_back();
    const int c = column < 0 ? static_cast<int>(fields.size()) - 1 : column;
    table[fields[0]] = c >= 1 && c < static_cast<int>(fields.size()) ? SplitWords(fields[c])
                                                                     : std::vector<std::string>{};
  }
  return table;
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string f; std::getline(ss, f, ',');) {
    if (!f.empty()) out.push_back(std::stoi(f));
  }
  return out;
}

std::vector<double> ParseDoubleList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string f; std::getline(ss, f, ',');) {
    if (!f.empty()) out.push_back(std::stod(f));
  }
  return out;
}

std::ostream& OutputStream(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) ThrowData("cannot write " + path);
  return *holder;
}

PriorVector ReadPriors(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open priors " + path);
  std::vector<double> values;
  for (double v; is >> v;) values.push_back(v);
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Shared options for building a decode graph around a model.
struct GraphOptions {
  std::string lexicon, phones, lm, tree, durations;
  bool no_blank = false;

  void Register(CLI::App* app) {
    app->add_option("--lexicon", lexicon, "word TAB phones (default: every label is a word)");
    app->add_option("--phones", phones, "CI phone inventory for --lexicon/--tree");
    app->add_option("--lm", lm, "ARPA unigram/bigram LM (default: uniform)");
    app->add_option("--tree", tree, "CD-phone tree file");
    app->add_option("--durations", durations, "per-unit minimum durations");
    app->add_flag("--no-blank", no_blank, "build the network without blank states");
  }
};

struct LoadedGraph {
  LabelInventory phones;
  Lexicon lex;
  std::optional<CDPhoneTree> tree;
  std::optional<DurationStats> durations;
  std::set<std::string> vocab;
  DecodeGraph graph;
};

std::unique_ptr<LoadedGraph> LoadGraph(const GraphOptions& o, const LabelInventory& acoustic) {
  auto g = std::make_unique<LoadedGraph>();
  g->phones = o.phones.empty() ? acoustic : LabelInventory::ReadFile(o.phones, LabelKind::kCiPhone);
  if (!o.tree.empty()) g->tree = CDPhoneTree::Read(o.tree, g->phones);
  if (!o.durations.empty()) g->durations = DurationStats::Read(o.durations);
  if (o.lexicon.empty()) {
    for (int l = 0; l < acoustic.size(); ++l) {
      if (acoustic.blank_id() != l) g->lex.Add(acoustic.name(l), {l});
    }
  } else {
    g->lex = Lexicon::ReadFile(o.lexicon, g->phones);
  }
  NgramLm lm;
  if (o.lm.empty()) {
    std::vector<std::string> words;
    for (const auto& [w, _] : g->lex.entries()) words.push_back(w);
    lm = NgramLm::Uniform(words);
  } else {
    lm = NgramLm::ReadArpa(o.lm);
  }
  for (const auto& w : lm.Vocabulary()) g->vocab.insert(w);
  DecodeGraphOptions opts;
  opts.allow_blank = acoustic.has_blank() && !o.no_blank;
  opts.min_dur = g->durations ? &*g->durations : nullptr;
  g->graph = BuildDecodeGraph(g->lex, lm, acoustic, g->tree ? &*g->tree : nullptr, opts);
  return g;
}

// --- subcommands ------------------------------------------------------------

struct MelFlags {
  LogMelOptions opts;
  void Register(CLI::App* app) {
    app->add_option("--n-mels", opts.n_mels, "mel bands")->capture_default_str();
    app->add_option("--window-ms", opts.window_ms, "analysis window")->capture_default_str();
    app->add_option("--shift-ms", opts.shift_ms, "frame shift")->capture_default_str();
  }
};

struct MakeToyCmd {
  std::string out_dir;
  ToyCorpusOptions opts;

  void Register(CLI::App* app, uint64_t* seed) {
    app->add_option("--out-dir", out_dir, "output directory")->required();
    app->add_option("--utterances", opts.num_utterances)->capture_default_str();
    app->add_option("--labels", opts.num_labels)->capture_default_str();
    app->add_option("--dim", opts.dim)->capture_default_str();
    app->add_option("--noise", opts.noise_stddev)->capture_default_str();
    app->add_option("--min-duration", opts.min_duration)->capture_default_str();
    app->add_option("--max-duration", opts.max_duration)->capture_default_str();
    app->add_flag("!--flat", opts.hann_envelope, "constant-gain label runs");
    app->callback([this, seed] {
      opts.seed = *seed;
      Run();
    });
  }

  void Run() {
    const auto corpus = MakeToyCorpus(opts);
    fs::create_directories(fs::path(out_dir) / "feats");
    std::vector<Utterance> manifest;
    std::ofstream align((fs::path(out_dir) / "alignments.tsv").string());
    for (const auto& u : corpus.utterances) {
      const auto path = (fs::path(out_dir) / "feats" / (u.id + ".feat")).string();
      WriteFeatureFile(path, u.feats);
      Utterance m{u.id, path, {}};
      for (int l : u.labels) m.transcript.push_back(corpus.inventory.name(l));
      manifest.push_back(std::move(m));
      align << u.id << '\t';
      for (size_t t = 0; t < u.alignment.size(); ++t) {
        align << (t ? " " : "") << corpus.inventory.name(u.alignment[t]);
      }
      align << '\n';
    }
    WriteManifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);
    corpus.inventory.WriteFile((fs::path(out_dir) / "labels.txt").string());
    std::ofstream lex((fs::path(out_dir) / "lexicon.txt").string());
    for (int l = 0; l < corpus.inventory.size(); ++l) {
      if (corpus.inventory.blank_id() != l) {
        lex << corpus.inventory.name(l) << '\t' << corpus.inventory.name(l) << '\n';
      }
    }
    std::cout << "wrote " << manifest.size() << " utterances to " << out_dir << "\n";
  }
};

struct FeaturizeCmd {
  std::string manifest, out_dir, out_manifest;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--manifest", manifest, "audio manifest")->required();
    app->add_option("--out-dir", out_dir, "feature directory")->required();
    app->add_option("--out-manifest", out_manifest, "manifest pointing at features")->required();
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    fs::create_directories(out_dir);
    auto utts = ReadManifest(manifest);
    for (auto& u : utts) {
      const auto feats = ComputeLogMel(ReadWav(u.path), mel.opts);
      u.path = (fs::path(out_dir) / (u.id + ".feat")).string();
      WriteFeatureFile(u.path, feats);
    }
    WriteManifest(out_manifest, utts);
    std::cout << "featurized " << utts.size() << " utterances\n";
  }
};

struct AlignCmd {
  std::string model, manifest, lexicon, phones, tree, priors, out, edge_silence;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--model", model, "checkpoint")->required();
    app->add_option("--manifest", manifest)->required();
    app->add_option("--lexicon", lexicon, "expand transcripts through a lexicon");
    app->add_option("--phones", phones, "CI phone inventory for --lexicon/--tree");
    app->add_option("--tree", tree, "map phones to CD units");
    app->add_option("--priors", priors, "divide posteriors by these label priors");
    app->add_option("--out", out, "alignment table (default stdout)");
    app->add_option("--edge-silence", edge_silence, "label added at both ends of each transcript");
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto ckpt = LoadCheckpoint(model);
    const auto& inv = ckpt.params.inventory;
    const auto phone_inv = phones.empty() ? inv : LabelInventory::ReadFile(phones, LabelKind::kCiPhone);
    std::optional<Lexicon> lex;
    if (!lexicon.empty()) lex = Lexicon::ReadFile(lexicon, phone_inv);
    std::optional<CDPhoneTree> cd;
    if (!tree.empty()) cd = CDPhoneTree::Read(tree, phone_inv);
    std::optional<PriorVector> prior;
    if (!priors.empty()) prior = ReadPriors(priors);

    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = OutputStream(out, holder);
    for (const auto& u : ReadManifest(manifest)) {
      const auto raw = LoadFeatures(u.path, mel.opts);
      auto labels = TranscriptLabels(u.transcript, inv, lex ? &*lex : nullptr, cd ? &*cd : nullptr);
      if (!edge_silence.empty()) labels = WithEdgeSilence(std::move(labels), inv.id(edge_silence));
      const auto post = RunModel(ckpt, raw);
      Matrix scores = post.data.array().log().matrix();
      if (prior) scores.rowwise() -= prior->array().log().matrix().transpose();
      const auto graph = inv.has_blank() ? BuildCtcGraph(labels, inv) : BuildForcedGraph(labels);
      const auto best = ViterbiAlignLog(graph, scores);
      os << u.id << '\t';
      for (Eigen::Index t = 0; t < raw.frames(); ++t) {
        const auto net = std::min<Eigen::Index>(t / ckpt.stack.skip, post.frames() - 1);
        os << (t ? " " : "") << inv.name(best.labels[net]);
      }
      os << '\n';
    }
  }
};

struct ClusterCmd {
  std::string manifest, alignments, phones, questions, out_tree, out_inventory, out_durations;
  TreeGrowOptions grow;
  double percentile = 0.10;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--manifest", manifest)->required();
    app->add_option("--alignments", alignments, "per-frame CI phone table")->required();
    app->add_option("--phones", phones, "CI phone inventory")->required();
    app->add_option("--questions", questions, "question file (default: built-in classes)");
    app->add_option("--min-gain", grow.min_gain)->capture_default_str();
    app->add_option("--max-leaves", grow.max_leaves);
    app->add_option("--min-leaf-count", grow.min_leaf_count)->capture_default_str();
    app->add_option("--duration-percentile", percentile)->capture_default_str();
    app->add_option("--out-tree", out_tree)->required();
    app->add_option("--out-inventory", out_inventory, "CD-phone inventory with blank");
    app->add_option("--out-durations", out_durations, "per-CD-phone minimum durations");
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto phone_inv = LabelInventory::ReadFile(phones, LabelKind::kCiPhone);
    const auto table = ReadTable(alignments, 1);
    // Blank/silence frames are not phones: they drop out of context.
    std::vector<int> phone_map(phone_inv.size());
    for (int l = 0; l < phone_inv.size(); ++l) phone_map[l] = phone_inv.blank_id() == l ? -1 : l;
    std::vector<PhoneSample> samples;
    for (const auto& u : ReadManifest(manifest)) {
      const auto it = table.find(u.id);
      if (it == table.end()) ThrowData("no alignment for " + u.id);
      const auto ids = phone_inv.Encode(it->second);
      const auto s = CollectSamples(ids, LoadFeatures(u.path, mel.opts), phone_map);
      samples.insert(samples.end(), s.begin(), s.end());
    }
    const auto qs = questions.empty() ? DefaultQuestions(phone_inv) : ReadQuestions(questions, phone_inv);
    const auto tree = GrowTrees(samples, qs, phone_inv.size(), grow);
    tree.Write(out_tree, phone_inv);
    if (!out_inventory.empty()) tree.MakeInventory(phone_inv, true).WriteFile(out_inventory);
    if (!out_durations.empty()) DurationMinima(tree, samples, percentile).Write(out_durations);
    std::cout << "samples=" << samples.size() << "\nleaves=" << tree.num_leaves() << "\n";
  }
};

struct TrainCmd {
  std::string manifest, inventory, label_kind = "ci_phone", word_preset, criterion = "ctc",
      arch = "ctc-uni", layers, init, out, metrics, alignments, lexicon, phones, tree, lm,
      edge_silence;
  int min_exemplars = 0, projection = 0, stack = 0, skip = 0;
  bool bidirectional = false;
  TrainConfig cfg;
  MelFlags mel;

  void Register(CLI::App* app, uint64_t* seed) {
    app->add_option("--manifest", manifest)->required();
    app->add_option("--inventory", inventory, "label inventory file");
    app->add_option("--label-kind", label_kind, "ci_phone | cd_phone | cd_state | word")->capture_default_str();
    app->add_option("--word-preset", word_preset, "build a word inventory: 7k-style | 25k-style");
    app->add_option("--min-exemplars", min_exemplars, "build a word inventory with this threshold");
    app->add_option("--criterion", criterion, "ce | ctc | realign | smbr")->capture_default_str();
    app->add_option("--arch", arch, "ctc-uni | ctc-bi | conventional | conventional-bi")
        ->capture_default_str();
    app->add_option("--layers", layers, "custom cells per layer, e.g. 32 or 64,64");
    app->add_flag("--bidirectional", bidirectional, "custom layers run both ways");
    app->add_option("--projection", projection, "custom layers' recurrent projection size");
    app->add_option("--stack", stack, "frames per super-frame (default from --arch)");
    app->add_option("--skip", skip, "frames advanced per step (default from --arch)");
    app->add_option("--lr", cfg.learning_rate)->capture_default_str();
    app->add_option("--momentum", cfg.momentum)->capture_default_str();
    app->add_option("--batch", cfg.batch_size)->capture_default_str();
    app->add_option("--steps", cfg.steps)->capture_default_str();
    app->add_option("--target-delay", cfg.target_delay, "CE target delay in network frames");
    app->add_option("--acoustic-scale", cfg.acoustic_scale, "sMBR κ")->capture_default_str();
    app->add_option("--blank-scale", cfg.blank_scale, "sMBR lattice blank scale");
    app->add_option("--plateau-window", cfg.plateau_window)->capture_default_str();
    app->add_option("--max-grad-norm", cfg.max_grad_norm);
    app->add_option("--checkpoint-every", cfg.checkpoint_every);
    app->add_option("--init", init, "continue from this checkpoint");
    app->add_option("--out", out, "output checkpoint")->required();
    app->add_option("--metrics", metrics, "metrics log (default stdout)");
    app->add_option("--alignments", alignments, "per-frame targets for ce");
    app->add_option("--lexicon", lexicon, "expand transcripts into phones");
    app->add_option("--phones", phones, "CI phone inventory for --lexicon/--tree");
    app->add_option("--tree", tree, "map phones to CD units");
    app->add_option("--lm", lm, "sMBR decode-graph LM");
    app->add_option("--edge-silence", edge_silence, "label added at both ends of each transcript");
    mel.Register(app);
    app->callback([this, seed] {
      cfg.seed = *seed;
      Run();
    });
  }

  void Run() {
    cfg.criterion = ParseCriterion(criterion);
    std::optional<Checkpoint> init_ckpt;
    if (!init.empty()) init_ckpt = LoadCheckpoint(init);

    const auto utts = ReadManifest(manifest);
    if (init_ckpt) {
      cfg.inventory = init_ckpt->params.inventory;
    } else if (!inventory.empty()) {
      cfg.inventory = LabelInventory::ReadFile(inventory, ParseLabelKind(label_kind));
    } else if (!word_preset.empty() || min_exemplars > 0) {
      std::vector<std::vector<std::string>> transcripts;
      for (const auto& u : utts) transcripts.push_back(u.transcript);
      cfg.inventory = BuildWordInventory(
          transcripts, min_exemplars > 0 ? min_exemplars : WordInventoryPreset(word_preset));
    } else {
      ThrowUsage("train needs --inventory, --word-preset, --min-exemplars or --init");
    }
    const auto& inv = cfg.inventory;

    cfg.arch = arch;
    if (!layers.empty()) {
      for (int cells : ParseIntList(layers)) {
        LayerSpec spec{cells, bidirectional ? Direction::kBidirectional : Direction::kForward,
                       std::nullopt};
        if (projection > 0) spec.projection = projection;
        cfg.layers.push_back(spec);
      }
    }
    cfg.stack = layers.empty() ? StackPreset(arch) : StackConfig{8, 3, EdgePadding::kReplicateLast};
    if (stack > 0) cfg.stack.stack = stack;
    if (skip > 0) cfg.stack.skip = skip;

    const auto phone_inv = phones.empty() ? inv : LabelInventory::ReadFile(phones, LabelKind::kCiPhone);
    std::optional<Lexicon> lex;
    if (!lexicon.empty()) lex = Lexicon::ReadFile(lexicon, phone_inv);
    std::optional<CDPhoneTree> cd;
    if (!tree.empty()) cd = CDPhoneTree::Read(tree, phone_inv);
    std::map<std::string, std::vector<std::string>> align_table;
    if (!alignments.empty()) align_table = ReadTable(alignments, 1);

    std::vector<TrainUtterance> data;
    for (const auto& u : utts) {
      TrainUtterance t;
      t.id = u.id;
      t.feats = LoadFeatures(u.path, mel.opts);
      t.labels = TranscriptLabels(u.transcript, inv, lex ? &*lex : nullptr, cd ? &*cd : nullptr);
      if (!edge_silence.empty()) t.labels = WithEdgeSilence(std::move(t.labels), inv.id(edge_silence));
      if (cfg.criterion == Criterion::kCe) {
        const auto it = align_table.find(u.id);
        if (it == align_table.end()) ThrowData("ce training needs an alignment for " + u.id);
        t.alignment = inv.Encode(it->second);
      }
      data.push_back(std::move(t));
    }

    std::unique_ptr<LoadedGraph> graph;
    if (cfg.criterion == Criterion::kSmbr) {
      GraphOptions go;
      go.lexicon = lexicon;
      go.phones = phones;
      go.lm = lm;
      go.tree = tree;
      graph = LoadGraph(go, inv);
    }
    cfg.checkpoint_path = out;  // divergence also leaves the last good model here
    std::unique_ptr<std::ofstream> holder;
    std::ostream& log = OutputStream(metrics, holder);
    auto result = Train(cfg, data, init_ckpt, graph ? &graph->graph : nullptr, &log);
    RoundToStoragePrecision(result.model.params);
    SaveCheckpoint(out, result.model);
    std::cerr << "saved " << out << " after " << result.model.step << " steps\n";
  }
};

struct DecodeCmd {
  std::string model, manifest, out, lattice_dir, priors;
  GraphOptions graph_opts;
  DecodeParams params;
  double am_weight = 0.0;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--model", model)->required();
    app->add_option("--manifest", manifest)->required();
    graph_opts.Register(app);
    app->add_option("--beam", params.beam, "log-score beam (default unbounded)");
    app->add_option("--max-active", params.max_active, "token budget per frame");
    app->add_option("--am-weight", am_weight, "default 1.0 (CI) / 2.1 (CD)");
    app->add_option("--blank-scale", params.blank_scale)->capture_default_str();
    app->add_option("--lattice-k", params.lattice_k)->capture_default_str();
    app->add_option("--priors", priors, "divide posteriors by label priors (hybrid models)");
    app->add_option("--out", out, "hypotheses: id TAB words TAB score (default stdout)");
    app->add_option("--lattice-dir", lattice_dir, "write one lattice per utterance");
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  int failures = 0;

  void Run() {
    const auto ckpt = LoadCheckpoint(model);
    const auto& inv = ckpt.params.inventory;
    params.am_weight = am_weight > 0 ? am_weight : DefaultAmWeight(inv.kind());
    const auto g = LoadGraph(graph_opts, inv);
    std::optional<PriorVector> prior;
    if (!priors.empty()) prior = ReadPriors(priors);
    if (!lattice_dir.empty()) fs::create_directories(lattice_dir);

    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = OutputStream(out, holder);
    os << std::setprecision(10);
    for (const auto& u : ReadManifest(manifest)) {
      try {
        const auto post = RunModel(ckpt, LoadFeatures(u.path, mel.opts));
        Matrix log_post = post.data.array().log().matrix();
        if (prior) log_post.rowwise() -= prior->array().log().matrix().transpose();
        const auto result = BeamSearch(g->graph, log_post, params);
        os << u.id << '\t' << JoinWords(result.best.words) << '\t' << result.best.score << '\n';
        if (!lattice_dir.empty()) result.lattice.Write((fs::path(lattice_dir) / (u.id + ".lat")).string());
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kUsage) throw;
        std::cerr << u.id << ": " << e.what() << "\n";
        ++failures;
      }
    }
  }
};

struct GreedyCmd {
  std::string model, manifest, out;
  double blank_scale = 1.0;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--model", model)->required();
    app->add_option("--manifest", manifest)->required();
    app->add_option("--blank-scale", blank_scale)->capture_default_str();
    app->add_option("--out", out, "id TAB labels (default stdout)");
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto ckpt = LoadCheckpoint(model);
    const auto& inv = ckpt.params.inventory;
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = OutputStream(out, holder);
    for (const auto& u : ReadManifest(manifest)) {
      const auto post = RunModel(ckpt, LoadFeatures(u.path, mel.opts));
      std::vector<std::string> names;
      for (int l : ScaledGreedyDecode(post, inv, blank_scale)) names.push_back(inv.name(l));
      os << u.id << '\t' << JoinWords(names) << '\n';
    }
  }
};

std::set<std::string> ReadVocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) ThrowData("cannot open vocabulary " + path);
  std::set<std::string> vocab;
  for (std::string w; is >> w;) {
    if (w != kBlankName && w != "⟨b⟩") vocab.insert(w);
  }
  return vocab;
}

struct ScoreCmd {
  std::string ref, hyp, vocab_path;
  bool exclude_oov = false;

  void Register(CLI::App* app) {
    app->add_option("--ref", ref, "manifest or id TAB words")->required();
    app->add_option("--hyp", hyp, "id TAB words [TAB score]")->required();
    app->add_option("--vocab", vocab_path, "word list or inventory file");
    app->add_flag("--exclude-oov", exclude_oov, "drop utterances with OOV reference words");
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto refs = ReadTable(ref, -1);
    const auto hyps = ReadTable(hyp, 1);
    std::optional<std::set<std::string>> vocab;
    if (!vocab_path.empty()) vocab = ReadVocab(vocab_path);
    std::vector<std::vector<std::string>> r, h;
    int missing = 0;
    for (const auto& [id, words] : refs) {
      r.push_back(words);
      const auto it = hyps.find(id);
      if (it == hyps.end()) ++missing;
      h.push_back(it == hyps.end() ? std::vector<std::string>{} : it->second);
    }
    const auto report = ScoreWer(r, h, exclude_oov ? OovMode::kExcludeOov : OovMode::kAll,
                                 vocab ? &*vocab : nullptr);
    std::cout << std::fixed << std::setprecision(2) << "WER " << report.wer_percent << "% ("
              << report.substitutions << " sub, " << report.insertions << " ins, "
              << report.deletions << " del) over " << report.ref_words << " words in "
              << report.utterances << " utterances";
    if (missing > 0) std::cout << "; " << missing << " without hypothesis";
    std::cout << "\n" << report.Summary();
  }
};

struct DumpCmd {
  std::string model, features, out;
  double threshold = 0.05;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--model", model)->required();
    app->add_option("--features", features, "feature file or .wav")->required();
    app->add_option("--threshold", threshold)->capture_default_str();
    app->add_option("--out", out, "TSV (default stdout)");
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto ckpt = LoadCheckpoint(model);
    const auto post = RunModel(ckpt, LoadFeatures(features, mel.opts));
    std::unique_ptr<std::ofstream> holder;
    DumpPosteriorgram(post, ckpt.params.inventory, OutputStream(out, holder), threshold);
  }
};

struct SweepCmd {
  std::string model, manifest, grid = "0.25,0.5,1,2,4", vocab_path;
  bool beam_search = false, exclude_oov = false;
  GraphOptions graph_opts;
  DecodeParams params;
  MelFlags mel;

  void Register(CLI::App* app) {
    app->add_option("--model", model)->required();
    app->add_option("--manifest", manifest)->required();
    app->add_option("--grid", grid, "comma-separated blank scales")->capture_default_str();
    app->add_flag("--beam-search", beam_search, "decode with the graph instead of greedily");
    graph_opts.Register(app);
    app->add_option("--beam", params.beam);
    app->add_option("--vocab", vocab_path, "vocabulary for OOV handling");
    app->add_flag("--exclude-oov", exclude_oov);
    mel.Register(app);
    app->callback([this] { Run(); });
  }

  void Run() {
    const auto ckpt = LoadCheckpoint(model);
    const auto& inv = ckpt.params.inventory;
    std::vector<EvalUtterance> data;
    for (const auto& u : ReadManifest(manifest)) {
      data.push_back({u.id, LoadFeatures(u.path, mel.opts), u.transcript});
    }
    std::unique_ptr<LoadedGraph> g;
    EvalConfig cfg;
    cfg.greedy = !beam_search;
    params.am_weight = DefaultAmWeight(inv.kind());
    cfg.decode = params;
    if (beam_search) {
      g = LoadGraph(graph_opts, inv);
      cfg.graph = &g->graph;
    }
    std::optional<std::set<std::string>> vocab;
    if (!vocab_path.empty()) vocab = ReadVocab(vocab_path);
    cfg.vocab = vocab ? &*vocab : nullptr;
    cfg.oov = exclude_oov ? OovMode::kExcludeOov : OovMode::kAll;
    const auto points = SweepBlankScale(ckpt, data, cfg, ParseDoubleList(grid));
    std::cout << "blank_scale\twer\n" << std::fixed << std::setprecision(2);
    for (const auto& p : points) std::cout << p.blank_scale << '\t' << p.report.wer_percent << '\n';
  }
};

// Splices "--config FILE" entries in as "--key=value" right after the
// subcommand, so flags given on the command line win.
std::vector<std::string> ExpandConfig(CLI::App& app, std::vector<std::string> args) {
  std::string config;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config.empty() || args.empty()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[0]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::vector<std::string> injected;
  for (const auto& [key, value] : ReadKeyValueFile(config)) {
    // Keys meant for other subcommands are ignored.
    if (sub->get_option_no_throw("--" + key) != nullptr || key == "seed") {
      injected.push_back("--" + key + "=" + value);
    }
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctcam: CTC acoustic modelling toolkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  uint64_t seed = 1;
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--config", "flat key=value file; flags override it");

  MakeToyCmd make_toy;
  FeaturizeCmd featurize;
  AlignCmd align;
  ClusterCmd cluster;
  TrainCmd train;
  DecodeCmd decode;
  GreedyCmd greedy;
  ScoreCmd score;
  DumpCmd dump;
  SweepCmd sweep;
  auto add = [&app](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };
  make_toy.Register(add("make-toy", "write a synthetic corpus"), &seed);
  featurize.Register(add("featurize", "log-mel features for an audio manifest"));
  align.Register(add("align", "forced alignment with a trained model"));
  cluster.Register(add("cluster-phones", "grow CD-phone trees and duration minima"));
  train.Register(add("train", "train a model"), &seed);
  decode.Register(add("decode", "beam search over a lexicon/LM network"));
  greedy.Register(add("greedy-decode", "per-frame argmax decoding"));
  score.Register(add("score", "word error rate"));
  dump.Register(add("dump-posteriors", "posteriorgram TSV"));
  sweep.Register(add("sweep-blank-scale", "error rate over a blank-scale grid"));

  try {
    auto args = ExpandConfig(app, std::vector<std::string>(argv + 1, argv + argc));
    std::vector<char*> ptrs = {argv[0]};
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  return decode.failures > 0 ? static_cast<int>(ErrorKind::kData) : 0;
}
