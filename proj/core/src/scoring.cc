#include <iomanip>
#include <sstream>

#include "ctcam/decoder.h"

namespace ctcam {

EditCounts AlignWords(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const size_t n = ref.size(), m = hyp.size();
  // cost[i][j] over prefixes; backtrace prefers match/substitution, then
  // deletion, then insertion.
  std::vector<std::vector<int64_t>> cost(n + 1, std::vector<int64_t>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t diag = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cost[i][j] = std::min({diag, cost[i - 1][j] + 1, cost[i][j - 1] + 1});
    }
  }
  EditCounts counts;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

WerReport ScoreWer(const std::vector<std::vector<std::string>>& refs,
                   const std::vector<std::vector<std::string>>& hyps, OovMode mode,
                   const std::set<std::string>* vocab) {
  if (refs.size() != hyps.size()) {
    ThrowData("reference and hypothesis counts differ: " + std::to_string(refs.size()) +
              " vs " + std::to_string(hyps.size()));
  }
  if (mode == OovMode::kExcludeOov && vocab == nullptr) {
    ThrowUsage("invalid config: OOV exclusion needs a vocabulary");
  }
  WerReport report;
  int64_t tokens = 0, oov_tokens = 0, oov_utts = 0;
  for (size_t u = 0; u < refs.size(); ++u) {
    bool has_oov = false;
    if (vocab != nullptr) {
      for (const auto& w : refs[u]) {
        ++tokens;
        if (!vocab->count(w)) {
          ++oov_tokens;
          has_oov = true;
        }
      }
      oov_utts += has_oov ? 1 : 0;
    }
    if (mode == OovMode::kExcludeOov && has_oov) {
      ++report.excluded_utterances;
      continue;
    }
    const auto counts = AlignWords(refs[u], hyps[u]);
    report.substitutions += counts.substitutions;
    report.insertions += counts.insertions;
    report.deletions += counts.deletions;
    report.ref_words += static_cast<int64_t>(refs[u].size());
    ++report.utterances;
  }
  if (report.ref_words == 0) ThrowData("empty reference set");
  report.wer_percent = 100.0 *
                       static_cast<double>(report.substitutions + report.insertions +
                                           report.deletions) /
                       static_cast<double>(report.ref_words);
  if (vocab != nullptr) {
    report.oov_token_rate_percent =
        tokens > 0 ? 100.0 * static_cast<double>(oov_tokens) / static_cast<double>(tokens) : 0.0;
    report.oov_utterance_rate_percent =
        refs.empty() ? 0.0
                     : 100.0 * static_cast<double>(oov_utts) / static_cast<double>(refs.size());
  }
  return report;
}

std::string WerReport::Summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "wer=" << wer_percent << "\n"
     << "substitutions=" << substitutions << "\n"
     << "insertions=" << insertions << "\n"
     << "deletions=" << deletions << "\n"
     << "ref_words=" << ref_words << "\n"
     << "utterances=" << utterances << "\n"
     << "excluded_utterances=" << excluded_utterances << "\n"
     << "oov_token_rate=" << oov_token_rate_percent << "\n"
     << "oov_utterance_rate=" << oov_utterance_rate_percent << "\n";
  return os.str();
}

}  // namespace ctcam
