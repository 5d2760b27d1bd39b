#include <gtest/gtest.h>

#include <random>

#include "ctcam/decoder.h"
#include "oracles.h"

namespace ctcam {
namespace {

using Words = std::vector<std::string>;

Words RandomWords(std::mt19937_64& rng, int max_len) {
  static const char* kVocab[] = {"a", "b", "c", "d"};
  Words out(std::uniform_int_distribution<int>(0, max_len)(rng));
  for (auto& w : out) w = kVocab[std::uniform_int_distribution<int>(0, 3)(rng)];
  return out;
}

TEST(AlignWords, MatchesEditDistanceOracle) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto ref = RandomWords(rng, 8);
    const auto hyp = RandomWords(rng, 8);
    const auto c = AlignWords(ref, hyp);
    EXPECT_EQ(c.errors(), oracle::EditDistance(ref, hyp));
    EXPECT_EQ(static_cast<int64_t>(ref.size()) - c.deletions + c.insertions,
              static_cast<int64_t>(hyp.size()));
    EXPECT_LE(c.substitutions + c.deletions, static_cast<int64_t>(ref.size()));
  }
}

TEST(AlignWords, Breakdown) {
  const auto c = AlignWords(Words{"a", "b", "c"}, Words{"a", "x", "c", "d"});
  EXPECT_EQ(c.substitutions, 1);
  EXPECT_EQ(c.insertions, 1);
  EXPECT_EQ(c.deletions, 0);
  const auto d = AlignWords(Words{"a", "b", "c"}, Words{});
  EXPECT_EQ(d.deletions, 3);
}

TEST(ScoreWer, OneSubstitutionInThreeWords) {
  const auto r = ScoreWer({{"museums", "in", "chicago"}}, {{"museum", "in", "chicago"}}, OovMode::kAll);
  EXPECT_NEAR(r.wer_percent, 100.0 / 3, 1e-12);
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.ref_words, 3);
}

TEST(ScoreWer, PoolsErrorsOverUtterances) {
  const std::vector<Words> refs = {{"a", "b"}, {"c", "d", "e"}};
  const std::vector<Words> hyps = {{"a"}, {"c", "x", "e", "f"}};
  const auto r = ScoreWer(refs, hyps, OovMode::kAll);
  EXPECT_EQ(r.deletions, 1);
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.insertions, 1);
  EXPECT_NEAR(r.wer_percent, 60.0, 1e-12);
}

TEST(ScoreWer, ExcludeOovRemovesExactlyTheOovUtterances) {
  const std::set<std::string> vocab = {"a", "b", "c"};
  const std::vector<Words> refs = {{"a", "b"}, {"a", "zz"}, {"c"}, {"yy"}};
  const std::vector<Words> hyps = {{"a", "c"}, {"a", "b"}, {"c"}, {"a"}};
  const auto all = ScoreWer(refs, hyps, OovMode::kAll, &vocab);
  EXPECT_EQ(all.utterances, 4);
  EXPECT_EQ(all.ref_words, 6);
  EXPECT_EQ(all.substitutions, 3);
  EXPECT_NEAR(all.oov_token_rate_percent, 100.0 * 2 / 6, 1e-12);
  EXPECT_NEAR(all.oov_utterance_rate_percent, 50.0, 1e-12);

  const auto ex = ScoreWer(refs, hyps, OovMode::kExcludeOov, &vocab);
  const auto kept = ScoreWer({refs[0], refs[2]}, {hyps[0], hyps[2]}, OovMode::kAll);
  EXPECT_EQ(ex.utterances, 2);
  EXPECT_EQ(ex.excluded_utterances, 2);
  EXPECT_EQ(ex.ref_words, kept.ref_words);
  EXPECT_EQ(ex.wer_percent, kept.wer_percent);
  EXPECT_NEAR(ex.oov_token_rate_percent, all.oov_token_rate_percent, 0);
}

TEST(ScoreWer, Errors) {
  try {
    ScoreWer({{"a"}}, {}, OovMode::kAll);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
  try {
    ScoreWer({{"a"}}, {{"a"}}, OovMode::kExcludeOov);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
  }
  EXPECT_THROW(ScoreWer({{}}, {{"a"}}, OovMode::kAll), Error);
}

TEST(WerReport, SummaryLines) {
  const auto r = ScoreWer({{"a", "b"}}, {{"a"}}, OovMode::kAll);
  const auto s = r.Summary();
  EXPECT_NE(s.find("wer=50.00\n"), std::string::npos);
  EXPECT_NE(s.find("deletions=1\n"), std::string::npos);
  EXPECT_NE(s.find("utterances=1\n"), std::string::npos);
}

}  // namespace
}  // namespace ctcam
