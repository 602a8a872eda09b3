// SPDX-License-Identifier: Apache-2.0
#include "hyrr/qgen.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hyrr {
namespace {

// Exhaustive 1-NN by cosine with passage-id tiebreak, written out directly.
bool survives(const SyntheticPair& pair, const EncoderParams& enc, const Corpus& corpus) {
  const TokenizerConfig tok;
  const auto q = encode(enc, tokenize_query(pair.query, tok));
  std::string best;
  double best_score = -2;
  for (const auto& p : corpus) {
    const double s = cosine(q, encode(enc, tokenize_passage(p, tok)));
    if (s > best_score || (s == best_score && p.id < best)) {
      best_score = s;
      best = p.id;
    }
  }
  return best == pair.source_passage_id;
}

TEST(SplitSentences, Terminators) {
  EXPECT_EQ(split_sentences("A b c. D e f."), (std::vector<std::string>{"A b c", "D e f"}));
  EXPECT_EQ(split_sentences("why? yes!  no"), (std::vector<std::string>{"why", "yes", "no"}));
  EXPECT_EQ(split_sentences("v1.2 is out. ok"), (std::vector<std::string>{"v1.2 is out", "ok"}));
  EXPECT_TRUE(split_sentences("  ").empty());
}

TEST(GenerateQueries, SentenceModeExample) {
  Corpus c;
  c.add({"p", "", "A b c. D e f."});
  GenConfig cfg;
  const auto pairs = generate_queries(c, cfg);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].query.text, "A b c");
  EXPECT_EQ(pairs[1].query.text, "D e f");
  EXPECT_EQ(pairs[0].source_passage_id, "p");
  EXPECT_NE(pairs[0].query.id, pairs[1].query.id);
}

TEST(GenerateQueries, MaxPerPassageAndShortDrop) {
  Corpus c;
  c.add({"p1", "", "one two three. four five six. seven eight nine."});
  c.add({"p2", "", "too short. also tiny."});
  GenConfig cfg;
  cfg.max_per_passage = 1;
  const auto pairs = generate_queries(c, cfg);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].source_passage_id, "p1");
}

TEST(GenerateQueries, CropModeSeededAndInRange) {
  const auto corpus = test::random_corpus(50, 40, 200, 20, 40);
  GenConfig cfg;
  cfg.mode = GenMode::kCrop;
  cfg.max_per_passage = 3;
  cfg.seed = 12;
  const auto a = generate_queries(corpus, cfg);
  EXPECT_EQ(a, generate_queries(corpus, cfg));
  EXPECT_EQ(a.size(), 120u);
  for (const auto& p : a) {
    const auto n = split_words(p.query.text).size();
    EXPECT_GE(n, 4u);
    EXPECT_LE(n, 16u);
    EXPECT_NE(corpus.at(p.source_passage_id).text.find(p.query.text), std::string::npos);
  }
  cfg.seed = 13;
  EXPECT_NE(a, generate_queries(corpus, cfg));
}

TEST(GenerateQueries, SamplePassagesLimitsSources) {
  const auto corpus = test::random_corpus(51, 50, 200, 20, 40);
  GenConfig cfg;
  cfg.mode = GenMode::kCrop;
  cfg.max_per_passage = 1;
  cfg.sample_passages = 10;
  EXPECT_EQ(generate_queries(corpus, cfg).size(), 10u);
}

TEST(RoundTripFilter, SinglePassageKeepsEverything) {
  Corpus c;
  c.add({"only", "", "x y z"});
  const std::vector<SyntheticPair> pairs{{{"g1", "a b c"}, "only"}, {{"g2", "x"}, "only"}};
  EXPECT_EQ(round_trip_filter(pairs, init_encoder(TokenizerConfig{}.vocab_size, 4, 1), c), pairs);
}

TEST(RoundTripFilter, QueryMatchingAnotherPassageIsDropped) {
  Corpus c;
  c.add({"a", "", "red green blue"});
  c.add({"b", "", "cat dog cow"});
  const auto enc = init_encoder(TokenizerConfig{}.vocab_size, 16, 2);
  const std::vector<SyntheticPair> pairs{{{"g1", "cat dog cow"}, "a"}, {{"g2", "red green blue"}, "a"}};
  const auto kept = round_trip_filter(pairs, enc, c);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].query.id, "g2");
}

TEST(RoundTripFilter, MatchesExhaustiveOracleAndIsIdempotent) {
  const auto corpus = test::random_corpus(52, 30, 60, 5, 15);
  GenConfig cfg;
  cfg.mode = GenMode::kCrop;
  cfg.max_per_passage = 4;
  cfg.crop_min = 3;
  const auto pairs = generate_queries(corpus, cfg);
  const auto enc = init_encoder(TokenizerConfig{}.vocab_size, 8, 3);
  const auto kept = round_trip_filter(pairs, enc, corpus);
  std::vector<SyntheticPair> want;
  for (const auto& p : pairs) {
    if (survives(p, enc, corpus)) want.push_back(p);
  }
  EXPECT_EQ(kept, want);
  EXPECT_EQ(round_trip_filter(kept, enc, corpus), kept);
  EXPECT_EQ(round_trip_filter(pairs, enc, corpus, {}, 3), kept);
}

TEST(IterativeTrain, ZeroFineTuneEpochsKeepsDe0) {
  const auto corpus = test::random_corpus(53, 40, 300, 20, 30);
  GenConfig gen;
  gen.mode = GenMode::kCrop;
  gen.max_per_passage = 4;
  DeTrainConfig de0;
  de0.dim = 16;
  de0.epochs = 5;
  de0.batch_size = 16;
  DeTrainConfig de1 = de0;
  de1.epochs = 0;
  const auto r = iterative_train(corpus, gen, de0, de1);
  EXPECT_EQ(r.de1, r.de0);
  EXPECT_EQ(r.report.before, r.generated.size());
  EXPECT_EQ(r.report.after, r.filtered.size());
  EXPECT_LE(r.report.after, r.report.before);
  EXPECT_GT(r.report.after, 0u);
}

TEST(IterativeTrain, EmptyFilterIsAnError) {
  // "0a" encodes like "a" and wins the id tiebreak, but its one-word
  // sentences are too short to become queries.
  Corpus c;
  c.add({"0a", "", "m. n. o."});
  c.add({"a", "", "m n o"});
  GenConfig gen;
  DeTrainConfig de;
  de.dim = 4;
  de.epochs = 0;
  EXPECT_THROW(iterative_train(c, gen, de, de), Error);
}

TEST(PairsIo, RoundTripAndErrors) {
  test::TempDir dir;
  const std::vector<SyntheticPair> pairs{{{"gen-1", "hello world"}, "p1"}, {{"gen-2", "foo bar"}, "p2"}};
  write_pairs(pairs, dir / "pairs.tsv");
  EXPECT_EQ(load_pairs(dir / "pairs.tsv"), pairs);
  test::write_file(dir / "bad.tsv", "no tab\n");
  EXPECT_THROW(load_pairs(dir / "bad.tsv"), ParseError);

  Corpus c;
  c.add({"p1", "", "x"});
  EXPECT_THROW(to_train_pairs(pairs, c), Error);
}

TEST(FilterReport, Json) {
  const FilterReport r{8, 6};
  EXPECT_DOUBLE_EQ(r.kept_ratio(), 0.75);
  const auto j = r.to_json();
  EXPECT_EQ(j["before"], 8);
  EXPECT_EQ(j["after"], 6);
  EXPECT_DOUBLE_EQ(j["kept_ratio"].get<double>(), 0.75);
}

}  // namespace
}  // namespace hyrr
