// SPDX-License-Identifier: Apache-2.0
#include "hyrr/corpus.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hyrr {
namespace {

using test::TempDir;
using test::write_file;

TEST(StableHash, MatchesPublishedFnv1aValues) {
  EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(stable_hash("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, EmptyText) {
  const auto t = tokenize("", 1000, 64);
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.original_length, 0u);
}

TEST(Tokenize, CaseFoldingGivesEqualIds) {
  const auto t = tokenize("Apple apple", 1000, 64);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.tokens[0], t.tokens[1]);
}

TEST(Tokenize, TruncationKeepsOriginalLength) {
  const auto t = tokenize("a b c d", 1000, 2);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.original_length, 4u);
  EXPECT_EQ(t.tokens, tokenize("a b", 1000, 64).tokens);
}

TEST(Tokenize, IdIsHashModVocab) {
  const auto t = tokenize("Hello", 977, 8);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.tokens[0], stable_hash("hello") % 977);
}

TEST(Tokenize, PunctuationSeparatesAndVanishes) {
  EXPECT_EQ(split_words("don't stop, ever.  (really)"),
            (std::vector<std::string>{"don", "t", "stop", "ever", "really"}));
  EXPECT_EQ(split_words("ÉCOLE über—Straße"), (std::vector<std::string>{"école", "über", "straße"}));
}

TEST(Tokenize, PropertyBoundedAndInVocab) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto text = test::random_text(rng, 50, 0, 30);
    const std::size_t max_len = 1 + uniform_index(rng, 20);
    const auto vocab = static_cast<std::uint32_t>(2 + uniform_index(rng, 100));
    const auto t = tokenize(text, vocab, max_len);
    EXPECT_LE(t.size(), max_len);
    EXPECT_EQ(t.original_length, split_words(text).size());
    for (const auto id : t.tokens) EXPECT_LT(id, vocab);
    EXPECT_EQ(t.tokens, tokenize(text, vocab, max_len).tokens);
  }
}

TEST(EncodingText, JoinsTitleWithPeriod) {
  EXPECT_EQ(encoding_text({"d", "Title", "body"}), "Title. body");
  EXPECT_EQ(encoding_text({"d", "", "body"}), "body");
}

TEST(Corpus, RejectsDuplicateAndEmptyIds) {
  Corpus c;
  c.add({"d1", "", "x"});
  try {
    c.add({"d1", "", "y"});
    FAIL() << "duplicate accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
  }
  EXPECT_THROW(c.add({"", "", "y"}), Error);
  EXPECT_EQ(c.at("d1").text, "x");
  EXPECT_THROW(c.at("nope"), Error);
  EXPECT_EQ(c.find("nope"), nullptr);
}

TEST(LoadCorpus, TwoLines) {
  TempDir dir;
  write_file(dir / "c.jsonl",
             "{\"id\":\"d1\",\"title\":\"T\",\"text\":\"one\"}\n{\"id\":\"d2\",\"text\":\"two\"}\n");
  const auto c = load_corpus(dir / "c.jsonl");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].title, "T");
  EXPECT_EQ(c[1].title, "");
  EXPECT_EQ(*c.position("d2"), 1u);
}

TEST(LoadCorpus, DuplicateIdNamesIt) {
  TempDir dir;
  write_file(dir / "c.jsonl", "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d1\",\"text\":\"b\"}\n");
  try {
    load_corpus(dir / "c.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
  }
}

TEST(LoadCorpus, MalformedLineCarriesLineNumber) {
  TempDir dir;
  write_file(dir / "c.jsonl", "{\"id\":\"d1\",\"text\":\"a\"}\n{not json\n");
  try {
    load_corpus(dir / "c.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadCorpus, EmptyFile) {
  TempDir dir;
  write_file(dir / "c.jsonl", "");
  EXPECT_TRUE(load_corpus(dir / "c.jsonl").empty());
}

TEST(LoadCorpus, RoundTrip) {
  TempDir dir;
  const auto c = test::random_corpus(3, 20);
  write_corpus(c, dir / "c.jsonl");
  const auto back = load_corpus(dir / "c.jsonl");
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back[i].id, c[i].id);
    EXPECT_EQ(back[i].text, c[i].text);
  }
}

TEST(LoadQueries, Examples) {
  TempDir dir;
  write_file(dir / "q.tsv", "q1\twhat is bm25\n");
  const auto q = load_queries(dir / "q.tsv");
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(q[0].id, "q1");
  EXPECT_EQ(q[0].text, "what is bm25");

  write_file(dir / "bad.tsv", "q1\tok\nno tab here\n");
  try {
    load_queries(dir / "bad.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }

  write_file(dir / "dup.tsv", "q1\ta\nq1\tb\n");
  EXPECT_THROW(load_queries(dir / "dup.tsv"), Error);

  write_file(dir / "empty.tsv", "");
  EXPECT_TRUE(load_queries(dir / "empty.tsv").empty());
}

TEST(LoadQrels, Examples) {
  TempDir dir;
  write_file(dir / "a.txt", "q1 0 d1 1\n");
  EXPECT_EQ(load_qrels(dir / "a.txt").grade("q1", "d1"), 1);

  write_file(dir / "b.txt", "q1 0 d1 0\n");
  const auto b = load_qrels(dir / "b.txt");
  EXPECT_EQ(b.grade("q1", "d1"), 0);
  EXPECT_EQ(b.judgments("q1").size(), 1u);
  EXPECT_TRUE(b.relevant("q1").empty());

  write_file(dir / "c.txt", "q1 0 d1 1\nq1 0 d1 2\n");
  EXPECT_EQ(load_qrels(dir / "c.txt").grade("q1", "d1"), 2);

  write_file(dir / "d.txt", "q1 0 d1 x\n");
  EXPECT_THROW(load_qrels(dir / "d.txt"), ParseError);
}

TEST(QrelSet, AbsentPairIsZero) {
  QrelSet q;
  q.set("q1", "d1", 2);
  EXPECT_EQ(q.grade("q1", "zz"), 0);
  EXPECT_EQ(q.grade("q9", "d1"), 0);
  EXPECT_TRUE(q.judgments("q9").empty());
}

TEST(QrelSet, WriteLoadRoundTrip) {
  TempDir dir;
  QrelSet q;
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    q.set("q" + std::to_string(uniform_index(rng, 20)), "d" + std::to_string(uniform_index(rng, 50)),
          static_cast<int>(uniform_index(rng, 4)));
  }
  write_qrels(q, dir / "q.txt");
  EXPECT_EQ(load_qrels(dir / "q.txt"), q);
}

}  // namespace
}  // namespace hyrr
