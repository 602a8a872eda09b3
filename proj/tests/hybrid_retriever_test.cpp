// SPDX-License-Identifier: Apache-2.0
#include "hyrr/hybrid_retriever.hpp"

#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hyrr {
namespace {

HybridIndex make_index(const Corpus& corpus, EncoderParams encoder, double lambda) {
  auto bm25 = std::make_shared<const Bm25Index>(Bm25Index::build(corpus));
  auto enc = std::make_shared<const EncoderParams>(std::move(encoder));
  auto dense = std::make_shared<const DenseIndex>(DenseIndex::build(*enc, corpus));
  return HybridIndex(bm25, enc, dense, lambda);
}

// Inner product of explicitly concatenated [q_bm25, lambda * q_de/|q_de|]
// and [c_bm25, c_de/|c_de|] vectors. Dense coordinates live past the
// vocabulary.
double materialized_score(const Corpus& corpus, const EncoderParams& enc, const Query& q, const Passage& p,
                          double lambda) {
  const TokenizerConfig tok;
  std::map<std::uint64_t, double> qv, pv;
  const auto q_sparse = encode_query(q, tok);
  for (const auto& [t, w] : q_sparse.entries()) qv[t] = w;
  const auto p_sparse = encode_passage(p, compute_stats(corpus, tok), {}, tok);
  for (const auto& [t, w] : p_sparse.entries()) pv[t] = w;
  const auto qd = l2_normalized(encode(enc, tokenize_query(q, tok)));
  const auto pd = l2_normalized(encode(enc, tokenize_passage(p, tok)));
  for (std::size_t k = 0; k < enc.dim; ++k) {
    qv[tok.vocab_size + k] = lambda * qd.values[k];
    pv[tok.vocab_size + k] = pd.values[k];
  }
  double s = 0;
  for (const auto& [key, w] : qv) {
    const auto it = pv.find(key);
    if (it != pv.end()) s += w * it->second;
  }
  return s;
}

TEST(HybridScore, DecompositionAndMaterializedOracle) {
  const auto corpus = test::random_corpus(31, 60);
  const auto enc = init_encoder(TokenizerConfig{}.vocab_size, 8, 1);
  for (const double lambda : {0.0, 1.0, 600.0}) {
    const auto index = make_index(corpus, enc, lambda);
    for (const auto& q : test::random_queries(32, 10)) {
      const auto c = index.components(q);
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        const double s = hybrid_score(index, q, corpus[i].id);
        EXPECT_NEAR(s, c.bm25[i] + lambda * c.cosine[i], 1e-9);
        EXPECT_NEAR(s, materialized_score(corpus, enc, q, corpus[i], lambda), 1e-6);
      }
    }
  }
}

TEST(HybridScore, LambdaZeroIsBm25DotExactly) {
  const auto corpus = test::random_corpus(33, 40);
  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 4, 2), 0.0);
  const auto stats = compute_stats(corpus);
  for (const auto& q : test::random_queries(34, 10)) {
    for (const auto& p : corpus) {
      EXPECT_EQ(hybrid_score(index, q, p.id), dot(encode_query(q), encode_passage(p, stats, {})));
    }
  }
  EXPECT_THROW(hybrid_score(index, {"q", "w1"}, "missing"), Error);
}

TEST(HybridRetrieve, LambdaZeroMatchesBm25Order) {
  const auto corpus = test::random_corpus(35, 200);
  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 8, 3), 0.0);
  for (const auto& q : test::random_queries(36, 20)) {
    const auto h = hybrid_retrieve(index, q, 30);
    const auto b = retrieve(index.bm25(), q, 30);
    ASSERT_EQ(h.size(), b.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      EXPECT_EQ(h.items[i].passage_id, b.items[i].passage_id);
      EXPECT_EQ(h.items[i].score, b.items[i].score);
    }
  }
}

TEST(HybridRetrieve, HugeLambdaFollowsDenseRanking) {
  const auto corpus = test::random_corpus(37, 100);
  const auto enc = init_encoder(TokenizerConfig{}.vocab_size, 8, 4);
  const auto index = make_index(corpus, enc, 1e9);
  for (const auto& q : test::random_queries(38, 10)) {
    const auto h = hybrid_retrieve(index, q, 10);
    const auto d = de_retrieve(enc, index.dense(), q, 10);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h.items[i].passage_id, d.items[i].passage_id);
  }
}

TEST(HybridRetrieve, EqualsBruteForceMaterializedRanking) {
  const auto corpus = test::random_corpus(39, 150);
  const auto enc = init_encoder(TokenizerConfig{}.vocab_size, 6, 5);
  const auto index = make_index(corpus, enc, 3.0);
  for (const auto& q : test::random_queries(40, 8)) {
    std::vector<std::pair<double, std::string>> brute;
    for (const auto& p : corpus) brute.emplace_back(materialized_score(corpus, enc, q, p, 3.0), p.id);
    std::sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto got = hybrid_retrieve(index, q, 20);
    ASSERT_EQ(got.size(), 20u);
    for (std::size_t r = 0; r < got.size(); ++r) {
      EXPECT_EQ(got.items[r].passage_id, brute[r].second);
      EXPECT_NEAR(got.items[r].score, brute[r].first, 1e-6);
    }
  }
}

TEST(HybridRetrieve, EqualBm25HigherCosineFirst) {
  const auto corpus = test::random_corpus(41, 80);
  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 8, 6), 0.5);
  for (const auto& q : test::random_queries(42, 20)) {
    const auto c = index.components(q);
    const auto ranked = hybrid_retrieve(index, q, corpus.size());
    std::map<std::string, std::size_t> rank_of;
    for (const auto& it : ranked.items) rank_of[it.passage_id] = it.rank;
    for (std::size_t a = 0; a < corpus.size(); ++a) {
      for (std::size_t b = 0; b < corpus.size(); ++b) {
        if (c.bm25[a] == c.bm25[b] && c.cosine[a] > c.cosine[b]) {
          EXPECT_LT(rank_of[corpus[a].id], rank_of[corpus[b].id]);
        }
      }
    }
  }
}

TEST(HybridRetrieve, WinnerDiffersFromBothComponents) {
  // "apple" and "fruit" share a direction, "rock" is orthogonal.
  Corpus c;
  c.add({"lexical", "", "apple apple apple rock rock rock rock rock rock"});
  c.add({"semantic", "", "fruit"});
  c.add({"hybrid", "", "apple fruit fruit rock"});
  const TokenizerConfig tok;
  EncoderParams enc;
  enc.vocab_size = tok.vocab_size;
  enc.dim = 2;
  enc.embeddings.assign(static_cast<std::size_t>(tok.vocab_size) * 2, 0.0);
  const auto id = [&](const char* w) { return tokenize(w, tok.vocab_size, 1).tokens[0]; };
  enc.embeddings[id("apple") * 2] = 1;
  enc.embeddings[id("fruit") * 2] = 1;
  enc.embeddings[id("rock") * 2 + 1] = 1;
  const auto index = make_index(c, enc, 1.0);
  const Query q{"q", "apple"};
  EXPECT_EQ(retrieve(index.bm25(), q, 1).items[0].passage_id, "lexical");
  EXPECT_EQ(de_retrieve(enc, index.dense(), q, 1).items[0].passage_id, "semantic");
  EXPECT_EQ(hybrid_retrieve(index, q, 1).items[0].passage_id, "hybrid");
}

TEST(HybridIndex, SaveLoadReproducesScores) {
  test::TempDir dir;
  const auto corpus = test::random_corpus(43, 50);
  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 8, 7), 42.0);
  index.save(dir / "hybrid.json");
  const auto back = HybridIndex::load(dir / "hybrid.json");
  EXPECT_EQ(back.lambda(), 42.0);
  for (const auto& q : test::random_queries(44, 5)) {
    const auto a = hybrid_retrieve(index, q, 10);
    const auto b = hybrid_retrieve(back, q, 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.items[i].passage_id, b.items[i].passage_id);
      EXPECT_EQ(a.items[i].score, b.items[i].score);
    }
  }
}

TEST(TuneLambda, GridRules) {
  const auto corpus = test::random_corpus(45, 60);
  const auto queries = test::random_queries(46, 10);
  QrelSet qrels;
  for (std::size_t i = 0; i < queries.size(); ++i) qrels.set(queries[i].id, corpus[i].id, 1);

  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 8, 8), 0.0);
  EXPECT_EQ(tune_lambda(index, queries, qrels, {300.0}).best_lambda, 300.0);

  EncoderParams zero = init_encoder(TokenizerConfig{}.vocab_size, 4, 1);
  std::fill(zero.embeddings.begin(), zero.embeddings.end(), 0.0);
  const auto flat = make_index(corpus, zero, 0.0);
  const auto t = tune_lambda(flat, queries, qrels, {750, 50, 100});
  EXPECT_EQ(t.best_lambda, 50.0);
  ASSERT_EQ(t.curve.size(), 3u);
  EXPECT_EQ(t.curve[0].second, t.curve[1].second);

  EXPECT_THROW(tune_lambda(index, queries, qrels, {}), Error);
  EXPECT_THROW(tune_lambda(index, queries, QrelSet{}, {1.0}), Error);
}

TEST(TuneLambda, BestIsAtLeastEveryGridPoint) {
  const auto corpus = test::random_corpus(47, 80);
  const auto queries = test::random_queries(48, 15);
  QrelSet qrels;
  for (std::size_t i = 0; i < queries.size(); ++i) qrels.set(queries[i].id, corpus[i * 3].id, 1);
  const auto index = make_index(corpus, init_encoder(TokenizerConfig{}.vocab_size, 8, 9), 0.0);
  const auto grid = default_lambda_grid();
  ASSERT_EQ(grid.size(), 15u);
  EXPECT_EQ(grid.front(), 50.0);
  EXPECT_EQ(grid.back(), 750.0);
  const auto t = tune_lambda(index, queries, qrels, grid);
  for (const auto& [lambda, value] : t.curve) EXPECT_GE(t.best_value, value);
}

}  // namespace
}  // namespace hyrr
