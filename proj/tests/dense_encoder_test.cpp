// SPDX-License-Identifier: Apache-2.0
#include "hyrr/dense_encoder.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hyrr {
namespace {

EncoderParams params_from(std::uint32_t vocab, std::size_t dim, std::vector<double> values) {
  EncoderParams p;
  p.vocab_size = vocab;
  p.dim = dim;
  p.embeddings = std::move(values);
  return p;
}

TokenSequence seq(std::vector<TermId> ids) { return {ids, ids.size()}; }

TEST(Encode, MeanPooling) {
  const auto p = params_from(3, 2, {1, 2, -1, -2, 4, 0});
  EXPECT_EQ(encode(p, seq({0})).values, (std::vector<double>{1, 2}));
  EXPECT_EQ(encode(p, seq({0, 1})).values, (std::vector<double>{0, 0}));
  EXPECT_EQ(encode(p, seq({})).values, (std::vector<double>{0, 0}));
  EXPECT_EQ(encode(p, seq({0, 2})).values, (std::vector<double>{2.5, 1}));
}

TEST(Cosine, Examples) {
  const std::vector<double> v{0.3, -2, 5};
  const std::vector<double> zero{0, 0, 0};
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0);
  EXPECT_EQ(cosine(v, zero), 0.0);
}

TEST(InitEncoder, UniformRangeAndSeeded) {
  const auto a = init_encoder(100, 8, 5);
  EXPECT_EQ(a.embeddings.size(), 800u);
  for (const double x : a.embeddings) {
    EXPECT_GE(x, -0.05);
    EXPECT_LE(x, 0.05);
  }
  EXPECT_EQ(a, init_encoder(100, 8, 5));
  EXPECT_NE(a, init_encoder(100, 8, 6));
}

TEST(InBatchLoss, SingleExampleIsExactlyZero) {
  const auto p = init_encoder(50, 4, 1);
  const std::vector<TokenizedPair> batch{{seq({1, 2}), seq({3})}};
  EXPECT_EQ(in_batch_loss(p, batch, 0.05), 0.0);
}

TEST(InBatchLoss, TwoExampleHandFixture) {
  // q1 = p1 = e0, q2 = p2 = e1: sim 1 on the diagonal, 0 off it.
  const auto p = params_from(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  const std::vector<TokenizedPair> batch{{seq({0}), seq({1})}, {seq({2}), seq({3})}};
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(in_batch_loss(p, batch, 1.0), want, 1e-12);
  EXPECT_NEAR(in_batch_loss(p, batch, 1.0), 0.313262, 1e-6);
}

TEST(InBatchLoss, PermutationInvariantAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = init_encoder(30, 6, 100 + trial);
    std::vector<TokenizedPair> batch;
    const std::size_t n = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back({seq({static_cast<TermId>(uniform_index(rng, 30))}),
                       seq({static_cast<TermId>(uniform_index(rng, 30)), static_cast<TermId>(uniform_index(rng, 30))})});
    }
    const double tau = 0.05 + uniform_unit(rng);
    const double loss = in_batch_loss(p, batch, tau);
    auto shuffled = batch;
    shuffle(shuffled, rng);
    EXPECT_NEAR(in_batch_loss(p, shuffled, tau), loss, 1e-12);
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(loss, std::log(static_cast<double>(n)) + 2.0 / tau + 1e-12);
  }
}

TEST(InBatchLoss, GradientMatchesCentralDifferences) {
  Rng rng(7);
  constexpr double kStep = 1e-4;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t dim = 2 + uniform_index(rng, 7);
    const std::uint32_t vocab = 12;
    auto p = init_encoder(vocab, dim, 40 + trial);
    for (auto& x : p.embeddings) x *= 10;  // away from the near-zero regime
    std::vector<TokenizedPair> batch;
    const std::size_t n = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < n; ++i) {
      TokenizedPair pair;
      for (std::size_t k = 0, len = 1 + uniform_index(rng, 3); k < len; ++k) {
        pair.query.tokens.push_back(static_cast<TermId>(uniform_index(rng, vocab)));
      }
      for (std::size_t k = 0, len = 1 + uniform_index(rng, 4); k < len; ++k) {
        pair.passage.tokens.push_back(static_cast<TermId>(uniform_index(rng, vocab)));
      }
      batch.push_back(pair);
    }
    const double tau = 0.2 + uniform_unit(rng);
    EmbeddingGrad grad;
    in_batch_loss(p, batch, tau, &grad);
    for (TermId t = 0; t < vocab; ++t) {
      for (std::size_t k = 0; k < dim; ++k) {
        double& x = p.embeddings[t * dim + k];
        const double saved = x;
        x = saved + kStep;
        const double up = in_batch_loss(p, batch, tau);
        x = saved - kStep;
        const double down = in_batch_loss(p, batch, tau);
        x = saved;
        const double numeric = (up - down) / (2 * kStep);
        const auto it = grad.find(t);
        const double analytic = it == grad.end() ? 0.0 : it->second[k];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-3) << "trial " << trial << " term " << t << " k " << k;
      }
    }
  }
}

std::vector<TrainPair> toy_pairs(std::size_t n) {
  const auto corpus = test::random_corpus(30, n);
  std::vector<TrainPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto words = split_words(corpus[i].text);
    pairs.push_back({{"q" + std::to_string(i), words[0] + " " + words[words.size() / 2]}, corpus[i]});
  }
  return pairs;
}

TEST(TrainDe, ZeroEpochsReturnsInit) {
  const auto init = init_encoder(TokenizerConfig{}.vocab_size, 8, 2);
  DeTrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(train_de(toy_pairs(10), cfg, {}, init).params, init);
}

TEST(TrainDe, DeterministicAndLossDecreases) {
  DeTrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.seed = 9;
  const auto pairs = toy_pairs(120);
  const auto a = train_de(pairs, cfg);
  const auto b = train_de(pairs, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  ASSERT_EQ(a.epoch_losses.size(), 10u);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
  EXPECT_FALSE(a.loss_increased);
}

TEST(TrainDe, Errors) {
  EXPECT_THROW(train_de({}, DeTrainConfig{}), Error);
  DeTrainConfig bad;
  bad.temperature = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.learning_rate = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(DeRetrieve, SinglePassageAndExactMatch) {
  Corpus one;
  one.add({"only", "", "alpha beta"});
  const auto p = init_encoder(TokenizerConfig{}.vocab_size, 8, 1);
  const auto r = de_retrieve(p, one, {"q", "zzz"}, 5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.items[0].passage_id, "only");

  // Three single-token passages with orthogonal embeddings.
  const TokenizerConfig tok{8, 8, 8};
  Corpus c;
  std::vector<TermId> ids;
  for (const char* w : {"red", "green", "blue", "cyan", "pink", "gold", "grey", "teal"}) {
    const auto t = tokenize(w, tok.vocab_size, 1).tokens[0];
    if (std::find(ids.begin(), ids.end(), t) == ids.end() && ids.size() < 3) {
      ids.push_back(t);
      c.add({w, "", w});
    }
  }
  ASSERT_EQ(ids.size(), 3u);
  EncoderParams q = params_from(8, 3, std::vector<double>(24, 0.0));
  for (std::size_t i = 0; i < 3; ++i) q.embeddings[ids[i] * 3 + i] = 1.0;
  const auto hit = de_retrieve(q, c, {"q", c[1].text}, 3, tok);
  EXPECT_EQ(hit.items[0].passage_id, c[1].id);
  EXPECT_DOUBLE_EQ(hit.items[0].score, 1.0);
}

TEST(DeRetrieve, IndexMatchesExhaustiveOverCorpus) {
  const auto corpus = test::random_corpus(12, 100);
  const auto p = init_encoder(TokenizerConfig{}.vocab_size, 8, 3);
  const auto index = DenseIndex::build(p, corpus);
  for (const auto& q : test::random_queries(13, 10)) {
    const auto a = de_retrieve(p, index, q, 10);
    const auto b = de_retrieve(p, corpus, q, 10);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.items[i].passage_id, b.items[i].passage_id);
  }
}

TEST(SharedTowers, SameTokensSameVector) {
  const TokenizerConfig tok;
  const auto p = init_encoder(tok.vocab_size, 8, 4);
  const Query q{"q", "river bank money"};
  const Passage d{"d", "", "river bank money"};
  EXPECT_EQ(encode(p, tokenize_query(q, tok)), encode(p, tokenize_passage(d, tok)));
}

TEST(EncoderIo, SaveLoadRoundTrip) {
  test::TempDir dir;
  const auto p = init_encoder(500, 12, 8);
  save_encoder(p, dir / "e.bin");
  EXPECT_EQ(load_encoder(dir / "e.bin"), p);

  const auto corpus = test::random_corpus(5, 30);
  const auto index = DenseIndex::build(p, corpus, {500, 64, 512});
  index.save(dir / "d.idx");
  const auto back = DenseIndex::load(dir / "d.idx");
  ASSERT_EQ(back.size(), index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    EXPECT_EQ(back.passage_ids()[i], index.passage_ids()[i]);
    for (std::size_t k = 0; k < index.dim(); ++k) EXPECT_EQ(back.row(i)[k], index.row(i)[k]);
  }
  test::write_file(dir / "bad.bin", "HYRRRRNK garbage");
  EXPECT_THROW(load_encoder(dir / "bad.bin"), Error);
}

}  // namespace
}  // namespace hyrr
