// SPDX-License-Identifier: Apache-2.0
#include "hyrr/eval.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hyrr {
namespace {

std::vector<RankedDoc> ranking(std::initializer_list<const char*> ids) {
  std::vector<RankedDoc> out;
  double s = 100;
  for (const char* id : ids) out.push_back({id, s--});
  return out;
}

// q1: relevant at rank 1.
// q2: relevant at rank 3.
// q3: grades 2 (d7) and 1 (d8), retrieved at ranks 3 and 2.
// q4: four relevant, two retrieved at ranks 11 and 12.
// q5: judged, nothing relevant; excluded from means.
struct Fixture {
  RunFile run;
  QrelSet qrels;
  Fixture() {
    run.rankings["q1"] = ranking({"d1", "d2", "d3"});
    run.rankings["q2"] = ranking({"d4", "d5", "d6"});
    run.rankings["q3"] = ranking({"d9", "d8", "d7"});
    run.rankings["q4"] = ranking({"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "d10", "d11"});
    run.rankings["q5"] = ranking({"d20"});
    qrels.set("q1", "d1", 1);
    qrels.set("q2", "d6", 1);
    qrels.set("q3", "d7", 2);
    qrels.set("q3", "d8", 1);
    for (const char* d : {"d10", "d11", "d12", "d13"}) qrels.set("q4", d, 1);
    qrels.set("q5", "d20", 0);
  }
};

TEST(Metrics, HandFixture) {
  const Fixture f;
  const double ndcg_q3 = (1 / std::log2(3.0) + 2 / std::log2(4.0)) / (2 / std::log2(2.0) + 1 / std::log2(3.0));

  const auto mrr = mrr_at_k(f.run, f.qrels, 10);
  EXPECT_NEAR(mrr.per_query.at("q1"), 1.0, 1e-9);
  EXPECT_NEAR(mrr.per_query.at("q2"), 1.0 / 3, 1e-9);
  EXPECT_NEAR(mrr.per_query.at("q3"), 0.5, 1e-9);
  EXPECT_NEAR(mrr.per_query.at("q4"), 0.0, 1e-9);
  EXPECT_NEAR(mrr.mean, (1 + 1.0 / 3 + 0.5 + 0) / 4, 1e-9);
  EXPECT_EQ(mrr.excluded_queries, 1u);
  EXPECT_FALSE(mrr.per_query.contains("q5"));

  const auto ndcg = ndcg_at_k(f.run, f.qrels, 10);
  EXPECT_NEAR(ndcg.per_query.at("q1"), 1.0, 1e-9);
  EXPECT_NEAR(ndcg.per_query.at("q2"), 0.5, 1e-9);
  EXPECT_NEAR(ndcg.per_query.at("q3"), ndcg_q3, 1e-9);
  EXPECT_NEAR(ndcg.per_query.at("q4"), 0.0, 1e-9);
  EXPECT_NEAR(ndcg.mean, (1 + 0.5 + ndcg_q3) / 4, 1e-9);

  const auto rec = recall_at_k(f.run, f.qrels, 100);
  EXPECT_NEAR(rec.per_query.at("q4"), 0.5, 1e-9);
  EXPECT_NEAR(rec.mean, 3.5 / 4, 1e-9);
}

TEST(Metrics, CutoffsAndSmallExamples) {
  RunFile run;
  std::vector<RankedDoc> r;
  for (int i = 1; i <= 11; ++i) r.push_back({"d" + std::to_string(i), 100.0 - i});
  run.rankings["q"] = r;
  QrelSet qrels;
  qrels.set("q", "d11", 1);
  EXPECT_EQ(mrr_at_k(run, qrels, 10).mean, 0.0);
  EXPECT_NEAR(mrr_at_k(run, qrels, 11).mean, 1.0 / 11, 1e-12);

  QrelSet two;
  two.set("q", "d1", 1);
  two.set("q", "d2", 1);
  EXPECT_NEAR(ndcg_at_k(run, two, 10).mean, 1.0, 1e-12);

  QrelSet four;
  for (const char* d : {"d1", "d5", "zz1", "zz2"}) four.set("q", d, 1);
  EXPECT_NEAR(recall_at_k(run, four, 100).mean, 0.5, 1e-12);
  QrelSet none;
  none.set("q", "zz", 1);
  EXPECT_EQ(recall_at_k(run, none, 100).mean, 0.0);
}

TEST(Metrics, ExplicitQueryListScoresMissingQueriesZero) {
  const Fixture f;
  const std::vector<std::string> ids{"q1", "q_missing"};
  QrelSet qrels = f.qrels;
  qrels.set("q_missing", "d1", 1);
  const auto m = mrr_at_k(f.run, qrels, 10, &ids);
  EXPECT_EQ(m.per_query.size(), 2u);
  EXPECT_EQ(m.per_query.at("q_missing"), 0.0);
  EXPECT_NEAR(m.mean, 0.5, 1e-12);
}

TEST(Metrics, NoJudgedQueriesIsAnError) {
  const Fixture f;
  EXPECT_THROW(mrr_at_k(f.run, QrelSet{}, 10), Error);
  EXPECT_THROW(ndcg_at_k(f.run, QrelSet{}, 10), Error);
  EXPECT_THROW(recall_at_k(f.run, QrelSet{}, 10), Error);
}

TEST(Metrics, GradeZeroJudgmentsChangeNothing) {
  const Fixture f;
  QrelSet padded = f.qrels;
  for (const auto& [qid, docs] : f.run.rankings) {
    for (const auto& d : docs) {
      if (padded.grade(qid, d.doc_id) == 0) padded.set(qid, d.doc_id, 0);
    }
  }
  for (const auto* id : {"mrr@10", "ndcg@10", "recall@100"}) {
    const auto m = MetricId::parse(id);
    EXPECT_EQ(evaluate(m, f.run, f.qrels).per_query, evaluate(m, f.run, padded).per_query);
  }
}

TEST(Metrics, GradeOracleGivesPerfectNdcgAndBounds) {
  Rng rng(60);
  RunFile run;
  QrelSet qrels;
  for (int q = 0; q < 30; ++q) {
    const std::string qid = "q" + std::to_string(q);
    std::vector<std::pair<int, std::string>> docs;
    for (int d = 0; d < 15; ++d) {
      const int g = static_cast<int>(uniform_index(rng, 4));
      const std::string did = "d" + std::to_string(d);
      qrels.set(qid, did, g);
      docs.emplace_back(g, did);
    }
    qrels.set(qid, "d0", 3);
    docs[0].first = 3;
    std::stable_sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<RankedDoc> r;
    for (std::size_t i = 0; i < docs.size(); ++i) r.push_back({docs[i].second, -static_cast<double>(i)});
    run.rankings[qid] = r;
  }
  const auto ndcg = ndcg_at_k(run, qrels, 10);
  for (const auto& [q, v] : ndcg.per_query) EXPECT_NEAR(v, 1.0, 1e-12);
  const auto mrr = mrr_at_k(run, qrels, 10);
  for (const auto& [q, v] : mrr.per_query) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(MetricId, ParseAndName) {
  EXPECT_EQ(MetricId::parse("mrr@10"), (MetricId{MetricKind::kMrr, 10}));
  EXPECT_EQ(MetricId::parse("ndcg@10").name(), "ndcg@10");
  EXPECT_EQ(MetricId::parse("recall@100").cutoff, 100u);
  EXPECT_THROW(MetricId::parse("map@10"), Error);
  EXPECT_THROW(MetricId::parse("mrr@0"), Error);
  EXPECT_THROW(MetricId::parse("mrr"), Error);
}

TEST(RunIo, FormatTwoDocs) {
  RunFile run;
  run.run_tag = "tag";
  run.rankings["q1"] = {{"d1", 2.5}, {"d2", 1.0}};
  EXPECT_EQ(format_run(run), "q1 Q0 d1 1 2.5 tag\nq1 Q0 d2 2 1 tag\n");
}

TEST(RunIo, ByteIdenticalRoundTrip) {
  test::TempDir dir;
  Rng rng(61);
  RunFile run;
  run.run_tag = "rt";
  for (int q = 0; q < 20; ++q) {
    std::vector<RankedDoc> r;
    double s = uniform_real(rng, -5, 5);
    for (int d = 0; d < 30; ++d) {
      r.push_back({"doc" + std::to_string(uniform_index(rng, 1000000)) + "_" + std::to_string(d), s});
      s -= uniform_unit(rng) / 3.0;
    }
    run.rankings["q" + std::to_string(q)] = r;
  }
  write_run(run, dir / "a.trec");
  const auto back = read_run(dir / "a.trec");
  EXPECT_EQ(back, run);
  write_run(back, dir / "b.trec");
  EXPECT_EQ(test::read_file(dir / "a.trec"), test::read_file(dir / "b.trec"));
}

TEST(RunIo, ReadErrorsCarryLineNumbers) {
  test::TempDir dir;
  const auto expect_line = [&](const std::string& text, std::size_t line) {
    test::write_file(dir / "r.trec", text);
    try {
      read_run(dir / "r.trec");
      FAIL() << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  };
  expect_line("q1 Q0 d1 1 2.0 t\nq1 Q0 d1 2 1.0 t\n", 2);
  expect_line("q1 Q0 d1 1 2.0 t\nq1 Q0 d2\n", 2);
  expect_line("q1 Q0 d1 2 2.0 t\nq1 Q0 d2 1 1.0 t\n", 2);
  expect_line("q1 Q0 d1 1 abc t\n", 1);
}

TEST(RunFile, ValidateAndCandidateConversion) {
  RunFile run;
  run.rankings["q"] = {{"a", 1.0}, {"b", 2.0}};
  EXPECT_THROW(run.validate(), Error);
  run.rankings["q"] = {{"a", 2.0}, {"a", 1.0}};
  EXPECT_THROW(run.validate(), Error);

  CandidateList l{"q", {}};
  l.items.push_back({"a", 3.0, 1, 0, 1});
  l.items.push_back({"b", 1.0, 2, 0, 2});
  const auto r = to_run({l}, "x");
  EXPECT_EQ(r.run_tag, "x");
  const auto lists = to_candidate_lists(r);
  ASSERT_EQ(lists.size(), 1u);
  EXPECT_EQ(lists[0].items[1].passage_id, "b");
  EXPECT_EQ(lists[0].items[1].rank, 2u);
}

TEST(ResultsTable, FormatAndJson) {
  ResultsTable t{"mrr@10", {"none", "HYRR"}, {"BM25", "DE"}, {{0.5, 0.25}, {0.75, 1.0}}};
  const auto text = t.format(3);
  EXPECT_NE(text.find("mrr@10"), std::string::npos);
  EXPECT_NE(text.find("0.750"), std::string::npos);
  const auto j = t.to_json();
  EXPECT_EQ(j["title"], "mrr@10");
  EXPECT_EQ(j["columns"][1], "DE");
  EXPECT_EQ(j["rows"][1]["label"], "HYRR");
  EXPECT_EQ(j["rows"][1]["values"][0], 0.75);
}

}  // namespace
}  // namespace hyrr
