// SPDX-License-Identifier: Apache-2.0
#include "hyrr/hybrid_retriever.hpp"

#include <cmath>

#include "hyrr/common.hpp"
#include "hyrr/io.hpp"

namespace hyrr {
namespace {
constexpr int kHybridFormatVersion = 1;
}

HybridIndex::HybridIndex(std::shared_ptr<const Bm25Index> bm25,
                         std::shared_ptr<const EncoderParams> encoder,
                         std::shared_ptr<const DenseIndex> dense, double lambda)
    : bm25_(std::move(bm25)), encoder_(std::move(encoder)), dense_(std::move(dense)), lambda_(lambda) {
  if (!bm25_ || !encoder_ || !dense_) throw Error("hybrid index: missing component");
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw Error("hybrid index: lambda must be >= 0");
  if (bm25_->passage_ids() != dense_->passage_ids()) {
    throw Error("hybrid index: bm25 and dense indexes cover different passages");
  }
  if (encoder_->dim != dense_->dim()) throw Error("hybrid index: encoder/dense dimension mismatch");
}

HybridIndex HybridIndex::with_lambda(double lambda) const {
  return HybridIndex(bm25_, encoder_, dense_, lambda);
}

HybridEncoding HybridIndex::encode_query(const Query& query) const {
  const auto tokens = tokenize_query(query, bm25_->tokenizer());
  return {encode_query_tokens(tokens), encode(*encoder_, tokens)};
}

HybridIndex::Components HybridIndex::components(const Query& query) const {
  const auto q = encode_query(query);
  Components c;
  bm25_->score_all(q.sparse, c.bm25, c.touched);
  c.cosine = dense_->cosine_all(q.dense);
  return c;
}

void HybridIndex::save(const std::filesystem::path& manifest) const {
  const auto stem = manifest.stem().string();
  const auto dir = manifest.parent_path();
  const auto bm25_name = stem + ".bm25";
  const auto dense_name = stem + ".dense";
  const auto encoder_name = stem + ".encoder";
  bm25_->save(dir / bm25_name);
  dense_->save(dir / dense_name);
  save_encoder(*encoder_, dir / encoder_name);
  nlohmann::ordered_json j;
  j["format_version"] = kHybridFormatVersion;
  j["bm25"] = bm25_name;
  j["dense"] = dense_name;
  j["encoder"] = encoder_name;
  j["lambda"] = lambda_;
  io::write_text(manifest, j.dump(2) + "\n");
}

HybridIndex HybridIndex::load(const std::filesystem::path& manifest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(manifest));
    if (j.at("format_version").get<int>() != kHybridFormatVersion) {
      throw Error(manifest.string() + ": unsupported hybrid index version");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  return HybridIndex(
      std::make_shared<const Bm25Index>(Bm25Index::load(dir / j.at("bm25").get<std::string>())),
      std::make_shared<const EncoderParams>(load_encoder(dir / j.at("encoder").get<std::string>())),
      std::make_shared<const DenseIndex>(DenseIndex::load(dir / j.at("dense").get<std::string>())),
      j.at("lambda").get<double>());
}

double hybrid_score(const HybridIndex& index, const Query& query, const std::string& passage_id) {
  const auto pos = index.dense().position(passage_id);
  if (!pos) throw Error("hybrid_score: unknown passage id " + passage_id);
  const auto q = index.encode_query(query);
  const double sparse = dot(q.sparse, index.bm25().passage_vector(*pos));
  const double dense = cosine(std::span<const double>(q.dense.values), index.dense().row(*pos));
  return sparse + index.lambda() * dense;
}

CandidateList rank_components(const HybridIndex::Components& c, double lambda,
                              const std::vector<std::string>& passage_ids, const std::string& query_id,
                              std::size_t k_results) {
  if (k_results < 1) throw Error("hybrid_retrieve: k_results must be >= 1");
  std::vector<std::pair<std::size_t, double>> hits;
  hits.reserve(c.bm25.size());
  for (std::size_t d = 0; d < c.bm25.size(); ++d) {
    // At lambda 0 a passage sharing no term has a hybrid product of exactly 0;
    // it is left out so the ranking coincides with BM25 retrieval.
    if (lambda == 0.0 && !c.touched[d]) continue;
    hits.emplace_back(d, c.bm25[d] + lambda * c.cosine[d]);
  }
  return rank_hits(query_id, std::move(hits), k_results,
                   [&](std::size_t d) -> const std::string& { return passage_ids[d]; });
}

CandidateList hybrid_retrieve(const HybridIndex& index, const Query& query, std::size_t k_results) {
  return rank_components(index.components(query), index.lambda(), index.bm25().passage_ids(), query.id,
                         k_results);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int l = 50; l <= 750; l += 50) grid.push_back(l);
  return grid;
}

LambdaTuning tune_lambda(const HybridIndex& index, const std::vector<Query>& queries,
                         const QrelSet& qrels, const std::vector<double>& grid, const MetricId& metric,
                         std::size_t threads) {
  if (grid.empty()) throw Error("tune_lambda: empty grid");
  std::vector<const Query*> judged;
  std::vector<std::string> judged_ids;
  for (const auto& q : queries) {
    if (qrels.relevant_count(q.id) > 0) {
      judged.push_back(&q);
      judged_ids.push_back(q.id);
    }
  }
  if (judged.empty()) throw Error("tune_lambda: no judged queries");

  std::vector<HybridIndex::Components> comps(judged.size());
  parallel_for(judged.size(), threads, [&](std::size_t i) { comps[i] = index.components(*judged[i]); });

  LambdaTuning out;
  bool first = true;
  for (const double lambda : grid) {
    if (!(lambda >= 0.0)) throw Error("tune_lambda: negative lambda in grid");
    std::vector<CandidateList> lists(judged.size());
    for (std::size_t i = 0; i < judged.size(); ++i) {
      lists[i] = rank_components(comps[i], lambda, index.bm25().passage_ids(), judged[i]->id, metric.cutoff);
    }
    const double value = evaluate(metric, to_run(lists, "tune"), qrels, &judged_ids).mean;
    out.curve.emplace_back(lambda, value);
    if (first || value > out.best_value || (value == out.best_value && lambda < out.best_lambda)) {
      out.best_lambda = lambda;
      out.best_value = value;
      first = false;
    }
  }
  return out;
}

}  // namespace hyrr
