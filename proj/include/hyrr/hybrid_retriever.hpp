// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hyrr/candidate.hpp"
#include "hyrr/dense_encoder.hpp"
#include "hyrr/eval.hpp"
#include "hyrr/sparse_bm25.hpp"

namespace hyrr {

/// Query-side hybrid encoding. Conceptually [q_bm25, lambda * q_de] against
/// passage encodings [c_bm25, c_de]; the concatenation is never built.
struct HybridEncoding {
  SparseVector sparse;
  DenseVector dense;
};

/// BM25 postings plus l2-normalized dense rows over the same passage set.
/// Immutable after construction apart from lambda.
class HybridIndex {
 public:
  HybridIndex(std::shared_ptr<const Bm25Index> bm25, std::shared_ptr<const EncoderParams> encoder,
              std::shared_ptr<const DenseIndex> dense, double lambda);

  const Bm25Index& bm25() const noexcept { return *bm25_; }
  const EncoderParams& encoder() const noexcept { return *encoder_; }
  const DenseIndex& dense() const noexcept { return *dense_; }
  double lambda() const noexcept { return lambda_; }
  /// Copy sharing the underlying indexes with a different lambda.
  HybridIndex with_lambda(double lambda) const;

  HybridEncoding encode_query(const Query& query) const;

  /// Per-passage BM25 dot products and cosines for one query, corpus order.
  struct Components {
    std::vector<double> bm25;
    std::vector<char> touched;
    std::vector<double> cosine;
  };
  Components components(const Query& query) const;

  /// {format_version, bm25, dense, encoder, lambda} JSON referencing three
  /// sibling files written next to it.
  void save(const std::filesystem::path& manifest) const;
  static HybridIndex load(const std::filesystem::path& manifest);

 private:
  std::shared_ptr<const Bm25Index> bm25_;
  std::shared_ptr<const EncoderParams> encoder_;
  std::shared_ptr<const DenseIndex> dense_;
  double lambda_;
};

/// dot(q_bm25, c_bm25) + lambda * cosine(q_de, c_de). Throws Error for an
/// unknown passage id.
double hybrid_score(const HybridIndex& index, const Query& query, const std::string& passage_id);

/// Exhaustive top-k by hybrid score, passage-id tiebreak.
CandidateList hybrid_retrieve(const HybridIndex& index, const Query& query, std::size_t k_results);
/// Ranks precomputed components at a given lambda.
CandidateList rank_components(const HybridIndex::Components& c, double lambda,
                              const std::vector<std::string>& passage_ids, const std::string& query_id,
                              std::size_t k_results);

/// 50, 100, ..., 750.
std::vector<double> default_lambda_grid();

struct LambdaTuning {
  double best_lambda = 0.0;
  double best_value = 0.0;
  std::vector<std::pair<double, double>> curve;  // (lambda, metric) per grid point
};

/// Grid value maximizing `metric` of hybrid retrieval on the judged queries;
/// ties go to the smallest lambda. Throws Error for an empty grid or when no
/// query has a relevant judgment.
LambdaTuning tune_lambda(const HybridIndex& index, const std::vector<Query>& queries,
                         const QrelSet& qrels, const std::vector<double>& grid,
                         const MetricId& metric = {MetricKind::kMrr, 10}, std::size_t threads = 1);

}  // namespace hyrr
