// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyrr/candidate.hpp"
#include "hyrr/corpus.hpp"
#include "hyrr/dense_encoder.hpp"
#include "hyrr/eval.hpp"

namespace hyrr {

/// Single-head cross-attention scorer parameters.
///
/// Query token rows attend over passage token rows:
///   Q = E_q Wq,  K = E_p Wk,  V = E_p Wv,  A = softmax_rows(Q K^T / sqrt(d))
///   H = A V
///   s = w . mean_i(c_i * H_i) + b0
/// where c_i is the query token's own embedding when `query_gated` is set,
/// and the all-ones vector otherwise (then s = w . meanrow(A V) + b0).
/// Matrices are d x d, row-major, applied to row vectors (x W).
struct RerankerParams {
  std::uint32_t vocab_size = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  bool query_gated = true;
  std::vector<double> embeddings;  // vocab_size x dim
  std::vector<double> w_q;
  std::vector<double> w_k;
  std::vector<double> w_v;
  std::vector<double> w;
  double b0 = 0.0;

  std::span<const double> row(TermId t) const {
    return {embeddings.data() + static_cast<std::size_t>(t) * dim, dim};
  }
  bool operator==(const RerankerParams&) const = default;
};

struct RerankerInit {
  double embedding_scale = 0.5;    // embeddings ~ U[-scale, scale]
  double projection_noise = 0.01;  // Wq, Wk, Wv = I + U[-noise, noise]
  bool query_gated = true;
};

RerankerParams init_reranker(std::uint32_t vocab_size, std::size_t dim, std::uint64_t seed,
                             const RerankerInit& init = {});
/// All parameters zero except b0.
RerankerParams constant_reranker(std::uint32_t vocab_size, std::size_t dim, double b0,
                                 bool query_gated = true);

/// Pluggable query-passage scorer used by rerank().
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual double score(const TokenSequence& query, const TokenSequence& passage) const = 0;
  /// One query against several passages; defaults to repeated score().
  virtual std::vector<double> score_many(const TokenSequence& query,
                                         std::span<const TokenSequence* const> passages) const {
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto* p : passages) out.push_back(score(query, *p));
    return out;
  }
};

/// Scores for one query against a list, sharing the query-side projections.
/// Equal to score_pair per passage up to rounding.
std::vector<double> score_list(const RerankerParams& params, const TokenSequence& query,
                               std::span<const TokenSequence* const> passages);

/// Direct evaluation of the attention formula. Throws Error when either
/// sequence is empty.
double score_pair(const RerankerParams& params, const TokenSequence& query,
                  const TokenSequence& passage);

class CrossAttentionScorer final : public PairScorer {
 public:
  explicit CrossAttentionScorer(const RerankerParams& params) : params_(params) {}
  double score(const TokenSequence& query, const TokenSequence& passage) const override {
    return score_pair(params_, query, passage);
  }
  std::vector<double> score_many(const TokenSequence& query,
                                 std::span<const TokenSequence* const> passages) const override;

 private:
  const RerankerParams& params_;
};

/// -sum_j y_j log softmax(s)_j with a stabilized log-sum-exp. Throws Error
/// on length mismatch, empty input, or when every label is 0.
double listwise_loss(std::span<const double> scores, std::span<const int> labels);
/// Same loss; writes dLoss/dscores into `grad` (resized).
double listwise_loss(std::span<const double> scores, std::span<const int> labels,
                     std::vector<double>& grad);

/// Gradient of a scalar objective w.r.t. every reranker parameter.
struct RerankerGrad {
  std::unordered_map<TermId, std::vector<double>> embeddings;
  std::vector<double> w_q, w_k, w_v, w;
  double b0 = 0.0;

  explicit RerankerGrad(std::size_t dim = 0);
  void add(const RerankerGrad& other);
  void scale(double factor);
};

/// Scores of every passage for one query plus, when `grad` is given, the
/// gradient of listwise_loss(scores, labels) added into it. Returns the loss.
/// Same arithmetic as score_pair up to rounding, restructured so per-query
/// projections are shared across the list.
double list_loss_and_grad(const RerankerParams& params, const TokenSequence& query,
                          std::span<const TokenSequence* const> passages, std::span<const int> labels,
                          RerankerGrad* grad, std::vector<double>* scores_out = nullptr);

/// Candidate sampling window: negatives come from run ranks (skip, depth].
struct SamplingWindow {
  std::size_t skip = 0;
  std::size_t depth = 250;
  std::size_t n_negatives = 50;

  void validate() const;
  /// Supervised regime: 50 negatives from the top 250.
  static SamplingWindow supervised() { return {0, 250, 50}; }
  /// Zero-shot regime: 50 negatives from ranks 10..210.
  static SamplingWindow zero_shot() { return {9, 210, 50}; }
};

struct CandidateSet {
  std::vector<CandidateList> lists;
  std::vector<std::string> short_pool_queries;  // fewer negatives than requested
  std::size_t dropped_queries = 0;               // no positive in qrels
};

/// One positive (highest grade, then smallest passage id) plus n_negatives
/// passages sampled uniformly without replacement from the window. Judged
/// relevant passages are never negatives. The positive is injected even when
/// the run missed it. Lists follow run query order; seeded per query.
CandidateSet build_candidate_lists(const RunFile& run, const QrelSet& qrels, const SamplingWindow& window,
                                   std::uint64_t seed);

/// JSONL {query_id, items:[{passage_id, label, retriever_rank}]}.
void write_candidate_lists(const std::vector<CandidateList>& lists, const std::filesystem::path& path);
std::vector<CandidateList> load_candidate_lists(const std::filesystem::path& path);

struct RerankerTrainConfig {
  std::size_t dim = 32;  // only used for a fresh init
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  RerankerInit init;

  void validate() const;
};

struct RerankerTrainResult {
  RerankerParams params;
  std::vector<double> step_losses;  // mean batch loss before each update
  double initial_loss = 0.0;        // mean loss over all lists before training
  double final_loss = 0.0;          // mean loss over all lists after training
};

using QueryLookup = std::unordered_map<std::string, Query>;
QueryLookup make_query_lookup(const std::vector<Query>& queries);

/// SGD on the mean listwise loss over batches of lists. Lists whose labels
/// are all zero are skipped. Deterministic in (lists, config, init) and
/// independent of config.threads.
RerankerTrainResult train_reranker(const std::vector<CandidateList>& lists, const Corpus& corpus,
                                   const QueryLookup& queries, const RerankerTrainConfig& config,
                                   const TokenizerConfig& tokenizer = {},
                                   const std::optional<RerankerParams>& init = std::nullopt);

/// Mean listwise loss over lists (skipping all-zero lists).
double mean_list_loss(const RerankerParams& params, const std::vector<CandidateList>& lists,
                      const Corpus& corpus, const QueryLookup& queries,
                      const TokenizerConfig& tokenizer = {});

/// Rescores each query's top_k passages and sorts them by score (ties:
/// original rank). Passages past top_k keep their order below the block with
/// scores stepped down from the block minimum so rankings stay monotone.
/// Throws Error naming any run passage missing from the corpus.
RunFile rerank(const PairScorer& scorer, const RunFile& run, const Corpus& corpus,
               const QueryLookup& queries, std::size_t top_k, const TokenizerConfig& tokenizer = {},
               std::size_t threads = 1, std::string run_tag = "rerank");

void save_reranker(const RerankerParams& params, const std::filesystem::path& path);
RerankerParams load_reranker(const std::filesystem::path& path);

}  // namespace hyrr
