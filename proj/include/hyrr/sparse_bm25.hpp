// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hyrr/candidate.hpp"
#include "hyrr/corpus.hpp"

namespace hyrr {

/// Term-id -> weight, stored sorted by term id. Zero weights are dropped.
class SparseVector {
 public:
  using Entry = std::pair<TermId, double>;

  SparseVector() = default;
  /// Entries may be unsorted and may repeat a term; repeats are summed.
  static SparseVector from_entries(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// Weight for a term, 0 when absent.
  double weight(TermId term) const noexcept;

  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Sum over shared terms of a[t] * b[t], accumulated in ascending term order.
double dot(const SparseVector& a, const SparseVector& b) noexcept;

struct Bm25Params {
  double k = 0.9;
  double b = 0.8;

  void validate() const;

  /// Anserini MS MARCO passage preset.
  static Bm25Params msmarco_anserini() { return {0.82, 0.68}; }
  /// Anserini BEIR preset.
  static Bm25Params beir_anserini() { return {0.9, 0.4}; }
  /// "default", "msmarco-anserini" or "beir-anserini".
  static Bm25Params named(std::string_view name);
};

struct Bm25Stats {
  std::size_t doc_count = 0;
  std::unordered_map<TermId, double> idf;
  double avg_length = 0.0;
  std::unordered_map<std::string, std::size_t> lengths;  // passage id -> token count

  /// IDF for a term; terms never seen in the collection get the N-document
  /// limit ln((N + 0.5) / 0.5 + 1).
  double idf_of(TermId term) const noexcept;
};

/// ln((N - df + 0.5) / (df + 0.5) + 1); never negative.
double bm25_idf(std::size_t doc_count, std::size_t doc_freq) noexcept;

/// Single BM25 term weight for a passage.
double bm25_term_weight(double idf, double count, double length, double avg_length,
                        const Bm25Params& params) noexcept;

/// Throws Error on an empty corpus.
Bm25Stats compute_stats(const Corpus& corpus, const TokenizerConfig& tokenizer = {});

SparseVector encode_passage(const Passage& passage, const Bm25Stats& stats,
                            const Bm25Params& params, const TokenizerConfig& tokenizer = {});
SparseVector encode_passage_tokens(const TokenSequence& tokens, const Bm25Stats& stats,
                                   const Bm25Params& params);

/// Query term counts.
SparseVector encode_query(const Query& query, const TokenizerConfig& tokenizer = {});
SparseVector encode_query_tokens(const TokenSequence& tokens);

/// Inverted index over passage vectors. Immutable after build.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t doc;  // position in passage_ids()
    double weight;
  };

  static Bm25Index build(const Corpus& corpus, const Bm25Params& params = {},
                         const TokenizerConfig& tokenizer = {});

  const Bm25Params& params() const noexcept { return params_; }
  const Bm25Stats& stats() const noexcept { return stats_; }
  const TokenizerConfig& tokenizer() const noexcept { return tokenizer_; }
  const std::vector<std::string>& passage_ids() const noexcept { return passage_ids_; }
  std::size_t size() const noexcept { return passage_ids_.size(); }
  const std::vector<Posting>* postings(TermId term) const;

  /// Dot product of the query vector with every passage; untouched passages
  /// score 0 and are reported in `touched` as false.
  void score_all(const SparseVector& query, std::vector<double>& scores,
                 std::vector<char>& touched) const;

  /// Passage vector reconstructed from the postings.
  SparseVector passage_vector(std::size_t doc) const;

  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  Bm25Params params_;
  TokenizerConfig tokenizer_;
  Bm25Stats stats_;
  std::vector<std::string> passage_ids_;
  // Sorted by term id; each posting list sorted by doc.
  std::vector<std::pair<TermId, std::vector<Posting>>> postings_;
};

/// Top-k passages by BM25 dot product, descending, passage-id ascending on
/// ties. Passages sharing no term with the query are never returned.
CandidateList retrieve(const Bm25Index& index, const Query& query, std::size_t k_results);

}  // namespace hyrr
