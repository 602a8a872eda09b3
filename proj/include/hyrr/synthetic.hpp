// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "hyrr/corpus.hpp"

namespace hyrr {

/// Generator settings for the synthetic retrieval testbed.
///
/// Every concept in the synonym table has two surface forms. A passage uses
/// one or, at both_forms_rate, both forms of each concept it mentions, mixed
/// with filler words. Lexical queries
/// repeat some of their target's concepts in the passage's form; semantic
/// queries switch all but semantic_kept_terms of them to the form the
/// passage lacks.
struct SyntheticCorpusSpec {
  std::size_t n_passages = 2000;
  std::size_t n_train_queries = 400;
  std::size_t n_test_queries = 200;
  std::size_t synonym_table_size = 200;
  double lexical_fraction = 0.5;
  std::uint64_t seed = 0;
  std::size_t filler_pool_size = 500;
  std::size_t passage_concepts_min = 8;
  std::size_t passage_concepts_max = 14;
  std::size_t fillers_min = 8;
  std::size_t fillers_max = 16;
  std::size_t query_concepts = 5;
  std::size_t semantic_kept_terms = 1;  // concepts a semantic query leaves in the passage's form
  double both_forms_rate = 0.3;  // chance a passage mentions a concept in both forms

  void validate() const;
  static SyntheticCorpusSpec from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  QrelSet train_qrels;
  QrelSet test_qrels;
  std::vector<std::string> lexical_query_ids;
};

/// Deterministic in the spec. Each query targets a distinct passage, judged
/// with grade 1.
SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusSpec& spec);

/// corpus.jsonl, train_queries.tsv, train_qrels.txt, test_queries.tsv,
/// test_qrels.txt inside `dir`.
void write_synthetic_corpus(const SyntheticCorpus& data, const std::filesystem::path& dir);

}  // namespace hyrr
