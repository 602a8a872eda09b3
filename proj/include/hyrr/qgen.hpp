// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyrr/corpus.hpp"
#include "hyrr/dense_encoder.hpp"

namespace hyrr {

/// A generated query and the passage it was generated from.
struct SyntheticPair {
  Query query;
  std::string source_passage_id;

  bool operator==(const SyntheticPair&) const = default;
};

enum class GenMode { kSentence, kCrop };

GenMode parse_gen_mode(std::string_view text);
std::string_view to_string(GenMode mode);

struct GenConfig {
  GenMode mode = GenMode::kSentence;
  std::size_t max_per_passage = 8;
  std::uint64_t seed = 0;
  std::size_t sample_passages = 0;  // 0 = every passage
  std::size_t min_query_tokens = 3;
  std::size_t crop_min = 4;
  std::size_t crop_max = 16;
};

/// Splits on '.', '?' or '!' followed by whitespace or end of text. The
/// terminal punctuation is dropped and pieces are trimmed.
std::vector<std::string> split_sentences(std::string_view text);

/// Sentence mode: each sentence of each passage is one query, at most
/// max_per_passage per passage. Crop mode: max_per_passage seeded random
/// contiguous word spans of length in [crop_min, crop_max]. Queries shorter
/// than min_query_tokens tokens are dropped. Output is ordered by passage.
std::vector<SyntheticPair> generate_queries(const Corpus& corpus, const GenConfig& config,
                                            const TokenizerConfig& tokenizer = {});

/// Keeps the pairs whose cosine 1-nearest passage (passage-id ascending on
/// ties) is the source passage. Input order is preserved.
std::vector<SyntheticPair> round_trip_filter(const std::vector<SyntheticPair>& pairs,
                                             const EncoderParams& de0, const Corpus& corpus,
                                             const TokenizerConfig& tokenizer = {},
                                             std::size_t threads = 1);
std::vector<SyntheticPair> round_trip_filter(const std::vector<SyntheticPair>& pairs,
                                             const EncoderParams& de0, const DenseIndex& index,
                                             const TokenizerConfig& tokenizer = {},
                                             std::size_t threads = 1);

/// Pairs with their source passage resolved; throws Error for unknown ids.
std::vector<TrainPair> to_train_pairs(const std::vector<SyntheticPair>& pairs, const Corpus& corpus);

struct FilterReport {
  std::size_t before = 0;
  std::size_t after = 0;

  double kept_ratio() const { return before == 0 ? 0.0 : static_cast<double>(after) / before; }
  nlohmann::ordered_json to_json() const;
};

struct IterativeTrainResult {
  EncoderParams de0;
  EncoderParams de1;
  std::vector<SyntheticPair> generated;
  std::vector<SyntheticPair> filtered;
  FilterReport report;
};

/// Generate -> train DE0 -> round-trip filter -> fine-tune DE0 on the
/// survivors into DE1. Throws Error when the filter keeps nothing.
IterativeTrainResult iterative_train(const Corpus& corpus, const GenConfig& gen,
                                     const DeTrainConfig& de0_config, const DeTrainConfig& de1_config,
                                     const TokenizerConfig& tokenizer = {}, std::size_t threads = 1);

/// TSV "query_text<TAB>source_passage_id". Loaded queries get ids
/// "<prefix><line number>".
void write_pairs(const std::vector<SyntheticPair>& pairs, const std::filesystem::path& path);
std::vector<SyntheticPair> load_pairs(const std::filesystem::path& path, std::string_view id_prefix = "gen-");

}  // namespace hyrr
