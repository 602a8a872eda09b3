// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyrr/candidate.hpp"
#include "hyrr/corpus.hpp"

namespace hyrr {

/// Token embedding table shared by the query and passage towers.
struct EncoderParams {
  std::uint32_t vocab_size = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> embeddings;  // vocab_size x dim, row-major

  std::span<const double> row(TermId t) const {
    return {embeddings.data() + static_cast<std::size_t>(t) * dim, dim};
  }
  std::span<double> row(TermId t) { return {embeddings.data() + static_cast<std::size_t>(t) * dim, dim}; }

  bool operator==(const EncoderParams&) const = default;
};

/// Embeddings drawn i.i.d. uniform in [-0.05, 0.05] from `seed`.
EncoderParams init_encoder(std::uint32_t vocab_size, std::size_t dim, std::uint64_t seed);

struct DenseVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const DenseVector&) const = default;
};

/// Mean of the token embedding rows; zero vector for an empty sequence.
DenseVector encode(const EncoderParams& params, const TokenSequence& tokens);

/// a.b / (|a| |b|), or 0 when either norm is 0.
double cosine(std::span<const double> a, std::span<const double> b) noexcept;
inline double cosine(const DenseVector& a, const DenseVector& b) noexcept {
  return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

/// Unit-length copy; zero vectors stay zero.
DenseVector l2_normalized(const DenseVector& v);

struct TrainPair {
  Query query;
  Passage positive;
};

struct TokenizedPair {
  TokenSequence query;
  TokenSequence passage;
};

std::vector<TokenizedPair> tokenize_pairs(const std::vector<TrainPair>& pairs,
                                          const TokenizerConfig& tokenizer);

/// Sparse gradient over embedding rows.
using EmbeddingGrad = std::unordered_map<TermId, std::vector<double>>;

/// Mean in-batch sampled softmax loss over cosine similarities with
/// temperature tau; every other positive in the batch is a negative.
/// When `grad` is given, the gradient w.r.t. touched rows is added to it.
double in_batch_loss(const EncoderParams& params, std::span<const TokenizedPair> batch, double tau,
                     EmbeddingGrad* grad = nullptr);
double in_batch_loss(const EncoderParams& params, const std::vector<TrainPair>& batch, double tau,
                     const TokenizerConfig& tokenizer = {});

struct DeTrainConfig {
  std::size_t dim = 64;  // only used for a fresh init
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 0.5;
  double temperature = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DeTrainResult {
  EncoderParams params;
  std::vector<double> epoch_losses;  // mean training loss per epoch
  bool loss_increased = false;       // last epoch above the first
};

/// Plain mini-batch SGD on in_batch_loss. Fresh parameters come from
/// config.seed when `init` is empty. Deterministic in (pairs, config, init).
DeTrainResult train_de(const std::vector<TrainPair>& pairs, const DeTrainConfig& config,
                       const TokenizerConfig& tokenizer = {},
                       const std::optional<EncoderParams>& init = std::nullopt);

void save_encoder(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_encoder(const std::filesystem::path& path);

/// Precomputed, l2-normalized passage encodings in corpus order.
class DenseIndex {
 public:
  static DenseIndex build(const EncoderParams& params, const Corpus& corpus,
                          const TokenizerConfig& tokenizer = {}, std::size_t threads = 1);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& passage_ids() const noexcept { return ids_; }
  std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
  std::optional<std::size_t> position(std::string_view id) const;

  /// Cosine of a query encoding against every passage.
  std::vector<double> cosine_all(const DenseVector& query) const;

  /// Records of (passage id, dim doubles).
  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Exhaustive top-k by cosine, descending, passage-id tiebreak.
CandidateList de_retrieve(const EncoderParams& params, const DenseIndex& index, const Query& query,
                          std::size_t k_results, const TokenizerConfig& tokenizer = {});
CandidateList de_retrieve(const EncoderParams& params, const Corpus& corpus, const Query& query,
                          std::size_t k_results, const TokenizerConfig& tokenizer = {});

}  // namespace hyrr
