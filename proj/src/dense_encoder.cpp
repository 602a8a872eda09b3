// SPDX-License-Identifier: Apache-2.0
#include "hyrr/dense_encoder.hpp"

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hyrr/common.hpp"
#include "hyrr/io.hpp"

namespace hyrr {
namespace {

constexpr std::string_view kEncoderMagic = "HYRRDENC";
constexpr std::string_view kDenseIndexMagic = "HYRRDIDX";
constexpr std::uint32_t kFormatVersion = 1;

double dot_span(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// d cos(a, b) / d a, scaled by `upstream` and added to `out`.
void add_cosine_grad(std::span<const double> a, double norm_a, std::span<const double> b,
                     double norm_b, double cos, double upstream, std::span<double> out) {
  if (norm_a == 0.0 || norm_b == 0.0) return;
  const double inv_ab = upstream / (norm_a * norm_b);
  const double self = upstream * cos / (norm_a * norm_a);
  for (std::size_t k = 0; k < a.size(); ++k) out[k] += b[k] * inv_ab - a[k] * self;
}

void scatter_mean_grad(const TokenSequence& tokens, std::span<const double> g, std::size_t dim,
                       EmbeddingGrad& grad) {
  if (tokens.empty()) return;
  const double scale = 1.0 / static_cast<double>(tokens.size());
  for (const TermId t : tokens.tokens) {
    auto& row = grad[t];
    if (row.empty()) row.assign(dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k) row[k] += g[k] * scale;
  }
}

}  // namespace

EncoderParams init_encoder(std::uint32_t vocab_size, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw Error("encoder dim must be >= 1");
  if (vocab_size < 2) throw Error("encoder vocab_size must be >= 2");
  EncoderParams p{vocab_size, dim, seed, {}};
  p.embeddings.resize(static_cast<std::size_t>(vocab_size) * dim);
  Rng rng(seed);
  for (auto& x : p.embeddings) x = uniform_real(rng, -0.05, 0.05);
  return p;
}

DenseVector encode(const EncoderParams& params, const TokenSequence& tokens) {
  DenseVector v{std::vector<double>(params.dim, 0.0)};
  if (tokens.empty()) return v;
  for (const TermId t : tokens.tokens) {
    if (t >= params.vocab_size) throw Error("token id outside encoder vocabulary");
    const auto r = params.row(t);
    for (std::size_t k = 0; k < params.dim; ++k) v.values[k] += r[k];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto& x : v.values) x *= inv;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) noexcept {
  const double na = std::sqrt(dot_span(a, a));
  const double nb = std::sqrt(dot_span(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot_span(a, b) / (na * nb);
}

DenseVector l2_normalized(const DenseVector& v) {
  DenseVector out = v;
  const double n = std::sqrt(dot_span(v.values, v.values));
  if (n == 0.0) return out;
  for (auto& x : out.values) x /= n;
  return out;
}

std::vector<TokenizedPair> tokenize_pairs(const std::vector<TrainPair>& pairs,
                                          const TokenizerConfig& tokenizer) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({tokenize_query(p.query, tokenizer), tokenize_passage(p.positive, tokenizer)});
  }
  return out;
}

double in_batch_loss(const EncoderParams& params, std::span<const TokenizedPair> batch, double tau,
                     EmbeddingGrad* grad) {
  if (batch.empty()) throw Error("in_batch_loss: empty batch");
  if (!(tau > 0.0)) throw Error("in_batch_loss: temperature must be > 0");
  const std::size_t n = batch.size();
  const std::size_t dim = params.dim;
  std::vector<DenseVector> q(n), p(n);
  std::vector<double> qn(n), pn(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = encode(params, batch[i].query);
    p[i] = encode(params, batch[i].passage);
    qn[i] = std::sqrt(dot_span(q[i].values, q[i].values));
    pn[i] = std::sqrt(dot_span(p[i].values, p[i].values));
  }
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dot_span(q[i].values, p[j].values);
      sim[i * n + j] = (qn[i] == 0.0 || pn[j] == 0.0) ? 0.0 : d / (qn[i] * pn[j]);
    }
  }

  double total = 0.0;
  std::vector<double> dsim(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, sim[i * n + j] / tau);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(sim[i * n + j] / tau - m);
    const double lse = m + std::log(z);
    total += lse - sim[i * n + i] / tau;
    for (std::size_t j = 0; j < n; ++j) {
      const double prob = std::exp(sim[i * n + j] / tau - lse);
      dsim[i * n + j] = (prob - (i == j ? 1.0 : 0.0)) / (tau * static_cast<double>(n));
    }
  }

  if (grad != nullptr) {
    std::vector<double> gq(dim), gp(n * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(gq.begin(), gq.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double up = dsim[i * n + j];
        const double c = sim[i * n + j];
        add_cosine_grad(q[i].values, qn[i], p[j].values, pn[j], c, up, gq);
        add_cosine_grad(p[j].values, pn[j], q[i].values, qn[i], c, up,
                        std::span<double>(gp.data() + j * dim, dim));
      }
      scatter_mean_grad(batch[i].query, gq, dim, *grad);
    }
    for (std::size_t j = 0; j < n; ++j) {
      scatter_mean_grad(batch[j].passage, std::span<const double>(gp.data() + j * dim, dim), dim,
                        *grad);
    }
  }
  return total / static_cast<double>(n);
}

double in_batch_loss(const EncoderParams& params, const std::vector<TrainPair>& batch, double tau,
                     const TokenizerConfig& tokenizer) {
  const auto tokenized = tokenize_pairs(batch, tokenizer);
  return in_batch_loss(params, std::span<const TokenizedPair>(tokenized), tau);
}

void DeTrainConfig::validate() const {
  if (batch_size < 1) throw Error("de config: batch_size must be >= 1");
  if (!(temperature > 0.0)) throw Error("de config: temperature must be > 0");
  if (!(learning_rate > 0.0)) throw Error("de config: learning_rate must be > 0");
  if (dim < 1) throw Error("de config: dim must be >= 1");
}

DeTrainResult train_de(const std::vector<TrainPair>& pairs, const DeTrainConfig& config,
                       const TokenizerConfig& tokenizer, const std::optional<EncoderParams>& init) {
  if (pairs.empty()) throw Error("train_de: no training pairs");
  config.validate();
  DeTrainResult result;
  result.params = init ? *init : init_encoder(tokenizer.vocab_size, config.dim, config.seed);
  if (result.params.vocab_size != tokenizer.vocab_size) {
    throw Error("train_de: encoder vocabulary does not match tokenizer");
  }
  const auto data = tokenize_pairs(pairs, tokenizer);
  std::vector<std::size_t> order(data.size());
  std::vector<TokenizedPair> batch;
  EmbeddingGrad grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, epoch));
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      grad.clear();
      const double loss = in_batch_loss(result.params, batch, config.temperature, &grad);
      if (!std::isfinite(loss)) {
        throw Error("train_de: loss diverged in epoch " + std::to_string(epoch) + "; lower the learning rate");
      }
      epoch_loss += loss * static_cast<double>(end - start);
      for (const auto& [term, g] : grad) {
        auto row = result.params.row(term);
        for (std::size_t k = 0; k < g.size(); ++k) row[k] -= config.learning_rate * g[k];
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  if (result.epoch_losses.size() >= 2 && result.epoch_losses.back() > result.epoch_losses.front()) {
    result.loss_increased = true;
    spdlog::warn("train_de: final epoch loss {:.6f} exceeds first epoch loss {:.6f}",
                 result.epoch_losses.back(), result.epoch_losses.front());
  }
  return result;
}

void save_encoder(const EncoderParams& params, const std::filesystem::path& path) {
  io::BinaryWriter out(path);
  out.put_magic(kEncoderMagic);
  out.put<std::uint32_t>(kFormatVersion);
  out.put<std::uint32_t>(params.vocab_size);
  out.put<std::uint64_t>(params.dim);
  out.put<std::uint64_t>(params.seed);
  out.put_span(std::span<const double>(params.embeddings));
  out.close();
}

EncoderParams load_encoder(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic(kEncoderMagic);
  if (const auto v = in.get<std::uint32_t>(); v != kFormatVersion) {
    throw Error(path.string() + ": unsupported encoder format version " + std::to_string(v));
  }
  EncoderParams p;
  p.vocab_size = in.get<std::uint32_t>();
  p.dim = in.get<std::uint64_t>();
  p.seed = in.get<std::uint64_t>();
  if (p.dim == 0 || p.dim > (1u << 16)) throw Error(path.string() + ": bad encoder dim");
  p.embeddings.resize(static_cast<std::size_t>(p.vocab_size) * p.dim);
  in.get_span(std::span<double>(p.embeddings));
  in.expect_end();
  return p;
}

DenseIndex DenseIndex::build(const EncoderParams& params, const Corpus& corpus,
                             const TokenizerConfig& tokenizer, std::size_t threads) {
  DenseIndex index;
  index.dim_ = params.dim;
  index.rows_.assign(corpus.size() * params.dim, 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    index.ids_.push_back(corpus[i].id);
    index.index_.emplace(corpus[i].id, i);
  }
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    const auto v = l2_normalized(encode(params, tokenize_passage(corpus[i], tokenizer)));
    std::copy(v.values.begin(), v.values.end(), index.rows_.begin() + static_cast<std::ptrdiff_t>(i * index.dim_));
  });
  return index;
}

std::optional<std::size_t> DenseIndex::position(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> DenseIndex::cosine_all(const DenseVector& query) const {
  if (query.size() != dim_) throw Error("query encoding dimension mismatch");
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = cosine(query.values, row(i));
  return out;
}

void DenseIndex::save(const std::filesystem::path& path) const {
  io::BinaryWriter out(path);
  out.put_magic(kDenseIndexMagic);
  out.put<std::uint32_t>(kFormatVersion);
  out.put<std::uint64_t>(dim_);
  out.put<std::uint64_t>(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out.put_string(ids_[i]);
    out.put_span(row(i));
  }
  out.close();
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic(kDenseIndexMagic);
  if (const auto v = in.get<std::uint32_t>(); v != kFormatVersion) {
    throw Error(path.string() + ": unsupported dense index version " + std::to_string(v));
  }
  DenseIndex index;
  index.dim_ = in.get<std::uint64_t>();
  const auto n = in.get<std::uint64_t>();
  index.rows_.resize(n * index.dim_);
  for (std::uint64_t i = 0; i < n; ++i) {
    index.ids_.push_back(in.get_string());
    if (!index.index_.emplace(index.ids_.back(), i).second) {
      throw Error(path.string() + ": duplicate passage id " + index.ids_.back());
    }
    in.get_span(std::span<double>(index.rows_.data() + i * index.dim_, index.dim_));
  }
  in.expect_end();
  return index;
}

CandidateList de_retrieve(const EncoderParams& params, const DenseIndex& index, const Query& query,
                          std::size_t k_results, const TokenizerConfig& tokenizer) {
  if (k_results < 1) throw Error("de_retrieve: k_results must be >= 1");
  const auto scores = index.cosine_all(encode(params, tokenize_query(query, tokenizer)));
  std::vector<std::pair<std::size_t, double>> hits(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) hits[i] = {i, scores[i]};
  const auto& ids = index.passage_ids();
  return rank_hits(query.id, std::move(hits), k_results,
                   [&](std::size_t i) -> const std::string& { return ids[i]; });
}

CandidateList de_retrieve(const EncoderParams& params, const Corpus& corpus, const Query& query,
                          std::size_t k_results, const TokenizerConfig& tokenizer) {
  return de_retrieve(params, DenseIndex::build(params, corpus, tokenizer), query, k_results,
                     tokenizer);
}

}  // namespace hyrr
