// SPDX-License-Identifier: Apache-2.0
#include "hyrr/sparse_bm25.hpp"

#include <cmath>
#include <map>

#include "hyrr/common.hpp"
#include "hyrr/io.hpp"

namespace hyrr {
namespace {

constexpr std::string_view kIndexMagic = "HYRRBM25";
constexpr std::uint32_t kIndexVersion = 1;

std::map<TermId, std::size_t> term_counts(const TokenSequence& tokens) {
  std::map<TermId, std::size_t> counts;
  for (const TermId t : tokens.tokens) ++counts[t];
  return counts;
}

}  // namespace

SparseVector SparseVector::from_entries(std::vector<Entry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.first < b.first; });
  SparseVector v;
  for (const auto& [term, weight] : entries) {
    if (!v.entries_.empty() && v.entries_.back().first == term) {
      v.entries_.back().second += weight;
    } else {
      v.entries_.emplace_back(term, weight);
    }
  }
  std::erase_if(v.entries_, [](const Entry& e) { return e.second == 0.0; });
  for (const auto& e : v.entries_) {
    if (!std::isfinite(e.second)) throw Error("sparse vector weight is not finite");
  }
  return v;
}

double SparseVector::weight(TermId term) const noexcept {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), term,
                                   [](const Entry& e, TermId t) { return e.first < t; });
  return it != entries_.end() && it->first == term ? it->second : 0.0;
}

double dot(const SparseVector& a, const SparseVector& b) noexcept {
  const auto& x = a.entries();
  const auto& y = b.entries();
  double sum = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i].first < y[j].first) {
      ++i;
    } else if (y[j].first < x[i].first) {
      ++j;
    } else {
      sum += x[i].second * y[j].second;
      ++i;
      ++j;
    }
  }
  return sum;
}

void Bm25Params::validate() const {
  if (!(k >= 0.0) || !std::isfinite(k)) throw Error("bm25: k must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw Error("bm25: b must lie in [0, 1]");
}

Bm25Params Bm25Params::named(std::string_view name) {
  if (name == "default") return {};
  if (name == "msmarco-anserini") return msmarco_anserini();
  if (name == "beir-anserini") return beir_anserini();
  throw Error("unknown bm25 preset: " + std::string(name));
}

double Bm25Stats::idf_of(TermId term) const noexcept {
  const auto it = idf.find(term);
  return it != idf.end() ? it->second : bm25_idf(doc_count, 0);
}

double bm25_idf(std::size_t doc_count, std::size_t doc_freq) noexcept {
  const auto n = static_cast<double>(doc_count);
  const auto df = static_cast<double>(doc_freq);
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double bm25_term_weight(double idf, double count, double length, double avg_length,
                        const Bm25Params& params) noexcept {
  const double norm = 1.0 - params.b + params.b * length / avg_length;
  return idf * count * (params.k + 1.0) / (count + params.k * norm);
}

Bm25Stats compute_stats(const Corpus& corpus, const TokenizerConfig& tokenizer) {
  if (corpus.empty()) throw Error("compute_stats: empty corpus");
  Bm25Stats stats;
  stats.doc_count = corpus.size();
  std::unordered_map<TermId, std::size_t> df;
  double total = 0.0;
  for (const auto& p : corpus) {
    const auto tokens = tokenize_passage(p, tokenizer);
    stats.lengths[p.id] = tokens.size();
    total += static_cast<double>(tokens.size());
    for (const auto& [term, count] : term_counts(tokens)) ++df[term];
  }
  stats.avg_length = total / static_cast<double>(stats.doc_count);
  for (const auto& [term, freq] : df) stats.idf[term] = bm25_idf(stats.doc_count, freq);
  return stats;
}

SparseVector encode_passage_tokens(const TokenSequence& tokens, const Bm25Stats& stats,
                                   const Bm25Params& params) {
  std::vector<SparseVector::Entry> entries;
  const auto length = static_cast<double>(tokens.size());
  // A corpus of empty passages has avg_length 0; no term can occur then.
  for (const auto& [term, count] : term_counts(tokens)) {
    entries.emplace_back(term, bm25_term_weight(stats.idf_of(term), static_cast<double>(count),
                                                length, stats.avg_length, params));
  }
  return SparseVector::from_entries(std::move(entries));
}

SparseVector encode_passage(const Passage& passage, const Bm25Stats& stats,
                            const Bm25Params& params, const TokenizerConfig& tokenizer) {
  return encode_passage_tokens(tokenize_passage(passage, tokenizer), stats, params);
}

SparseVector encode_query_tokens(const TokenSequence& tokens) {
  std::vector<SparseVector::Entry> entries;
  for (const auto& [term, count] : term_counts(tokens)) {
    entries.emplace_back(term, static_cast<double>(count));
  }
  return SparseVector::from_entries(std::move(entries));
}

SparseVector encode_query(const Query& query, const TokenizerConfig& tokenizer) {
  return encode_query_tokens(tokenize_query(query, tokenizer));
}

Bm25Index Bm25Index::build(const Corpus& corpus, const Bm25Params& params,
                           const TokenizerConfig& tokenizer) {
  params.validate();
  Bm25Index index;
  index.params_ = params;
  index.tokenizer_ = tokenizer;
  index.stats_ = compute_stats(corpus, tokenizer);
  std::map<TermId, std::vector<Posting>> postings;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    index.passage_ids_.push_back(corpus[d].id);
    const auto vec = encode_passage(corpus[d], index.stats_, params, tokenizer);
    for (const auto& [term, weight] : vec.entries()) {
      postings[term].push_back({static_cast<std::uint32_t>(d), weight});
    }
  }
  index.postings_.assign(std::make_move_iterator(postings.begin()),
                         std::make_move_iterator(postings.end()));
  return index;
}

const std::vector<Bm25Index::Posting>* Bm25Index::postings(TermId term) const {
  const auto it = std::lower_bound(postings_.begin(), postings_.end(), term,
                                   [](const auto& e, TermId t) { return e.first < t; });
  return it != postings_.end() && it->first == term ? &it->second : nullptr;
}

void Bm25Index::score_all(const SparseVector& query, std::vector<double>& scores,
                          std::vector<char>& touched) const {
  scores.assign(size(), 0.0);
  touched.assign(size(), 0);
  // Ascending term order, same as dot(), so the sums are bit-identical.
  for (const auto& [term, qweight] : query.entries()) {
    const auto* list = postings(term);
    if (list == nullptr) continue;
    for (const auto& p : *list) {
      scores[p.doc] += qweight * p.weight;
      touched[p.doc] = 1;
    }
  }
}

SparseVector Bm25Index::passage_vector(std::size_t doc) const {
  std::vector<SparseVector::Entry> entries;
  for (const auto& [term, list] : postings_) {
    const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                     [](const Posting& p, std::size_t d) { return p.doc < d; });
    if (it != list.end() && it->doc == doc) entries.emplace_back(term, it->weight);
  }
  return SparseVector::from_entries(std::move(entries));
}

void Bm25Index::save(const std::filesystem::path& path) const {
  io::BinaryWriter out(path);
  out.put_magic(kIndexMagic);
  out.put<std::uint32_t>(kIndexVersion);
  out.put<double>(params_.k);
  out.put<double>(params_.b);
  out.put<std::uint32_t>(tokenizer_.vocab_size);
  out.put<std::uint64_t>(tokenizer_.query_max_length);
  out.put<std::uint64_t>(tokenizer_.passage_max_length);
  out.put<std::uint64_t>(stats_.doc_count);
  out.put<double>(stats_.avg_length);
  out.put<std::uint64_t>(passage_ids_.size());
  for (const auto& id : passage_ids_) {
    out.put_string(id);
    out.put<std::uint64_t>(stats_.lengths.at(id));
  }
  std::vector<std::pair<TermId, double>> idf(stats_.idf.begin(), stats_.idf.end());
  std::sort(idf.begin(), idf.end());
  out.put<std::uint64_t>(idf.size());
  for (const auto& [term, value] : idf) {
    out.put<std::uint32_t>(term);
    out.put<double>(value);
  }
  out.put<std::uint64_t>(postings_.size());
  for (const auto& [term, list] : postings_) {
    out.put<std::uint32_t>(term);
    out.put<std::uint64_t>(list.size());
    for (const auto& p : list) {
      out.put<std::uint32_t>(p.doc);
      out.put<double>(p.weight);
    }
  }
  out.close();
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic(kIndexMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kIndexVersion) {
    throw Error(path.string() + ": unsupported bm25 index version " + std::to_string(version));
  }
  Bm25Index index;
  index.params_.k = in.get<double>();
  index.params_.b = in.get<double>();
  index.tokenizer_.vocab_size = in.get<std::uint32_t>();
  index.tokenizer_.query_max_length = in.get<std::uint64_t>();
  index.tokenizer_.passage_max_length = in.get<std::uint64_t>();
  index.stats_.doc_count = in.get<std::uint64_t>();
  index.stats_.avg_length = in.get<double>();
  const auto n_docs = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    auto id = in.get_string();
    index.stats_.lengths[id] = in.get<std::uint64_t>();
    index.passage_ids_.push_back(std::move(id));
  }
  const auto n_idf = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_idf; ++i) {
    const auto term = in.get<std::uint32_t>();
    index.stats_.idf[term] = in.get<double>();
  }
  const auto n_terms = in.get<std::uint64_t>();
  index.postings_.reserve(n_terms);
  for (std::uint64_t i = 0; i < n_terms; ++i) {
    const auto term = in.get<std::uint32_t>();
    const auto len = in.get<std::uint64_t>();
    std::vector<Posting> list(len);
    for (auto& p : list) {
      p.doc = in.get<std::uint32_t>();
      p.weight = in.get<double>();
      if (p.doc >= n_docs) throw Error(path.string() + ": posting refers to unknown passage");
    }
    index.postings_.emplace_back(term, std::move(list));
  }
  in.expect_end();
  return index;
}

CandidateList retrieve(const Bm25Index& index, const Query& query, std::size_t k_results) {
  if (k_results < 1) throw Error("retrieve: k_results must be >= 1");
  std::vector<double> scores;
  std::vector<char> touched;
  index.score_all(encode_query(query, index.tokenizer()), scores, touched);
  std::vector<std::pair<std::size_t, double>> hits;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (touched[d]) hits.emplace_back(d, scores[d]);
  }
  const auto& ids = index.passage_ids();
  return rank_hits(query.id, std::move(hits), k_results,
                   [&](std::size_t d) -> const std::string& { return ids[d]; });
}

}  // namespace hyrr
