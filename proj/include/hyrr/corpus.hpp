// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hyrr {

using TermId = std::uint32_t;

struct TokenSequence {
  std::vector<TermId> tokens;
  std::size_t original_length = 0;  // token count before truncation

  bool empty() const noexcept { return tokens.empty(); }
  std::size_t size() const noexcept { return tokens.size(); }
};

/// Hashing tokenizer settings shared by every encoder.
struct TokenizerConfig {
  std::uint32_t vocab_size = 32768;
  std::size_t query_max_length = 64;
  std::size_t passage_max_length = 512;
};

/// FNV-1a 64-bit hash. Stable across runs and platforms.
std::uint64_t stable_hash(std::string_view bytes) noexcept;

/// Lowercases, splits on whitespace and punctuation, hashes each token into
/// [0, vocab_size). Punctuation is a separator and never becomes a token.
TokenSequence tokenize(std::string_view text, std::uint32_t vocab_size,
                       std::size_t max_length);

/// The surface words tokenize() would hash, lowercased, untruncated.
std::vector<std::string> split_words(std::string_view text);

struct Passage {
  std::string id;
  std::string title;
  std::string text;
  bool operator==(const Passage&) const = default;
};

/// "title. text" when the title is nonempty, else the text.
std::string encoding_text(const Passage& passage);

struct Query {
  std::string id;
  std::string text;
  bool operator==(const Query&) const = default;
};

inline TokenSequence tokenize_query(const Query& q, const TokenizerConfig& cfg) {
  return tokenize(q.text, cfg.vocab_size, cfg.query_max_length);
}

inline TokenSequence tokenize_passage(const Passage& p, const TokenizerConfig& cfg) {
  return tokenize(encoding_text(p), cfg.vocab_size, cfg.passage_max_length);
}

/// Ordered passage collection with an id index.
class Corpus {
 public:
  Corpus() = default;

  /// Throws Error naming the id when it is empty or already present.
  void add(Passage passage);

  std::size_t size() const noexcept { return passages_.size(); }
  bool empty() const noexcept { return passages_.empty(); }
  const Passage& operator[](std::size_t i) const { return passages_[i]; }
  const std::vector<Passage>& passages() const noexcept { return passages_; }

  std::optional<std::size_t> position(std::string_view id) const;
  const Passage* find(std::string_view id) const;
  /// Throws Error when the id is unknown.
  const Passage& at(std::string_view id) const;

  auto begin() const noexcept { return passages_.begin(); }
  auto end() const noexcept { return passages_.end(); }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Graded relevance judgments. Absent pairs have grade 0.
class QrelSet {
 public:
  void set(const std::string& query_id, const std::string& passage_id, int grade);
  int grade(std::string_view query_id, std::string_view passage_id) const;

  /// All judgments for one query (grade 0 entries included); empty if none.
  const std::map<std::string, int>& judgments(std::string_view query_id) const;
  /// Passages with grade > 0 for a query.
  std::vector<std::string> relevant(std::string_view query_id) const;
  std::size_t relevant_count(std::string_view query_id) const;

  const std::map<std::string, std::map<std::string, int>, std::less<>>& all() const noexcept {
    return judgments_;
  }
  std::size_t size() const noexcept;

  bool operator==(const QrelSet&) const = default;

 private:
  std::map<std::string, std::map<std::string, int>, std::less<>> judgments_;
};

/// JSONL, one {"id","title","text"} object per line; title optional.
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// TSV "id<TAB>text".
std::vector<Query> load_queries(const std::filesystem::path& path);
void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path);

/// TREC qrels "qid 0 docid grade"; later lines overwrite earlier ones.
QrelSet load_qrels(const std::filesystem::path& path);
void write_qrels(const QrelSet& qrels, const std::filesystem::path& path);

}  // namespace hyrr
