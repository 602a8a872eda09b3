// SPDX-License-Identifier: Apache-2.0
#include "hyrr/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hyrr/common.hpp"

namespace hyrr {
namespace {

// Decodes one UTF-8 code point starting at text[i]; advances i. Malformed
// bytes decode as themselves so tokenization never fails.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xC0 && b0 < 0xE0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if (b0 >= 0xE0 && b0 < 0xF0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xF0 && b0 < 0xF8) {
    len = 4;
    cp = b0 & 0x07;
  }
  if (len > 1) {
    if (i + len > text.size()) {
      ++i;
      return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(text[i + k]);
      if ((bk & 0xC0) != 0x80) {
        ++i;
        return b0;
      }
      cp = (cp << 6) | (bk & 0x3F);
    }
  }
  i += len;
  return cp;
}

bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
         c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E) || c < 0x20 || c == 0x7F;
  }
  return (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB5 && c != 0xBA) || c == 0xD7 ||
         c == 0xF7 || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0xFF01 && c <= 0xFF0F);
}

// Simple case folding: ASCII, Latin-1, Greek and Cyrillic base blocks.
char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::string word;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t c = next_code_point(text, i);
    if (is_space(c) || is_punct(c)) {
      if (!word.empty()) {
        fn(word);
        word.clear();
      }
    } else {
      append_utf8(word, to_lower(c));
    }
  }
  if (!word.empty()) fn(word);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::uint64_t stable_hash(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

TokenSequence tokenize(std::string_view text, std::uint32_t vocab_size, std::size_t max_length) {
  if (vocab_size < 2) throw Error("tokenize: vocab_size must be >= 2");
  if (max_length < 1) throw Error("tokenize: max_length must be >= 1");
  TokenSequence seq;
  for_each_word(text, [&](const std::string& word) {
    ++seq.original_length;
    if (seq.tokens.size() < max_length) {
      seq.tokens.push_back(static_cast<TermId>(stable_hash(word) % vocab_size));
    }
  });
  return seq;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  for_each_word(text, [&](const std::string& word) { words.push_back(word); });
  return words;
}

std::string encoding_text(const Passage& passage) {
  if (passage.title.empty()) return passage.text;
  return passage.title + ". " + passage.text;
}

void Corpus::add(Passage passage) {
  if (passage.id.empty()) throw Error("passage with empty id");
  if (index_.contains(passage.id)) throw Error("duplicate passage id: " + passage.id);
  index_.emplace(passage.id, passages_.size());
  passages_.push_back(std::move(passage));
}

std::optional<std::size_t> Corpus::position(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Passage* Corpus::find(std::string_view id) const {
  const auto pos = position(id);
  return pos ? &passages_[*pos] : nullptr;
}

const Passage& Corpus::at(std::string_view id) const {
  const Passage* p = find(id);
  if (p == nullptr) throw Error("unknown passage id: " + std::string(id));
  return *p;
}

void QrelSet::set(const std::string& query_id, const std::string& passage_id, int grade) {
  if (grade < 0) throw Error("negative relevance grade for " + query_id + "/" + passage_id);
  judgments_[query_id][passage_id] = grade;
}

int QrelSet::grade(std::string_view query_id, std::string_view passage_id) const {
  const auto q = judgments_.find(query_id);
  if (q == judgments_.end()) return 0;
  const auto d = q->second.find(std::string(passage_id));
  return d == q->second.end() ? 0 : d->second;
}

const std::map<std::string, int>& QrelSet::judgments(std::string_view query_id) const {
  static const std::map<std::string, int> kEmpty;
  const auto q = judgments_.find(query_id);
  return q == judgments_.end() ? kEmpty : q->second;
}

std::vector<std::string> QrelSet::relevant(std::string_view query_id) const {
  std::vector<std::string> out;
  for (const auto& [doc, grade] : judgments(query_id)) {
    if (grade > 0) out.push_back(doc);
  }
  return out;
}

std::size_t QrelSet::relevant_count(std::string_view query_id) const {
  std::size_t n = 0;
  for (const auto& [doc, grade] : judgments(query_id)) n += grade > 0 ? 1 : 0;
  return n;
}

std::size_t QrelSet::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [q, docs] : judgments_) n += docs.size();
  return n;
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Passage p;
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
      p.id = obj.at("id").get<std::string>();
      if (obj.contains("title") && !obj["title"].is_null()) p.title = obj["title"].get<std::string>();
      p.text = obj.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    if (p.id.empty()) throw ParseError(path.string(), line_no, "empty passage id");
    if (p.text.empty()) throw ParseError(path.string(), line_no, "empty passage text");
    if (corpus.position(p.id)) {
      throw ParseError(path.string(), line_no, "duplicate passage id: " + p.id);
    }
    corpus.add(std::move(p));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& p : corpus) {
    nlohmann::ordered_json obj;
    obj["id"] = p.id;
    if (!p.title.empty()) obj["title"] = p.title;
    obj["text"] = p.text;
    out << obj.dump() << '\n';
  }
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<Query> queries;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_no, "missing tab separator");
    Query q{line.substr(0, tab), line.substr(tab + 1)};
    if (q.id.empty()) throw ParseError(path.string(), line_no, "empty query id");
    if (q.text.empty()) throw ParseError(path.string(), line_no, "empty query text");
    if (!seen.emplace(q.id, line_no).second) {
      throw ParseError(path.string(), line_no, "duplicate query id: " + q.id);
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
}

QrelSet load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  QrelSet qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, iter, docid, grade_text, extra;
    if (!(fields >> qid)) continue;  // blank
    if (!(fields >> iter >> docid >> grade_text) || (fields >> extra)) {
      throw ParseError(path.string(), line_no, "expected 'qid 0 docid grade'");
    }
    int grade = 0;
    std::size_t used = 0;
    try {
      grade = std::stoi(grade_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != grade_text.size() || grade_text.empty()) {
      throw ParseError(path.string(), line_no, "non-integer grade '" + grade_text + "'");
    }
    if (grade < 0) throw ParseError(path.string(), line_no, "negative grade");
    qrels.set(qid, docid, grade);
  }
  return qrels;
}

void write_qrels(const QrelSet& qrels, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
  }
}

}  // namespace hyrr
