// SPDX-License-Identifier: Apache-2.0
#include "hyrr/qgen.hpp"

#include <cctype>
#include <fstream>
#include <numeric>

#include "hyrr/common.hpp"

namespace hyrr {
namespace {

bool is_ascii_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_ascii_space(s[b])) ++b;
  while (e > b && is_ascii_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::vector<std::string> passage_queries(const Passage& p, std::size_t passage_index,
                                         const GenConfig& config, const TokenizerConfig& tokenizer) {
  std::vector<std::string> out;
  const auto long_enough = [&](const std::string& q) {
    return tokenize(q, tokenizer.vocab_size, tokenizer.query_max_length).original_length >=
           config.min_query_tokens;
  };
  if (config.mode == GenMode::kSentence) {
    for (auto& s : split_sentences(p.text)) {
      if (out.size() >= config.max_per_passage) break;
      if (long_enough(s)) out.push_back(std::move(s));
    }
    return out;
  }
  const auto words = split_words(p.text);
  if (words.empty()) return out;
  Rng rng(mix_seed(config.seed, passage_index));
  for (std::size_t n = 0; n < config.max_per_passage; ++n) {
    const std::size_t hi = std::min(config.crop_max, words.size());
    const std::size_t lo = std::min(config.crop_min, hi);
    const std::size_t len = lo + uniform_index(rng, hi - lo + 1);
    const std::size_t start = uniform_index(rng, words.size() - len + 1);
    auto q = join(words, start, start + len);
    if (long_enough(q)) out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

GenMode parse_gen_mode(std::string_view text) {
  if (text == "sentence") return GenMode::kSentence;
  if (text == "crop") return GenMode::kCrop;
  throw Error("unknown generation mode: " + std::string(text));
}

std::string_view to_string(GenMode mode) {
  return mode == GenMode::kSentence ? "sentence" : "crop";
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '?' || c == '!') && (i + 1 == text.size() || is_ascii_space(text[i + 1]))) {
      auto s = trim(text.substr(start, i - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = i + 1;
    }
  }
  auto tail = trim(text.substr(std::min(start, text.size())));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<SyntheticPair> generate_queries(const Corpus& corpus, const GenConfig& config,
                                            const TokenizerConfig& tokenizer) {
  if (config.max_per_passage < 1) throw Error("generate_queries: max_per_passage must be >= 1");
  if (config.crop_min < 1 || config.crop_min > config.crop_max) {
    throw Error("generate_queries: bad crop length range");
  }
  std::vector<std::size_t> selected(corpus.size());
  std::iota(selected.begin(), selected.end(), std::size_t{0});
  if (config.sample_passages > 0 && config.sample_passages < corpus.size()) {
    Rng rng(mix_seed(config.seed, 0x5a3b1e));
    shuffle(selected, rng);
    selected.resize(config.sample_passages);
    std::sort(selected.begin(), selected.end());
  }
  std::vector<SyntheticPair> out;
  for (const std::size_t i : selected) {
    for (auto& text : passage_queries(corpus[i], i, config, tokenizer)) {
      out.push_back({{"gen-" + std::to_string(out.size() + 1), std::move(text)}, corpus[i].id});
    }
  }
  return out;
}

std::vector<SyntheticPair> round_trip_filter(const std::vector<SyntheticPair>& pairs,
                                             const EncoderParams& de0, const DenseIndex& index,
                                             const TokenizerConfig& tokenizer, std::size_t threads) {
  std::vector<char> keep(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& pair = pairs[i];
    const auto source = index.position(pair.source_passage_id);
    if (!source) throw Error("round_trip_filter: unknown source passage " + pair.source_passage_id);
    const auto scores = index.cosine_all(encode(de0, tokenize_query(pair.query, tokenizer)));
    const auto& ids = index.passage_ids();
    std::size_t best = 0;
    for (std::size_t d = 1; d < scores.size(); ++d) {
      if (scores[d] > scores[best] || (scores[d] == scores[best] && ids[d] < ids[best])) best = d;
    }
    keep[i] = best == *source ? 1 : 0;
  });
  std::vector<SyntheticPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (keep[i]) out.push_back(pairs[i]);
  }
  return out;
}

std::vector<SyntheticPair> round_trip_filter(const std::vector<SyntheticPair>& pairs,
                                             const EncoderParams& de0, const Corpus& corpus,
                                             const TokenizerConfig& tokenizer, std::size_t threads) {
  return round_trip_filter(pairs, de0, DenseIndex::build(de0, corpus, tokenizer, threads), tokenizer,
                           threads);
}

std::vector<TrainPair> to_train_pairs(const std::vector<SyntheticPair>& pairs, const Corpus& corpus) {
  std::vector<TrainPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.query, corpus.at(p.source_passage_id)});
  return out;
}

nlohmann::ordered_json FilterReport::to_json() const {
  nlohmann::ordered_json j;
  j["before"] = before;
  j["after"] = after;
  j["kept_ratio"] = kept_ratio();
  return j;
}

IterativeTrainResult iterative_train(const Corpus& corpus, const GenConfig& gen,
                                     const DeTrainConfig& de0_config, const DeTrainConfig& de1_config,
                                     const TokenizerConfig& tokenizer, std::size_t threads) {
  if (corpus.empty()) throw Error("iterative_train: empty corpus");
  IterativeTrainResult r;
  r.generated = generate_queries(corpus, gen, tokenizer);
  if (r.generated.empty()) throw Error("iterative_train: generator produced no queries");
  r.de0 = train_de(to_train_pairs(r.generated, corpus), de0_config, tokenizer).params;
  r.filtered = round_trip_filter(r.generated, r.de0, corpus, tokenizer, threads);
  r.report = {r.generated.size(), r.filtered.size()};
  if (r.filtered.empty()) {
    throw Error("iterative_train: round-trip filter removed every pair; inspect the generator "
                "settings or the DE0 training config");
  }
  r.de1 = de1_config.epochs == 0
              ? r.de0
              : train_de(to_train_pairs(r.filtered, corpus), de1_config, tokenizer, r.de0).params;
  return r;
}

void write_pairs(const std::vector<SyntheticPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : pairs) {
    if (p.query.text.find_first_of("\t\n") != std::string::npos) {
      throw Error("write_pairs: query text contains a tab or newline");
    }
    out << p.query.text << '\t' << p.source_passage_id << '\n';
  }
}

std::vector<SyntheticPair> load_pairs(const std::filesystem::path& path, std::string_view id_prefix) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<SyntheticPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_no, "missing tab separator");
    SyntheticPair p{{std::string(id_prefix) + std::to_string(line_no), line.substr(0, tab)}, line.substr(tab + 1)};
    if (p.query.text.empty() || p.source_passage_id.empty()) {
      throw ParseError(path.string(), line_no, "empty query or passage id");
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hyrr
