// SPDX-License-Identifier: Apache-2.0
#include "hyrr/synthetic.hpp"

#include <numeric>
#include <set>

#include "hyrr/common.hpp"

namespace hyrr {
namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::vector<std::string> make_words(std::size_t count, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w;
    const std::size_t syllables = 2 + uniform_index(rng, 2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w.push_back(kConsonants[uniform_index(rng, kConsonants.size())]);
      w.push_back(kVowels[uniform_index(rng, kVowels.size())]);
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::size_t in_range(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

// Picks k distinct values from [0, n) in draw order.
std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(k);
  return pool;
}

struct PassagePlan {
  std::vector<std::size_t> concepts;
  std::vector<int> forms;  // 0, 1, or 2 for both
};

}  // namespace

void SyntheticCorpusSpec::validate() const {
  if (n_passages < 1 || n_train_queries + n_test_queries < 1 || synonym_table_size < 1 ||
      filler_pool_size < 1) {
    throw Error("synthetic spec: counts must be >= 1");
  }
  if (n_train_queries + n_test_queries > n_passages) {
    throw Error("synthetic spec: more queries than passages");
  }
  if (!(lexical_fraction >= 0.0 && lexical_fraction <= 1.0)) {
    throw Error("synthetic spec: lexical_fraction must be in [0, 1]");
  }
  if (passage_concepts_min < 1 || passage_concepts_min > passage_concepts_max ||
      passage_concepts_max > synonym_table_size) {
    throw Error("synthetic spec: bad passage concept range");
  }
  if (fillers_min > fillers_max) throw Error("synthetic spec: bad filler range");
  if (query_concepts < 1 || query_concepts > passage_concepts_min) {
    throw Error("synthetic spec: query_concepts must be in [1, passage_concepts_min]");
  }
  if (semantic_kept_terms > query_concepts) {
    throw Error("synthetic spec: semantic_kept_terms exceeds query_concepts");
  }
  if (!(both_forms_rate >= 0.0 && both_forms_rate < 1.0)) {
    throw Error("synthetic spec: both_forms_rate must be in [0, 1)");
  }
}

SyntheticCorpusSpec SyntheticCorpusSpec::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "n_passages",         "n_train_queries", "n_test_queries",       "synonym_table_size",
      "lexical_fraction",   "seed",            "filler_pool_size",     "passage_concepts_min",
      "passage_concepts_max", "fillers_min",   "fillers_max",          "query_concepts",
      "both_forms_rate", "semantic_kept_terms"};
  if (!j.is_object()) throw Error("synthetic spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw Error("synthetic spec: unknown key '" + key + "'");
  }
  SyntheticCorpusSpec s;
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("n_passages", s.n_passages);
  get("n_train_queries", s.n_train_queries);
  get("n_test_queries", s.n_test_queries);
  get("synonym_table_size", s.synonym_table_size);
  get("lexical_fraction", s.lexical_fraction);
  get("seed", s.seed);
  get("filler_pool_size", s.filler_pool_size);
  get("passage_concepts_min", s.passage_concepts_min);
  get("passage_concepts_max", s.passage_concepts_max);
  get("fillers_min", s.fillers_min);
  get("fillers_max", s.fillers_max);
  get("query_concepts", s.query_concepts);
  get("both_forms_rate", s.both_forms_rate);
  get("semantic_kept_terms", s.semantic_kept_terms);
  s.validate();
  return s;
}

nlohmann::ordered_json SyntheticCorpusSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_passages"] = n_passages;
  j["n_train_queries"] = n_train_queries;
  j["n_test_queries"] = n_test_queries;
  j["synonym_table_size"] = synonym_table_size;
  j["lexical_fraction"] = lexical_fraction;
  j["seed"] = seed;
  j["filler_pool_size"] = filler_pool_size;
  j["passage_concepts_min"] = passage_concepts_min;
  j["passage_concepts_max"] = passage_concepts_max;
  j["fillers_min"] = fillers_min;
  j["fillers_max"] = fillers_max;
  j["query_concepts"] = query_concepts;
  j["both_forms_rate"] = both_forms_rate;
  j["semantic_kept_terms"] = semantic_kept_terms;
  return j;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x5e));
  const auto words = make_words(2 * spec.synonym_table_size + spec.filler_pool_size, rng);
  const auto form = [&](std::size_t concept_id, int f) -> const std::string& {
    return words[2 * concept_id + static_cast<std::size_t>(f)];
  };
  const auto filler = [&](std::size_t i) -> const std::string& { return words[2 * spec.synonym_table_size + i]; };

  SyntheticCorpus out;
  std::vector<PassagePlan> plans(spec.n_passages);
  for (std::size_t p = 0; p < spec.n_passages; ++p) {
    auto& plan = plans[p];
    plan.concepts = sample_distinct(rng, spec.synonym_table_size,
                                    in_range(rng, spec.passage_concepts_min, spec.passage_concepts_max));
    std::vector<std::string> body;
    for (const std::size_t c : plan.concepts) {
      if (uniform_unit(rng) < spec.both_forms_rate) {
        plan.forms.push_back(2);
        body.push_back(form(c, 0));
        body.push_back(form(c, 1));
      } else {
        plan.forms.push_back(static_cast<int>(uniform_index(rng, 2)));
        const std::size_t repeats = 1 + uniform_index(rng, 2);
        for (std::size_t r = 0; r < repeats; ++r) body.push_back(form(c, plan.forms.back()));
      }
    }
    const std::size_t n_fill = in_range(rng, spec.fillers_min, spec.fillers_max);
    for (std::size_t f = 0; f < n_fill; ++f) body.push_back(filler(uniform_index(rng, spec.filler_pool_size)));
    shuffle(body, rng);

    std::string text;
    std::size_t i = 0;
    while (i < body.size()) {
      const std::size_t len = std::min(body.size() - i, in_range(rng, 6, 10));
      for (std::size_t w = 0; w < len; ++w) {
        if (!text.empty()) text.push_back(' ');
        text += body[i + w];
      }
      text.push_back('.');
      i += len;
    }
    out.corpus.add({"p" + std::to_string(p), "", std::move(text)});
  }

  const std::size_t n_queries = spec.n_train_queries + spec.n_test_queries;
  const auto targets = sample_distinct(rng, spec.n_passages, n_queries);
  const auto n_lexical_of = [&](std::size_t n) {
    return static_cast<std::size_t>(std::llround(spec.lexical_fraction * static_cast<double>(n)));
  };
  // Exact lexical counts per split, at shuffled positions.
  std::vector<char> lexical(n_queries, 0);
  for (const auto& [begin, n] : {std::pair{std::size_t{0}, spec.n_train_queries},
                                 std::pair{spec.n_train_queries, spec.n_test_queries}}) {
    const auto picks = sample_distinct(rng, n, n_lexical_of(n));
    for (const std::size_t k : picks) lexical[begin + k] = 1;
  }

  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto& plan = plans[targets[q]];
    // Semantic queries draw from concepts the passage states in one form only,
    // so a switched form never matches the target.
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < plan.concepts.size(); ++i) {
      if (lexical[q] || plan.forms[i] != 2) eligible.push_back(i);
    }
    if (eligible.empty()) {
      eligible.resize(plan.concepts.size());
      std::iota(eligible.begin(), eligible.end(), std::size_t{0});
    }
    // Draw order is random, so the first picks are the kept ones.
    const auto picks = sample_distinct(rng, eligible.size(), std::min(spec.query_concepts, eligible.size()));
    std::string text;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      const std::size_t slot = eligible[picks[k]];
      int f = plan.forms[slot] == 2 ? static_cast<int>(uniform_index(rng, 2)) : plan.forms[slot];
      if (!lexical[q] && k >= spec.semantic_kept_terms) f = 1 - f;
      if (!text.empty()) text.push_back(' ');
      text += form(plan.concepts[slot], f);
    }
    const bool train = q < spec.n_train_queries;
    const std::string id = train ? "train-" + std::to_string(q) : "test-" + std::to_string(q - spec.n_train_queries);
    (train ? out.train_queries : out.test_queries).push_back({id, std::move(text)});
    (train ? out.train_qrels : out.test_qrels).set(id, "p" + std::to_string(targets[q]), 1);
    if (lexical[q]) out.lexical_query_ids.push_back(id);
  }
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_corpus(data.corpus, dir / "corpus.jsonl");
  write_queries(data.train_queries, dir / "train_queries.tsv");
  write_qrels(data.train_qrels, dir / "train_qrels.txt");
  write_queries(data.test_queries, dir / "test_queries.tsv");
  write_qrels(data.test_qrels, dir / "test_qrels.txt");
}

}  // namespace hyrr
