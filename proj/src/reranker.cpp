// SPDX-License-Identifier: Apache-2.0
#include "hyrr/reranker.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "hyrr/common.hpp"
#include "hyrr/io.hpp"

namespace hyrr {
namespace {

constexpr std::string_view kRerankerMagic = "HYRRRRNK";
constexpr std::uint32_t kRerankerVersion = 1;

double dot_n(const double* a, const double* b, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

void check_tokens(const RerankerParams& params, const TokenSequence& seq, const char* what) {
  if (seq.empty()) throw Error(std::string("score_pair: empty ") + what);
  for (const TermId t : seq.tokens) {
    if (t >= params.vocab_size) throw Error("score_pair: token outside reranker vocabulary");
  }
}

// x (row vector, length d) times W (d x d) into out.
void row_times(const double* x, const std::vector<double>& w, std::size_t d, double* out) {
  std::fill(out, out + d, 0.0);
  for (std::size_t l = 0; l < d; ++l) {
    const double xl = x[l];
    const double* wrow = w.data() + l * d;
    for (std::size_t k = 0; k < d; ++k) out[k] += xl * wrow[k];
  }
}

// W (d x d) times column vector x into out.
void times_col(const std::vector<double>& w, const double* x, std::size_t d, double* out) {
  for (std::size_t l = 0; l < d; ++l) out[l] = dot_n(w.data() + l * d, x, d);
}

void softmax_inplace(double* v, std::size_t n) {
  double m = v[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, v[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    v[j] = std::exp(v[j] - m);
    z += v[j];
  }
  for (std::size_t j = 0; j < n; ++j) v[j] /= z;
}

std::vector<double>& grad_row(RerankerGrad& g, TermId t, std::size_t d) {
  auto& row = g.embeddings[t];
  if (row.empty()) row.assign(d, 0.0);
  return row;
}

}  // namespace

RerankerParams init_reranker(std::uint32_t vocab_size, std::size_t dim, std::uint64_t seed,
                             const RerankerInit& init) {
  if (dim < 1) throw Error("reranker dim must be >= 1");
  if (vocab_size < 2) throw Error("reranker vocab_size must be >= 2");
  RerankerParams p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.seed = seed;
  p.query_gated = init.query_gated;
  Rng rng(seed);
  p.embeddings.resize(static_cast<std::size_t>(vocab_size) * dim);
  for (auto& x : p.embeddings) x = uniform_real(rng, -init.embedding_scale, init.embedding_scale);
  for (auto* m : {&p.w_q, &p.w_k, &p.w_v}) {
    m->assign(dim * dim, 0.0);
    for (std::size_t l = 0; l < dim; ++l) {
      for (std::size_t k = 0; k < dim; ++k) {
        (*m)[l * dim + k] = (l == k ? 1.0 : 0.0) +
                            uniform_real(rng, -init.projection_noise, init.projection_noise);
      }
    }
  }
  p.w.assign(dim, 1.0);
  p.b0 = 0.0;
  return p;
}

RerankerParams constant_reranker(std::uint32_t vocab_size, std::size_t dim, double b0, bool query_gated) {
  RerankerParams p;
  p.vocab_size = vocab_size;
  p.dim = dim;
  p.query_gated = query_gated;
  p.embeddings.assign(static_cast<std::size_t>(vocab_size) * dim, 0.0);
  p.w_q.assign(dim * dim, 0.0);
  p.w_k.assign(dim * dim, 0.0);
  p.w_v.assign(dim * dim, 0.0);
  p.w.assign(dim, 0.0);
  p.b0 = b0;
  return p;
}

double score_pair(const RerankerParams& params, const TokenSequence& query, const TokenSequence& passage) {
  check_tokens(params, query, "query");
  check_tokens(params, passage, "passage");
  const std::size_t d = params.dim;
  const std::size_t nq = query.size();
  const std::size_t np = passage.size();
  std::vector<double> q(nq * d), k(np * d), v(np * d);
  for (std::size_t i = 0; i < nq; ++i) row_times(params.row(query.tokens[i]).data(), params.w_q, d, &q[i * d]);
  for (std::size_t j = 0; j < np; ++j) {
    row_times(params.row(passage.tokens[j]).data(), params.w_k, d, &k[j * d]);
    row_times(params.row(passage.tokens[j]).data(), params.w_v, d, &v[j * d]);
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> a(np), h(d);
  double total = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < np; ++j) a[j] = dot_n(&q[i * d], &k[j * d], d) * inv_sqrt_d;
    softmax_inplace(a.data(), np);
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t j = 0; j < np; ++j) {
      for (std::size_t c = 0; c < d; ++c) h[c] += a[j] * v[j * d + c];
    }
    const auto e = params.row(query.tokens[i]);
    for (std::size_t c = 0; c < d; ++c) total += params.w[c] * (params.query_gated ? e[c] : 1.0) * h[c];
  }
  return total / static_cast<double>(nq) + params.b0;
}

double listwise_loss(std::span<const double> scores, std::span<const int> labels, std::vector<double>& grad) {
  if (scores.size() != labels.size()) throw Error("listwise_loss: scores/labels length mismatch");
  if (scores.empty()) throw Error("listwise_loss: empty list");
  double label_sum = 0.0;
  for (const int y : labels) {
    if (y < 0) throw Error("listwise_loss: negative label");
    label_sum += y;
  }
  if (label_sum == 0.0) throw Error("listwise_loss: every label is zero");
  double m = scores[0];
  for (const double s : scores) m = std::max(m, s);
  double z = 0.0;
  for (const double s : scores) z += std::exp(s - m);
  const double lse = m + std::log(z);
  double loss = 0.0;
  grad.assign(scores.size(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (labels[j] != 0) loss -= labels[j] * (scores[j] - lse);
    grad[j] = label_sum * std::exp(scores[j] - lse) - labels[j];
  }
  return loss;
}

double listwise_loss(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> unused;
  return listwise_loss(scores, labels, unused);
}

RerankerGrad::RerankerGrad(std::size_t dim)
    : w_q(dim * dim, 0.0), w_k(dim * dim, 0.0), w_v(dim * dim, 0.0), w(dim, 0.0) {}

void RerankerGrad::add(const RerankerGrad& other) {
  for (const auto& [t, row] : other.embeddings) {
    auto& mine = embeddings[t];
    if (mine.empty()) {
      mine = row;
    } else {
      for (std::size_t k = 0; k < row.size(); ++k) mine[k] += row[k];
    }
  }
  for (std::size_t i = 0; i < w_q.size(); ++i) {
    w_q[i] += other.w_q[i];
    w_k[i] += other.w_k[i];
    w_v[i] += other.w_v[i];
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += other.w[i];
  b0 += other.b0;
}

void RerankerGrad::scale(double factor) {
  for (auto& [t, row] : embeddings) {
    for (auto& x : row) x *= factor;
  }
  for (auto* m : {&w_q, &w_k, &w_v, &w}) {
    for (auto& x : *m) x *= factor;
  }
  b0 *= factor;
}

namespace {

// Forward pass over one list. Per query token: Q_i = e Wq, R_i = Wk Q_i,
// g_i = w * c_i, U_i = Wv g_i; then logit_ij = e_pj . R_i / sqrt(d) and
// g_i . V_j = e_pj . U_i, so passage-side projections are never formed.
struct ListForward {
  std::size_t d = 0;
  std::size_t nq = 0;
  std::vector<double> qm, r, g, u, c;
  std::vector<double> scores;
  std::vector<std::vector<double>> attn, vals;

  ListForward(const RerankerParams& params, const TokenSequence& query,
              std::span<const TokenSequence* const> passages, bool keep) {
    check_tokens(params, query, "query");
    d = params.dim;
    nq = query.size();
    const double inv_nq = 1.0 / static_cast<double>(nq);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    qm.resize(nq * d);
    r.resize(nq * d);
    g.resize(nq * d);
    u.resize(nq * d);
    c.resize(nq * d);
    for (std::size_t i = 0; i < nq; ++i) {
      const auto e = params.row(query.tokens[i]);
      row_times(e.data(), params.w_q, d, &qm[i * d]);
      times_col(params.w_k, &qm[i * d], d, &r[i * d]);
      for (std::size_t k = 0; k < d; ++k) {
        c[i * d + k] = params.query_gated ? e[k] : 1.0;
        g[i * d + k] = params.w[k] * c[i * d + k];
      }
      times_col(params.w_v, &g[i * d], d, &u[i * d]);
    }
    const std::size_t n = passages.size();
    scores.resize(n);
    if (keep) {
      attn.resize(n);
      vals.resize(n);
    }
    std::vector<double> a_buf, t_buf;
    for (std::size_t p = 0; p < n; ++p) {
      const TokenSequence& ps = *passages[p];
      check_tokens(params, ps, "passage");
      const std::size_t np = ps.size();
      auto& a_all = keep ? attn[p] : a_buf;
      auto& t_all = keep ? vals[p] : t_buf;
      a_all.resize(nq * np);
      t_all.resize(nq * np);
      double total = 0.0;
      for (std::size_t i = 0; i < nq; ++i) {
        double* a = &a_all[i * np];
        double* t = &t_all[i * np];
        for (std::size_t j = 0; j < np; ++j) {
          const double* ep = params.row(ps.tokens[j]).data();
          a[j] = dot_n(ep, &r[i * d], d) * inv_sqrt_d;
          t[j] = dot_n(ep, &u[i * d], d);
        }
        softmax_inplace(a, np);
        for (std::size_t j = 0; j < np; ++j) total += a[j] * t[j];
      }
      scores[p] = total * inv_nq + params.b0;
    }
  }
};

}  // namespace

std::vector<double> score_list(const RerankerParams& params, const TokenSequence& query,
                               std::span<const TokenSequence* const> passages) {
  return ListForward(params, query, passages, false).scores;
}

std::vector<double> CrossAttentionScorer::score_many(const TokenSequence& query,
                                                     std::span<const TokenSequence* const> passages) const {
  return score_list(params_, query, passages);
}

double list_loss_and_grad(const RerankerParams& params, const TokenSequence& query,
                          std::span<const TokenSequence* const> passages, std::span<const int> labels,
                          RerankerGrad* grad, std::vector<double>* scores_out) {
  if (passages.size() != labels.size()) throw Error("list_loss_and_grad: passages/labels mismatch");
  const ListForward fw(params, query, passages, grad != nullptr);
  const std::size_t d = fw.d;
  const std::size_t nq = fw.nq;
  const double inv_nq = 1.0 / static_cast<double>(nq);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& scores = fw.scores;
  const auto& attn = fw.attn;
  const auto& vals = fw.vals;
  const auto& qm = fw.qm;
  const auto& r = fw.r;
  const auto& g = fw.g;
  const auto& u = fw.u;
  const auto& c = fw.c;
  const std::size_t n = passages.size();

  std::vector<double> dscore;
  const double loss = listwise_loss(scores, labels, dscore);
  if (scores_out != nullptr) *scores_out = scores;
  if (grad == nullptr) return loss;

  std::vector<double> dr(nq * d, 0.0), du(nq * d, 0.0);
  std::vector<double> da;
  for (std::size_t p = 0; p < n; ++p) {
    const double delta = dscore[p];
    if (delta == 0.0) continue;
    const TokenSequence& ps = *passages[p];
    const std::size_t np = ps.size();
    grad->b0 += delta;
    const double up = delta * inv_nq;
    da.resize(np);
    for (std::size_t i = 0; i < nq; ++i) {
      const double* a = &attn[p][i * np];
      const double* t = &vals[p][i * np];
      double avg = 0.0;
      for (std::size_t j = 0; j < np; ++j) {
        da[j] = up * t[j];
        avg += a[j] * da[j];
      }
      for (std::size_t j = 0; j < np; ++j) {
        const double dlogit = a[j] * (da[j] - avg) * inv_sqrt_d;
        const double dval = up * a[j];
        const double* ep = params.row(ps.tokens[j]).data();
        auto& gep = grad_row(*grad, ps.tokens[j], d);
        for (std::size_t k = 0; k < d; ++k) {
          du[i * d + k] += dval * ep[k];
          dr[i * d + k] += dlogit * ep[k];
          gep[k] += dval * u[i * d + k] + dlogit * r[i * d + k];
        }
      }
    }
  }

  std::vector<double> dq(d), dg(d);
  for (std::size_t i = 0; i < nq; ++i) {
    const double* dri = &dr[i * d];
    const double* dui = &du[i * d];
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dg.begin(), dg.end(), 0.0);
    for (std::size_t l = 0; l < d; ++l) {
      for (std::size_t k = 0; k < d; ++k) {
        grad->w_k[l * d + k] += dri[l] * qm[i * d + k];
        dq[k] += params.w_k[l * d + k] * dri[l];
        grad->w_v[l * d + k] += dui[l] * g[i * d + k];
        dg[k] += params.w_v[l * d + k] * dui[l];
      }
    }
    const auto e = params.row(query.tokens[i]);
    auto& geq = grad_row(*grad, query.tokens[i], d);
    for (std::size_t k = 0; k < d; ++k) {
      grad->w[k] += dg[k] * c[i * d + k];
      if (params.query_gated) geq[k] += dg[k] * params.w[k];
    }
    for (std::size_t l = 0; l < d; ++l) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        grad->w_q[l * d + k] += e[l] * dq[k];
        acc += params.w_q[l * d + k] * dq[k];
      }
      geq[l] += acc;
    }
  }
  return loss;
}

void SamplingWindow::validate() const {
  if (skip >= depth) throw Error("sampling window: skip must be < depth");
  if (n_negatives > depth - skip) throw Error("sampling window: n_negatives exceeds window size");
}

CandidateSet build_candidate_lists(const RunFile& run, const QrelSet& qrels, const SamplingWindow& window,
                                   std::uint64_t seed) {
  window.validate();
  CandidateSet out;
  for (const auto& [qid, ranking] : run.rankings) {
    const auto& judged = qrels.judgments(qid);
    const std::string* positive = nullptr;
    int best = 0;
    for (const auto& [doc, grade] : judged) {
      if (grade > best) {
        best = grade;
        positive = &doc;
      }
    }
    if (positive == nullptr) {
      ++out.dropped_queries;
      continue;
    }
    CandidateList list{qid, {}};
    CandidateItem pos{*positive, 0.0, 1, best, 0};
    std::vector<std::size_t> pool;  // 0-based positions in the ranking
    const std::size_t end = std::min(window.depth, ranking.size());
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      if (ranking[r].doc_id == *positive) {
        pos.retriever_rank = r + 1;
        pos.score = ranking[r].score;
      }
      if (r >= window.skip && r < end && qrels.grade(qid, ranking[r].doc_id) == 0) pool.push_back(r);
    }
    Rng rng(mix_seed(seed, stable_hash(qid)));
    if (pool.size() < window.n_negatives) {
      out.short_pool_queries.push_back(qid);
    } else {
      // Partial Fisher-Yates: the first n_negatives slots are the sample.
      for (std::size_t i = 0; i < window.n_negatives; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      }
      pool.resize(window.n_negatives);
    }
    std::sort(pool.begin(), pool.end());
    list.items.push_back(pos);
    for (const std::size_t r : pool) {
      list.items.push_back({ranking[r].doc_id, ranking[r].score, list.items.size() + 1, 0, r + 1});
    }
    out.lists.push_back(std::move(list));
  }
  return out;
}

void write_candidate_lists(const std::vector<CandidateList>& lists, const std::filesystem::path& path) {
  std::string text;
  for (const auto& list : lists) {
    nlohmann::ordered_json j;
    j["query_id"] = list.query_id;
    j["items"] = nlohmann::ordered_json::array();
    for (const auto& item : list.items) {
      nlohmann::ordered_json it;
      it["passage_id"] = item.passage_id;
      it["label"] = item.label;
      it["retriever_rank"] = item.retriever_rank;
      j["items"].push_back(std::move(it));
    }
    text += j.dump();
    text += '\n';
  }
  io::write_text(path, text);
}

std::vector<CandidateList> load_candidate_lists(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<CandidateList> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CandidateList list{j.at("query_id").get<std::string>(), {}};
      for (const auto& it : j.at("items")) {
        const int label = it.at("label").get<int>();
        if (label < 0) throw ParseError(path.string(), line_no, "negative label");
        list.items.push_back({it.at("passage_id").get<std::string>(), 0.0, list.items.size() + 1, label,
                              it.at("retriever_rank").get<std::size_t>()});
      }
      out.push_back(std::move(list));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

void RerankerTrainConfig::validate() const {
  if (batch_size < 1) throw Error("reranker config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("reranker config: learning_rate must be > 0");
  if (dim < 1) throw Error("reranker config: dim must be >= 1");
}

QueryLookup make_query_lookup(const std::vector<Query>& queries) {
  QueryLookup out;
  for (const auto& q : queries) out.emplace(q.id, q);
  return out;
}

namespace {

struct PreparedList {
  TokenSequence query;
  std::vector<const TokenSequence*> passages;
  std::vector<int> labels;
};

class TokenCache {
 public:
  TokenCache(const Corpus& corpus, const TokenizerConfig& tokenizer) : corpus_(corpus), tokenizer_(tokenizer) {}

  const TokenSequence& passage(const std::string& id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) {
      const Passage* p = corpus_.find(id);
      if (p == nullptr) throw Error("passage " + id + " is not in the corpus");
      it = cache_.emplace(id, tokenize_passage(*p, tokenizer_)).first;
    }
    return it->second;
  }

 private:
  const Corpus& corpus_;
  TokenizerConfig tokenizer_;
  std::unordered_map<std::string, TokenSequence> cache_;
};

std::vector<PreparedList> prepare_lists(const std::vector<CandidateList>& lists, TokenCache& cache,
                                        const QueryLookup& queries, const TokenizerConfig& tokenizer) {
  std::vector<PreparedList> out;
  for (const auto& list : lists) {
    const bool any_positive =
        std::any_of(list.items.begin(), list.items.end(), [](const CandidateItem& i) { return i.label > 0; });
    if (!any_positive) continue;
    const auto q = queries.find(list.query_id);
    if (q == queries.end()) throw Error("no query text for training list " + list.query_id);
    PreparedList p{tokenize_query(q->second, tokenizer), {}, {}};
    for (const auto& item : list.items) {
      p.passages.push_back(&cache.passage(item.passage_id));
      p.labels.push_back(item.label);
    }
    out.push_back(std::move(p));
  }
  return out;
}

double mean_loss(const RerankerParams& params, const std::vector<PreparedList>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& l : data) total += list_loss_and_grad(params, l.query, l.passages, l.labels, nullptr);
  return total / static_cast<double>(data.size());
}

void apply_update(RerankerParams& p, const RerankerGrad& g, double lr) {
  for (const auto& [t, row] : g.embeddings) {
    double* e = p.embeddings.data() + static_cast<std::size_t>(t) * p.dim;
    for (std::size_t k = 0; k < p.dim; ++k) e[k] -= lr * row[k];
  }
  for (std::size_t i = 0; i < p.w_q.size(); ++i) {
    p.w_q[i] -= lr * g.w_q[i];
    p.w_k[i] -= lr * g.w_k[i];
    p.w_v[i] -= lr * g.w_v[i];
  }
  for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] -= lr * g.w[i];
  p.b0 -= lr * g.b0;
}

}  // namespace

double mean_list_loss(const RerankerParams& params, const std::vector<CandidateList>& lists, const Corpus& corpus,
                      const QueryLookup& queries, const TokenizerConfig& tokenizer) {
  TokenCache cache(corpus, tokenizer);
  return mean_loss(params, prepare_lists(lists, cache, queries, tokenizer));
}

RerankerTrainResult train_reranker(const std::vector<CandidateList>& lists, const Corpus& corpus,
                                   const QueryLookup& queries, const RerankerTrainConfig& config,
                                   const TokenizerConfig& tokenizer, const std::optional<RerankerParams>& init) {
  if (lists.empty()) throw Error("train_reranker: no candidate lists");
  config.validate();
  RerankerTrainResult result;
  result.params = init ? *init : init_reranker(tokenizer.vocab_size, config.dim, config.seed, config.init);
  if (result.params.vocab_size != tokenizer.vocab_size) {
    throw Error("train_reranker: reranker vocabulary does not match tokenizer");
  }
  TokenCache cache(corpus, tokenizer);
  const auto data = prepare_lists(lists, cache, queries, tokenizer);
  if (data.empty()) throw Error("train_reranker: no list has a positive label");
  result.initial_loss = mean_loss(result.params, data);

  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  std::size_t pass = 0;
  const std::size_t batch = config.batch_size;
  std::vector<std::size_t> picked(batch);
  std::vector<RerankerGrad> grads;
  std::vector<double> losses(batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(config.seed, pass++));
        shuffle(order, rng);
        cursor = 0;
      }
      picked[b] = order[cursor++];
    }
    grads.assign(batch, RerankerGrad(result.params.dim));
    parallel_for(batch, config.threads, [&](std::size_t b) {
      const auto& l = data[picked[b]];
      losses[b] = list_loss_and_grad(result.params, l.query, l.passages, l.labels, &grads[b]);
    });
    RerankerGrad total(result.params.dim);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      total.add(grads[b]);
      loss += losses[b];
    }
    if (!std::isfinite(loss)) {
      throw Error("train_reranker: loss diverged at step " + std::to_string(step) + "; lower the learning rate");
    }
    total.scale(1.0 / static_cast<double>(batch));
    result.step_losses.push_back(loss / static_cast<double>(batch));
    apply_update(result.params, total, config.learning_rate);
  }
  result.final_loss = config.steps == 0 ? result.initial_loss : mean_loss(result.params, data);
  return result;
}

RunFile rerank(const PairScorer& scorer, const RunFile& run, const Corpus& corpus, const QueryLookup& queries,
               std::size_t top_k, const TokenizerConfig& tokenizer, std::size_t threads, std::string run_tag) {
  if (top_k < 1) throw Error("rerank: top_k must be >= 1");
  std::vector<const std::string*> qids;
  std::vector<const std::vector<RankedDoc>*> rankings;
  for (const auto& [qid, ranking] : run.rankings) {
    for (const auto& doc : ranking) {
      if (corpus.find(doc.doc_id) == nullptr) throw Error("rerank: passage " + doc.doc_id + " is not in the corpus");
    }
    qids.push_back(&qid);
    rankings.push_back(&ranking);
  }
  std::vector<std::vector<RankedDoc>> out(qids.size());
  parallel_for(qids.size(), threads, [&](std::size_t qi) {
    const auto& ranking = *rankings[qi];
    if (ranking.empty()) return;
    const auto q = queries.find(*qids[qi]);
    if (q == queries.end()) throw Error("rerank: no query text for " + *qids[qi]);
    const auto qtokens = tokenize_query(q->second, tokenizer);
    const std::size_t block = std::min(top_k, ranking.size());
    std::vector<TokenSequence> ptokens(block);
    std::vector<const TokenSequence*> ptrs(block);
    for (std::size_t r = 0; r < block; ++r) {
      ptokens[r] = tokenize_passage(corpus.at(ranking[r].doc_id), tokenizer);
      ptrs[r] = &ptokens[r];
    }
    const auto scores = scorer.score_many(qtokens, ptrs);
    std::vector<std::pair<double, std::size_t>> scored(block);
    for (std::size_t r = 0; r < block; ++r) scored[r] = {scores[r], r};
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;  // stable: ties keep the original rank order
    });
    auto& dst = out[qi];
    for (const auto& [s, r] : scored) dst.push_back({ranking[r].doc_id, s});
    const double floor = scored.back().first;
    for (std::size_t r = block; r < ranking.size(); ++r) {
      dst.push_back({ranking[r].doc_id, floor - static_cast<double>(r - block + 1)});
    }
  });
  RunFile result;
  result.run_tag = std::move(run_tag);
  for (std::size_t qi = 0; qi < qids.size(); ++qi) result.rankings[*qids[qi]] = std::move(out[qi]);
  return result;
}

void save_reranker(const RerankerParams& params, const std::filesystem::path& path) {
  io::BinaryWriter out(path);
  out.put_magic(kRerankerMagic);
  out.put<std::uint32_t>(kRerankerVersion);
  out.put<std::uint32_t>(params.vocab_size);
  out.put<std::uint64_t>(params.dim);
  out.put<std::uint64_t>(params.seed);
  out.put<std::uint8_t>(params.query_gated ? 1 : 0);
  out.put_span(std::span<const double>(params.embeddings));
  out.put_span(std::span<const double>(params.w_q));
  out.put_span(std::span<const double>(params.w_k));
  out.put_span(std::span<const double>(params.w_v));
  out.put_span(std::span<const double>(params.w));
  out.put<double>(params.b0);
  out.close();
}

RerankerParams load_reranker(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic(kRerankerMagic);
  if (const auto v = in.get<std::uint32_t>(); v != kRerankerVersion) {
    throw Error(path.string() + ": unsupported reranker format version " + std::to_string(v));
  }
  RerankerParams p;
  p.vocab_size = in.get<std::uint32_t>();
  p.dim = in.get<std::uint64_t>();
  p.seed = in.get<std::uint64_t>();
  p.query_gated = in.get<std::uint8_t>() != 0;
  if (p.dim == 0 || p.dim > (1u << 12)) throw Error(path.string() + ": bad reranker dim");
  p.embeddings.resize(static_cast<std::size_t>(p.vocab_size) * p.dim);
  p.w_q.resize(p.dim * p.dim);
  p.w_k.resize(p.dim * p.dim);
  p.w_v.resize(p.dim * p.dim);
  p.w.resize(p.dim);
  in.get_span(std::span<double>(p.embeddings));
  in.get_span(std::span<double>(p.w_q));
  in.get_span(std::span<double>(p.w_k));
  in.get_span(std::span<double>(p.w_v));
  in.get_span(std::span<double>(p.w));
  p.b0 = in.get<double>();
  in.expect_end();
  return p;
}

}  // namespace hyrr
