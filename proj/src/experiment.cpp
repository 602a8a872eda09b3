// SPDX-License-Identifier: Apache-2.0
#include "hyrr/experiment.hpp"

#include <memory>
#include <set>

#include <spdlog/spdlog.h>

#include "hyrr/common.hpp"
#include "hyrr/hybrid_retriever.hpp"
#include "hyrr/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace hyrr {
namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error("config: '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error("config: unknown key '" + key + "' in '" + std::string(section) + "'");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const json& j, const char* key) {
  const fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::string_view training_name(DenseTraining t) {
  switch (t) {
    case DenseTraining::kSupervised:
      return "supervised";
    case DenseTraining::kGenerated:
      return "generated";
    case DenseTraining::kBoth:
      return "both";
  }
  return "?";
}

DenseTraining parse_dense_training(std::string_view text) {
  if (text == "supervised") return DenseTraining::kSupervised;
  if (text == "generated") return DenseTraining::kGenerated;
  if (text == "both") return DenseTraining::kBoth;
  throw Error("config: unknown dense training source '" + std::string(text) + "'");
}

template <typename F>
auto stage(std::string_view name, F&& body) {
  try {
    spdlog::info("stage {}", name);
    return body();
  } catch (const std::exception& e) {
    throw Error("stage " + std::string(name) + ": " + e.what());
  }
}

std::vector<std::string> ids_of(const std::vector<Query>& queries) {
  std::vector<std::string> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(q.id);
  return out;
}

std::vector<TrainPair> supervised_pairs(const std::vector<Query>& queries, const QrelSet& qrels,
                                        const Corpus& corpus) {
  std::vector<TrainPair> out;
  for (const auto& q : queries) {
    for (const auto& doc : qrels.relevant(q.id)) out.push_back({q, corpus.at(doc)});
  }
  return out;
}

// Everything both pipelines share: data, the three retrievers and lambda.
class Pipeline {
 public:
  explicit Pipeline(const ExperimentConfig& config) : cfg_(config), manifest_(config.workdir) {
    fs::create_directories(cfg_.workdir);
    const auto config_path = cfg_.workdir / "config.json";
    io::write_text(config_path, cfg_.to_json().dump(2) + "\n");
    manifest_.add(config_path, "config");
  }

  void prepare() {
    stage("data", [&] { load_data(); });
    stage("index", [&] { build_bm25(); });
    stage("train-de", [&] { train_dense(); });
    stage("tune-lambda", [&] { tune(); });
  }

  fs::path out(const std::string& name) const { return cfg_.workdir / name; }

  RunFile retrieve(RetrieverKind kind, const std::vector<Query>& queries, std::size_t depth,
                   const std::string& file) {
    std::vector<CandidateList> lists(queries.size());
    parallel_for(queries.size(), cfg_.threads, [&](std::size_t i) {
      switch (kind) {
        case RetrieverKind::kBm25:
          lists[i] = hyrr::retrieve(*bm25_, queries[i], depth);
          break;
        case RetrieverKind::kDense:
          lists[i] = de_retrieve(*encoder_, *dense_, queries[i], depth, cfg_.tokenizer);
          break;
        case RetrieverKind::kHybrid:
          lists[i] = hybrid_retrieve(*hybrid_, queries[i], depth);
          break;
      }
    });
    auto run = to_run(lists, std::string(to_string(kind)));
    write_run(run, out(file));
    manifest_.add(out(file), "run");
    return run;
  }

  std::vector<CandidateList> training_lists(TrainingSource source) {
    const auto build = [&](RetrieverKind kind) {
      const auto name = std::string(to_string(kind));
      const auto run = train_run(kind);
      auto set = build_candidate_lists(run, train_qrels_, cfg_.window, cfg_.sampling_seed());
      if (!set.short_pool_queries.empty()) {
        spdlog::warn("{} training lists: {} queries had fewer negatives than requested", name,
                     set.short_pool_queries.size());
      }
      write_candidate_lists(set.lists, out("lists." + name + ".jsonl"));
      manifest_.add(out("lists." + name + ".jsonl"), "candidate-lists");
      return set.lists;
    };
    switch (source) {
      case TrainingSource::kBm25:
        return build(RetrieverKind::kBm25);
      case TrainingSource::kDense:
        return build(RetrieverKind::kDense);
      case TrainingSource::kHybrid:
        return build(RetrieverKind::kHybrid);
      case TrainingSource::kMixed: {
        const auto a = build(RetrieverKind::kBm25);
        const auto b = build(RetrieverKind::kDense);
        auto mixed = mix_training_data(a, b, cfg_.mixing_seed());
        write_candidate_lists(mixed.lists, out("lists.mixed.jsonl"));
        manifest_.add(out("lists.mixed.jsonl"), "candidate-lists");
        return std::move(mixed.lists);
      }
    }
    throw Error("unknown training source");
  }

  RerankerTrainResult train_reranker_on(const std::vector<CandidateList>& lists, const std::string& name) {
    auto rc = cfg_.reranker;
    rc.seed = cfg_.reranker_seed();
    rc.threads = cfg_.threads;
    auto result = hyrr::train_reranker(lists, corpus_, query_lookup_, rc, cfg_.tokenizer);
    spdlog::info("reranker {}: loss {:.4f} -> {:.4f}", name, result.initial_loss, result.final_loss);
    save_reranker(result.params, out("reranker." + name + ".bin"));
    manifest_.add(out("reranker." + name + ".bin"), "reranker");
    return result;
  }

  RunFile rerank_run(const RerankerParams& params, const RunFile& run, const std::string& file) {
    const CrossAttentionScorer scorer(params);
    auto result = hyrr::rerank(scorer, run, corpus_, query_lookup_, cfg_.rerank_top_k, cfg_.tokenizer, cfg_.threads,
                               "rerank");
    write_run(result, out(file));
    manifest_.add(out(file), "run");
    return result;
  }

  std::map<std::string, MetricReport> evaluate_run(const RunFile& run) const {
    std::map<std::string, MetricReport> out;
    const auto ids = ids_of(test_queries_);
    for (const auto& m : cfg_.metrics) out.emplace(m.name(), evaluate(m, run, test_qrels_, &ids));
    return out;
  }

  std::size_t test_depth() const { return std::max(cfg_.run_depth, cfg_.rerank_top_k); }

  void write_json(const std::string& name, const ojson& j, std::string_view role) {
    io::write_text(out(name), j.dump(2) + "\n");
    manifest_.add(out(name), role);
  }

  const ExperimentConfig& cfg_;
  Manifest manifest_;
  Corpus corpus_;
  std::vector<Query> train_queries_, test_queries_;
  QrelSet train_qrels_, test_qrels_;
  QueryLookup query_lookup_;
  std::shared_ptr<const Bm25Index> bm25_;
  std::shared_ptr<const EncoderParams> encoder_;
  std::shared_ptr<const DenseIndex> dense_;
  std::optional<HybridIndex> hybrid_;
  double lambda_ = 0.0;
  std::optional<FilterReport> filter_;

 private:
  RunFile train_run(RetrieverKind kind) {
    const auto name = std::string(to_string(kind));
    auto it = train_runs_.find(kind);
    if (it == train_runs_.end()) {
      it = train_runs_.emplace(kind, retrieve(kind, train_queries_, cfg_.window.depth, "run.train." + name + ".trec"))
               .first;
    }
    return it->second;
  }

  void load_data() {
    if (cfg_.data) {
      const auto& d = *cfg_.data;
      corpus_ = load_corpus(d.corpus);
      train_queries_ = load_queries(d.train_queries);
      train_qrels_ = load_qrels(d.train_qrels);
      test_queries_ = load_queries(d.test_queries);
      test_qrels_ = load_qrels(d.test_qrels);
      for (const auto& p : {d.corpus, d.train_queries, d.train_qrels, d.test_queries, d.test_qrels}) {
        manifest_.add(p, "input");
      }
    } else {
      auto spec = *cfg_.synthetic;
      if (cfg_.synthetic_seed_from_experiment) spec.seed = cfg_.seed;
      auto synth = make_synthetic_corpus(spec);
      const auto dir = out("data");
      write_synthetic_corpus(synth, dir);
      for (const char* f : {"corpus.jsonl", "train_queries.tsv", "train_qrels.txt", "test_queries.tsv",
                            "test_qrels.txt"}) {
        manifest_.add(dir / f, "synthetic-data");
      }
      corpus_ = std::move(synth.corpus);
      train_queries_ = std::move(synth.train_queries);
      test_queries_ = std::move(synth.test_queries);
      train_qrels_ = std::move(synth.train_qrels);
      test_qrels_ = std::move(synth.test_qrels);
    }
    if (corpus_.empty()) throw Error("corpus is empty");
    if (test_queries_.empty()) throw Error("no test queries");
    query_lookup_ = make_query_lookup(train_queries_);
    for (const auto& q : test_queries_) {
      if (!query_lookup_.emplace(q.id, q).second) throw Error("query id " + q.id + " is both train and test");
    }
    const std::size_t holdout =
        static_cast<std::size_t>(std::llround(cfg_.tune_holdout * static_cast<double>(train_queries_.size())));
    tune_queries_.assign(train_queries_.end() - static_cast<std::ptrdiff_t>(holdout), train_queries_.end());
    fit_queries_.assign(train_queries_.begin(), train_queries_.end() - static_cast<std::ptrdiff_t>(holdout));
  }

  void build_bm25() {
    bm25_ = std::make_shared<const Bm25Index>(Bm25Index::build(corpus_, cfg_.bm25, cfg_.tokenizer));
    bm25_->save(out("bm25.idx"));
    manifest_.add(out("bm25.idx"), "bm25-index");
  }

  void train_dense() {
    auto de_cfg = cfg_.dense;
    de_cfg.seed = cfg_.dense_seed();
    const auto labeled = supervised_pairs(fit_queries_, train_qrels_, corpus_);
    EncoderParams params;
    if (cfg_.dense_training == DenseTraining::kSupervised) {
      if (labeled.empty()) throw Error("no labeled training pairs for the dual encoder");
      params = train_de(labeled, de_cfg, cfg_.tokenizer).params;
    } else {
      auto gen = cfg_.qgen;
      gen.seed = cfg_.qgen_seed();
      auto de1_cfg = de_cfg;
      de1_cfg.epochs = cfg_.de1_epochs;
      IterativeTrainResult it;
      if (cfg_.dense_training == DenseTraining::kGenerated) {
        it = iterative_train(corpus_, gen, de_cfg, de1_cfg, cfg_.tokenizer, cfg_.threads);
      } else {
        // DE1 also sees the labeled pairs.
        it = iterative_train(corpus_, gen, de_cfg, [&] {
          auto c = de1_cfg;
          c.epochs = 0;
          return c;
        }(), cfg_.tokenizer, cfg_.threads);
        auto pairs = to_train_pairs(it.filtered, corpus_);
        pairs.insert(pairs.end(), labeled.begin(), labeled.end());
        if (cfg_.de1_epochs > 0) it.de1 = train_de(pairs, de1_cfg, cfg_.tokenizer, it.de0).params;
      }
      write_pairs(it.generated, out("qgen.generated.tsv"));
      write_pairs(it.filtered, out("qgen.filtered.tsv"));
      manifest_.add(out("qgen.generated.tsv"), "generated-pairs");
      manifest_.add(out("qgen.filtered.tsv"), "filtered-pairs");
      save_encoder(it.de0, out("encoder.de0.bin"));
      manifest_.add(out("encoder.de0.bin"), "encoder");
      filter_ = it.report;
      write_json("filter.json", it.report.to_json(), "filter-report");
      params = std::move(it.de1);
    }
    save_encoder(params, out("encoder.bin"));
    manifest_.add(out("encoder.bin"), "encoder");
    encoder_ = std::make_shared<const EncoderParams>(std::move(params));
    dense_ = std::make_shared<const DenseIndex>(DenseIndex::build(*encoder_, corpus_, cfg_.tokenizer, cfg_.threads));
    dense_->save(out("dense.idx"));
    manifest_.add(out("dense.idx"), "dense-index");
  }

  void tune() {
    ojson j;
    if (cfg_.lambda) {
      lambda_ = *cfg_.lambda;
      j["lambda"] = lambda_;
      j["tuned"] = false;
    } else {
      const auto grid = cfg_.lambda_grid.empty() ? default_lambda_grid() : cfg_.lambda_grid;
      const auto& queries = tune_queries_.empty() ? train_queries_ : tune_queries_;
      const HybridIndex probe(bm25_, encoder_, dense_, 0.0);
      const auto t = tune_lambda(probe, queries, train_qrels_, grid, cfg_.tune_metric, cfg_.threads);
      lambda_ = t.best_lambda;
      j["lambda"] = lambda_;
      j["tuned"] = true;
      j["metric"] = cfg_.tune_metric.name();
      j["best_value"] = t.best_value;
      j["curve"] = ojson::array();
      for (const auto& [l, v] : t.curve) j["curve"].push_back({l, v});
    }
    spdlog::info("lambda = {}", lambda_);
    hybrid_.emplace(bm25_, encoder_, dense_, lambda_);
    write_json("lambda.json", j, "lambda");
  }

  std::vector<Query> fit_queries_, tune_queries_;
  std::map<RetrieverKind, RunFile> train_runs_;
};

ojson reports_json(const std::map<std::string, MetricReport>& reports) {
  ojson j = ojson::object();
  for (const auto& [name, r] : reports) j[name] = to_json(r);
  return j;
}

}  // namespace

RetrieverKind parse_retriever(std::string_view text) {
  if (text == "bm25") return RetrieverKind::kBm25;
  if (text == "de" || text == "dense") return RetrieverKind::kDense;
  if (text == "hybrid") return RetrieverKind::kHybrid;
  throw Error("unknown retriever '" + std::string(text) + "' (expected bm25, de or hybrid)");
}

std::string_view to_string(RetrieverKind kind) {
  switch (kind) {
    case RetrieverKind::kBm25:
      return "bm25";
    case RetrieverKind::kDense:
      return "de";
    case RetrieverKind::kHybrid:
      return "hybrid";
  }
  return "?";
}

TrainingSource parse_training_source(std::string_view text) {
  if (text == "mixed") return TrainingSource::kMixed;
  switch (parse_retriever(text)) {
    case RetrieverKind::kBm25:
      return TrainingSource::kBm25;
    case RetrieverKind::kDense:
      return TrainingSource::kDense;
    case RetrieverKind::kHybrid:
      return TrainingSource::kHybrid;
  }
  throw Error("unknown training source");
}

std::string_view to_string(TrainingSource source) {
  switch (source) {
    case TrainingSource::kBm25:
      return "bm25";
    case TrainingSource::kDense:
      return "de";
    case TrainingSource::kHybrid:
      return "hybrid";
    case TrainingSource::kMixed:
      return "mixed";
  }
  return "?";
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  check_keys(j, "config", {"seed", "threads", "workdir", "data", "synthetic", "tokenizer", "bm25", "dense", "qgen",
                           "hybrid", "sampling", "reranker", "first_stage", "run_depth", "metrics", "ablation"});
  ExperimentConfig c;
  try {
    read_opt(j, "seed", c.seed);
    read_opt(j, "threads", c.threads);
    if (j.contains("workdir")) c.workdir = resolve(base, j, "workdir");
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data", {"corpus", "train_queries", "train_qrels", "test_queries", "test_qrels"});
      c.data = DataPaths{resolve(base, d, "corpus"), resolve(base, d, "train_queries"),
                         resolve(base, d, "train_qrels"), resolve(base, d, "test_queries"),
                         resolve(base, d, "test_qrels")};
    }
    if (j.contains("synthetic")) {
      c.synthetic = SyntheticCorpusSpec::from_json(j.at("synthetic"));
      c.synthetic_seed_from_experiment = !j.at("synthetic").contains("seed");
    }
    if (j.contains("tokenizer")) {
      const auto& t = j.at("tokenizer");
      check_keys(t, "tokenizer", {"vocab_size", "query_max_length", "passage_max_length"});
      read_opt(t, "vocab_size", c.tokenizer.vocab_size);
      read_opt(t, "query_max_length", c.tokenizer.query_max_length);
      read_opt(t, "passage_max_length", c.tokenizer.passage_max_length);
    }
    if (j.contains("bm25")) {
      const auto& b = j.at("bm25");
      check_keys(b, "bm25", {"preset", "k", "b"});
      if (b.contains("preset")) c.bm25 = Bm25Params::named(b.at("preset").get<std::string>());
      read_opt(b, "k", c.bm25.k);
      read_opt(b, "b", c.bm25.b);
    }
    if (j.contains("dense")) {
      const auto& d = j.at("dense");
      check_keys(d, "dense",
                 {"dim", "batch_size", "epochs", "learning_rate", "temperature", "training", "de1_epochs"});
      read_opt(d, "dim", c.dense.dim);
      read_opt(d, "batch_size", c.dense.batch_size);
      read_opt(d, "epochs", c.dense.epochs);
      read_opt(d, "learning_rate", c.dense.learning_rate);
      read_opt(d, "temperature", c.dense.temperature);
      read_opt(d, "de1_epochs", c.de1_epochs);
      if (d.contains("training")) c.dense_training = parse_dense_training(d.at("training").get<std::string>());
    }
    if (j.contains("qgen")) {
      const auto& g = j.at("qgen");
      check_keys(g, "qgen",
                 {"mode", "max_per_passage", "sample_passages", "min_query_tokens", "crop_min", "crop_max"});
      if (g.contains("mode")) c.qgen.mode = parse_gen_mode(g.at("mode").get<std::string>());
      read_opt(g, "max_per_passage", c.qgen.max_per_passage);
      read_opt(g, "sample_passages", c.qgen.sample_passages);
      read_opt(g, "min_query_tokens", c.qgen.min_query_tokens);
      read_opt(g, "crop_min", c.qgen.crop_min);
      read_opt(g, "crop_max", c.qgen.crop_max);
    }
    if (j.contains("hybrid")) {
      const auto& h = j.at("hybrid");
      check_keys(h, "hybrid", {"lambda", "lambda_grid", "tune_metric", "tune_holdout"});
      if (h.contains("lambda") && !h.at("lambda").is_null()) c.lambda = h.at("lambda").get<double>();
      read_opt(h, "lambda_grid", c.lambda_grid);
      read_opt(h, "tune_holdout", c.tune_holdout);
      if (h.contains("tune_metric")) c.tune_metric = MetricId::parse(h.at("tune_metric").get<std::string>());
    }
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      check_keys(s, "sampling", {"preset", "skip", "depth", "n_negatives"});
      if (s.contains("preset")) {
        const auto name = s.at("preset").get<std::string>();
        if (name == "supervised") {
          c.window = SamplingWindow::supervised();
        } else if (name == "zero_shot") {
          c.window = SamplingWindow::zero_shot();
        } else {
          throw Error("config: unknown sampling preset '" + name + "'");
        }
      }
      read_opt(s, "skip", c.window.skip);
      read_opt(s, "depth", c.window.depth);
      read_opt(s, "n_negatives", c.window.n_negatives);
    }
    if (j.contains("reranker")) {
      const auto& r = j.at("reranker");
      check_keys(r, "reranker",
                 {"type", "dim", "steps", "batch_size", "learning_rate", "embedding_scale", "projection_noise",
                  "query_gated", "training_retriever", "top_k"});
      if (r.contains("type")) {
        const auto type = r.at("type").get<std::string>();
        if (type != "cross_attention" && type != "none") throw Error("config: unknown reranker type '" + type + "'");
        c.use_reranker = type != "none";
      }
      read_opt(r, "dim", c.reranker.dim);
      read_opt(r, "steps", c.reranker.steps);
      read_opt(r, "batch_size", c.reranker.batch_size);
      read_opt(r, "learning_rate", c.reranker.learning_rate);
      read_opt(r, "embedding_scale", c.reranker.init.embedding_scale);
      read_opt(r, "projection_noise", c.reranker.init.projection_noise);
      read_opt(r, "query_gated", c.reranker.init.query_gated);
      read_opt(r, "top_k", c.rerank_top_k);
      if (r.contains("training_retriever")) {
        c.training_source = parse_training_source(r.at("training_retriever").get<std::string>());
      }
    }
    if (j.contains("first_stage")) c.first_stage = parse_retriever(j.at("first_stage").get<std::string>());
    read_opt(j, "run_depth", c.run_depth);
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j.at("metrics")) c.metrics.push_back(MetricId::parse(m.get<std::string>()));
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      check_keys(a, "ablation", {"mixed"});
      read_opt(a, "mixed", c.ablation_mixed);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (!data && !synthetic) throw Error("config: needs either 'data' or 'synthetic'");
  if (data && synthetic) throw Error("config: 'data' and 'synthetic' are mutually exclusive");
  if (threads < 1) throw Error("config: threads must be >= 1");
  bm25.validate();
  dense.validate();
  window.validate();
  reranker.validate();
  if (lambda && !(*lambda >= 0.0)) throw Error("config: lambda must be >= 0");
  for (const double l : lambda_grid) {
    if (!(l >= 0.0)) throw Error("config: lambda grid values must be >= 0");
  }
  if (!(tune_holdout >= 0.0 && tune_holdout < 1.0)) throw Error("config: tune_holdout must be in [0, 1)");
  if (rerank_top_k < 1 || run_depth < 1) throw Error("config: top_k and run_depth must be >= 1");
  if (metrics.empty()) throw Error("config: no metrics");
}

ojson ExperimentConfig::to_json() const {
  // The workdir is left out so artifacts do not depend on where they live.
  ojson j;
  j["seed"] = seed;
  j["threads"] = threads;
  if (data) {
    j["data"] = {{"corpus", data->corpus.string()},
                 {"train_queries", data->train_queries.string()},
                 {"train_qrels", data->train_qrels.string()},
                 {"test_queries", data->test_queries.string()},
                 {"test_qrels", data->test_qrels.string()}};
  }
  if (synthetic) {
    auto s = *synthetic;
    if (synthetic_seed_from_experiment) s.seed = seed;
    j["synthetic"] = s.to_json();
  }
  j["tokenizer"] = {{"vocab_size", tokenizer.vocab_size},
                    {"query_max_length", tokenizer.query_max_length},
                    {"passage_max_length", tokenizer.passage_max_length}};
  j["bm25"] = {{"k", bm25.k}, {"b", bm25.b}};
  j["dense"] = {{"dim", dense.dim},
                {"batch_size", dense.batch_size},
                {"epochs", dense.epochs},
                {"learning_rate", dense.learning_rate},
                {"temperature", dense.temperature},
                {"training", training_name(dense_training)},
                {"de1_epochs", de1_epochs}};
  j["qgen"] = {{"mode", to_string(qgen.mode)},
               {"max_per_passage", qgen.max_per_passage},
               {"sample_passages", qgen.sample_passages},
               {"min_query_tokens", qgen.min_query_tokens},
               {"crop_min", qgen.crop_min},
               {"crop_max", qgen.crop_max}};
  ojson h;
  h["lambda"] = lambda ? ojson(*lambda) : ojson(nullptr);
  h["lambda_grid"] = lambda_grid.empty() ? default_lambda_grid() : lambda_grid;
  h["tune_metric"] = tune_metric.name();
  h["tune_holdout"] = tune_holdout;
  j["hybrid"] = h;
  j["sampling"] = {{"skip", window.skip}, {"depth", window.depth}, {"n_negatives", window.n_negatives}};
  j["reranker"] = {{"type", use_reranker ? "cross_attention" : "none"},
                   {"dim", reranker.dim},
                   {"steps", reranker.steps},
                   {"batch_size", reranker.batch_size},
                   {"learning_rate", reranker.learning_rate},
                   {"embedding_scale", reranker.init.embedding_scale},
                   {"projection_noise", reranker.init.projection_noise},
                   {"query_gated", reranker.init.query_gated},
                   {"training_retriever", to_string(training_source)},
                   {"top_k", rerank_top_k}};
  j["first_stage"] = to_string(first_stage);
  j["run_depth"] = run_depth;
  std::vector<std::string> names;
  for (const auto& m : metrics) names.push_back(m.name());
  j["metrics"] = names;
  j["ablation"] = {{"mixed", ablation_mixed}};
  return j;
}

void Manifest::add(const fs::path& path, std::string_view role) {
  const auto rel = path.lexically_relative(root_);
  const bool inside = !rel.empty() && *rel.begin() != "..";
  entries_.emplace_back(inside ? rel.generic_string() : path.generic_string(), std::string(role),
                        io::sha256_file(path));
}

ojson Manifest::to_json() const {
  ojson j;
  j["files"] = ojson::array();
  for (const auto& [path, role, hash] : entries_) j["files"].push_back({{"path", path}, {"role", role}, {"sha256", hash}});
  return j;
}

fs::path Manifest::write() const {
  const auto path = root_ / "manifest.json";
  io::write_text(path, to_json().dump(2) + "\n");
  return path;
}

ojson ExperimentReport::to_json() const {
  ojson j;
  j["lambda"] = lambda;
  j["first_stage"] = reports_json(first_stage);
  if (!reranked.empty()) j["reranked"] = reports_json(reranked);
  j["table"] = table.to_json();
  if (filter) j["filter"] = filter->to_json();
  if (reranker) {
    j["reranker"] = {{"initial_loss", reranker->initial_loss},
                     {"final_loss", reranker->final_loss},
                     {"steps", reranker->step_losses.size()}};
  }
  return j;
}

MixedLists mix_training_data(const std::vector<CandidateList>& lists_a, const std::vector<CandidateList>& lists_b,
                             std::uint64_t seed) {
  if (lists_a.empty() || lists_b.empty()) throw Error("mix_training_data: both inputs must be nonempty");
  std::map<std::string, const CandidateList*> a, b;
  for (const auto& l : lists_a) a.emplace(l.query_id, &l);
  for (const auto& l : lists_b) b.emplace(l.query_id, &l);
  std::set<std::string> ids;
  for (const auto& [id, l] : a) ids.insert(id);
  for (const auto& [id, l] : b) ids.insert(id);
  MixedLists out;
  for (const auto& id : ids) {
    const auto ia = a.find(id);
    const auto ib = b.find(id);
    char pick;
    if (ia == a.end()) {
      pick = 'b';
    } else if (ib == b.end()) {
      pick = 'a';
    } else {
      pick = (mix_seed(seed, stable_hash(id)) & 1) == 0 ? 'a' : 'b';
    }
    out.lists.push_back(*(pick == 'a' ? ia->second : ib->second));
    out.source.push_back(pick);
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  Pipeline p(config);
  p.prepare();
  ExperimentReport report;
  report.lambda = p.lambda_;
  report.filter = p.filter_;
  const auto fs_name = std::string(to_string(config.first_stage));
  const auto first = stage("retrieve", [&] {
    return p.retrieve(config.first_stage, p.test_queries_, p.test_depth(), "run.test." + fs_name + ".trec");
  });
  report.first_stage = stage("eval", [&] { return p.evaluate_run(first); });
  report.table.title = "test queries";
  report.table.row_labels.push_back(fs_name);
  for (const auto& m : config.metrics) report.table.column_labels.push_back(m.name());
  std::vector<double> row;
  for (const auto& m : config.metrics) row.push_back(report.first_stage.at(m.name()).mean);
  report.table.values.push_back(row);

  if (config.use_reranker) {
    const auto source = std::string(to_string(config.training_source));
    const auto lists = stage("gen-train", [&] { return p.training_lists(config.training_source); });
    report.reranker = stage("train-reranker", [&] { return p.train_reranker_on(lists, source); });
    const auto reranked = stage("rerank", [&] {
      return p.rerank_run(report.reranker->params, first, "run.test." + fs_name + ".rerank-" + source + ".trec");
    });
    report.reranked = stage("eval", [&] { return p.evaluate_run(reranked); });
    report.table.row_labels.push_back(fs_name + " + " + source + " reranker");
    row.clear();
    for (const auto& m : config.metrics) row.push_back(report.reranked.at(m.name()).mean);
    report.table.values.push_back(row);
  }
  p.write_json("report.json", report.to_json(), "report");
  report.manifest = p.manifest_.write();
  return report;
}

ojson AblationReport::to_json() const {
  ojson j;
  j["lambda"] = lambda;
  j["tables"] = ojson::array();
  for (const auto& t : tables) j["tables"].push_back(t.to_json());
  if (mixed) {
    j["mixed"] = ojson::array();
    for (const auto& t : *mixed) j["mixed"].push_back(t.to_json());
  }
  return j;
}

double AblationReport::value(std::string_view metric, std::string_view row, std::string_view column) const {
  const auto lookup = [&](const std::vector<ResultsTable>& ts) -> std::optional<double> {
    for (const auto& t : ts) {
      if (t.title != metric) continue;
      for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
        if (t.row_labels[r] != row) continue;
        for (std::size_t c = 0; c < t.column_labels.size(); ++c) {
          if (t.column_labels[c] == column) return t.values[r][c];
        }
      }
    }
    return std::nullopt;
  };
  if (auto v = lookup(tables)) return *v;
  if (mixed) {
    if (auto v = lookup(*mixed)) return *v;
  }
  throw Error("ablation report has no cell " + std::string(metric) + "/" + std::string(row) + "/" +
              std::string(column));
}

AblationReport ablation_matrix(const ExperimentConfig& config) {
  config.validate();
  Pipeline p(config);
  p.prepare();
  AblationReport report;
  report.lambda = p.lambda_;

  const std::vector<RetrieverKind> retrievers{RetrieverKind::kBm25, RetrieverKind::kDense, RetrieverKind::kHybrid};
  const std::vector<std::string> columns{"BM25", "DE", "Hybrid"};
  std::vector<RunFile> test_runs;
  stage("retrieve", [&] {
    for (const auto kind : retrievers) {
      test_runs.push_back(p.retrieve(kind, p.test_queries_, p.test_depth(),
                                     "run.test." + std::string(to_string(kind)) + ".trec"));
    }
  });

  // evaluations[row][column] -> metric reports
  using Cell = std::map<std::string, MetricReport>;
  std::vector<std::vector<Cell>> cells;
  std::vector<std::string> rows{"none"};
  cells.emplace_back();
  for (const auto& run : test_runs) cells.back().push_back(p.evaluate_run(run));

  struct Variant {
    std::string label;
    TrainingSource source;
  };
  std::vector<Variant> variants{{"BM25RR", TrainingSource::kBm25},
                                {"DERR", TrainingSource::kDense},
                                {"HYRR", TrainingSource::kHybrid}};
  if (config.ablation_mixed) variants.push_back({"Mixed", TrainingSource::kMixed});
  for (const auto& v : variants) {
    const auto name = std::string(to_string(v.source));
    const auto lists = stage("gen-train", [&] { return p.training_lists(v.source); });
    const auto trained = stage("train-reranker", [&] { return p.train_reranker_on(lists, name); });
    rows.push_back(v.label);
    cells.emplace_back();
    for (std::size_t r = 0; r < retrievers.size(); ++r) {
      const auto run = stage("rerank", [&] {
        return p.rerank_run(trained.params, test_runs[r],
                            "run.test." + std::string(to_string(retrievers[r])) + ".rerank-" + name + ".trec");
      });
      cells.back().push_back(p.evaluate_run(run));
    }
  }

  for (const auto& m : config.metrics) {
    ResultsTable main{m.name(), {}, columns, {}};
    ResultsTable mixed{m.name(), {}, columns, {}};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::vector<double> values;
      for (const auto& cell : cells[r]) values.push_back(cell.at(m.name()).mean);
      auto& target = rows[r] == "Mixed" ? mixed : main;
      target.row_labels.push_back(rows[r]);
      target.values.push_back(std::move(values));
    }
    report.tables.push_back(std::move(main));
    if (config.ablation_mixed) {
      if (!report.mixed) report.mixed.emplace();
      report.mixed->push_back(std::move(mixed));
    }
  }
  p.write_json("ablation.json", report.to_json(), "report");
  report.manifest = p.manifest_.write();
  return report;
}

}  // namespace hyrr
