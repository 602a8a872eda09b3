// SPDX-License-Identifier: Apache-2.0
// hyrr: command-line front end for the retrieval and reranking pipeline.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

#include "hyrr/common.hpp"
#include "hyrr/corpus.hpp"
#include "hyrr/dense_encoder.hpp"
#include "hyrr/eval.hpp"
#include "hyrr/experiment.hpp"
#include "hyrr/hybrid_retriever.hpp"
#include "hyrr/io.hpp"
#include "hyrr/qgen.hpp"
#include "hyrr/reranker.hpp"
#include "hyrr/sparse_bm25.hpp"
#include "hyrr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace hyrr;

namespace {

struct Globals {
  std::string config;
  std::string workdir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

std::optional<ExperimentConfig> load_config(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  auto c = ExperimentConfig::load(g.config);
  if (!g.workdir.empty()) c.workdir = g.workdir;
  if (g.seed) c.seed = *g.seed;
  c.threads = g.threads;
  return c;
}

TokenizerConfig tokenizer_of(const Globals& g) {
  const auto c = load_config(g);
  return c ? c->tokenizer : TokenizerConfig{};
}

std::uint64_t seed_of(const Globals& g) {
  if (g.seed) return *g.seed;
  const auto c = load_config(g);
  return c ? c->seed : 0;
}

// Output paths are relative to --workdir when one is given.
fs::path out_path(const Globals& g, const std::string& p) {
  if (g.workdir.empty() || fs::path(p).is_absolute()) return p;
  fs::create_directories(g.workdir);
  return fs::path(g.workdir) / p;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!piece.empty()) out.push_back(std::stod(piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

HybridIndex open_hybrid(const std::string& bm25, const std::string& encoder, const std::string& dense,
                        double lambda) {
  return HybridIndex(std::make_shared<const Bm25Index>(Bm25Index::load(bm25)),
                     std::make_shared<const EncoderParams>(load_encoder(encoder)),
                     std::make_shared<const DenseIndex>(DenseIndex::load(dense)), lambda);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid BM25 + dual-encoder retrieval with reranker training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--workdir", g.workdir, "Directory for outputs");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  spdlog::set_default_logger(spdlog::stderr_color_st("hyrr"));
  app.parse_complete_callback([&] { spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn); });

  const auto command = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };

  // make-synth
  auto* synth = command("make-synth", "Write the synthetic corpus, queries and qrels");
  SyntheticCorpusSpec spec;
  std::string synth_out = "data";
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--passages", spec.n_passages);
  synth->add_option("--train-queries", spec.n_train_queries);
  synth->add_option("--test-queries", spec.n_test_queries);
  synth->add_option("--synonyms", spec.synonym_table_size);
  synth->add_option("--lexical-fraction", spec.lexical_fraction)->check(CLI::Range(0.0, 1.0));
  synth->callback([&] {
    auto s = spec;
    if (const auto c = load_config(g); c && c->synthetic) {
      s = *c->synthetic;
      if (c->synthetic_seed_from_experiment) s.seed = c->seed;
    }
    if (g.seed) s.seed = *g.seed;
    const auto dir = out_path(g, synth_out);
    write_synthetic_corpus(make_synthetic_corpus(s), dir);
    std::cout << "wrote synthetic data to " << dir.string() << "\n";
  });

  // index
  auto* index = command("index", "Build the BM25 inverted index");
  std::string corpus_path, index_out = "bm25.idx", preset = "default";
  std::optional<double> k1, b;
  index->add_option("--corpus", corpus_path)->required();
  index->add_option("--out", index_out);
  index->add_option("--preset", preset, "default, msmarco-anserini or beir-anserini");
  index->add_option("--k", k1);
  index->add_option("--b", b);
  index->callback([&] {
    auto params = Bm25Params::named(preset);
    if (k1) params.k = *k1;
    if (b) params.b = *b;
    const auto idx = Bm25Index::build(load_corpus(corpus_path), params, tokenizer_of(g));
    idx.save(out_path(g, index_out));
    std::cout << "indexed " << idx.size() << " passages\n";
  });

  // train-de
  auto* train_de_cmd = command("train-de", "Train the dual encoder on labeled or generated pairs");
  std::string queries_path, qrels_path, pairs_path, encoder_out = "encoder.bin", init_path, dense_out;
  DeTrainConfig de_cfg;
  train_de_cmd->add_option("--corpus", corpus_path)->required();
  train_de_cmd->add_option("--queries", queries_path, "Labeled queries (with --qrels)");
  train_de_cmd->add_option("--qrels", qrels_path);
  train_de_cmd->add_option("--pairs", pairs_path, "Generated pairs TSV");
  train_de_cmd->add_option("--init", init_path, "Start from this encoder");
  train_de_cmd->add_option("--out", encoder_out);
  train_de_cmd->add_option("--dense-index", dense_out, "Also write the passage index");
  train_de_cmd->add_option("--dim", de_cfg.dim);
  train_de_cmd->add_option("--epochs", de_cfg.epochs);
  train_de_cmd->add_option("--batch-size", de_cfg.batch_size);
  train_de_cmd->add_option("--lr", de_cfg.learning_rate);
  train_de_cmd->add_option("--temperature", de_cfg.temperature);
  train_de_cmd->callback([&] {
    const auto corpus = load_corpus(corpus_path);
    std::vector<TrainPair> pairs;
    if (!pairs_path.empty()) pairs = to_train_pairs(load_pairs(pairs_path), corpus);
    if (!queries_path.empty()) {
      if (qrels_path.empty()) throw Error("--queries needs --qrels");
      const auto qrels = load_qrels(qrels_path);
      for (const auto& q : load_queries(queries_path)) {
        for (const auto& doc : qrels.relevant(q.id)) pairs.push_back({q, corpus.at(doc)});
      }
    }
    if (pairs.empty()) throw Error("no training pairs (use --pairs or --queries/--qrels)");
    auto cfg = de_cfg;
    cfg.seed = seed_of(g);
    std::optional<EncoderParams> init;
    if (!init_path.empty()) init = load_encoder(init_path);
    const auto tok = tokenizer_of(g);
    const auto result = train_de(pairs, cfg, tok, init);
    save_encoder(result.params, out_path(g, encoder_out));
    if (!dense_out.empty()) DenseIndex::build(result.params, corpus, tok, g.threads).save(out_path(g, dense_out));
    std::cout << "trained on " << pairs.size() << " pairs; final epoch loss "
              << (result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()) << "\n";
  });

  // qgen
  auto* qgen = command("qgen", "Generate synthetic queries from passages");
  GenConfig gen;
  std::string gen_mode = "sentence", qgen_out = "qgen.tsv";
  qgen->add_option("--corpus", corpus_path)->required();
  qgen->add_option("--out", qgen_out);
  qgen->add_option("--mode", gen_mode, "sentence or crop");
  qgen->add_option("--max-per-passage", gen.max_per_passage);
  qgen->add_option("--sample-passages", gen.sample_passages);
  qgen->callback([&] {
    auto cfg = gen;
    cfg.mode = parse_gen_mode(gen_mode);
    cfg.seed = seed_of(g);
    const auto pairs = generate_queries(load_corpus(corpus_path), cfg, tokenizer_of(g));
    write_pairs(pairs, out_path(g, qgen_out));
    std::cout << "generated " << pairs.size() << " queries\n";
  });

  // filter
  auto* filter = command("filter", "Round-trip filter generated pairs with an encoder");
  std::string encoder_path, filter_out = "qgen.filtered.tsv";
  filter->add_option("--corpus", corpus_path)->required();
  filter->add_option("--pairs", pairs_path)->required();
  filter->add_option("--encoder", encoder_path)->required();
  filter->add_option("--out", filter_out);
  filter->callback([&] {
    const auto pairs = load_pairs(pairs_path);
    const auto kept =
        round_trip_filter(pairs, load_encoder(encoder_path), load_corpus(corpus_path), tokenizer_of(g), g.threads);
    write_pairs(kept, out_path(g, filter_out));
    std::cout << FilterReport{pairs.size(), kept.size()}.to_json().dump() << "\n";
  });

  // tune-lambda
  auto* tune = command("tune-lambda", "Grid-search the hybrid weight on judged queries");
  std::string bm25_path, dense_path, grid_text, metric_text = "mrr@10", tune_out = "lambda.json";
  tune->add_option("--bm25", bm25_path)->required();
  tune->add_option("--encoder", encoder_path)->required();
  tune->add_option("--dense", dense_path)->required();
  tune->add_option("--queries", queries_path)->required();
  tune->add_option("--qrels", qrels_path)->required();
  tune->add_option("--grid", grid_text, "Comma-separated values (default 50..750 step 50)");
  tune->add_option("--metric", metric_text);
  tune->add_option("--out", tune_out);
  tune->callback([&] {
    const auto hybrid = open_hybrid(bm25_path, encoder_path, dense_path, 0.0);
    const auto grid = grid_text.empty() ? default_lambda_grid() : parse_grid(grid_text);
    const auto t = tune_lambda(hybrid, load_queries(queries_path), load_qrels(qrels_path), grid,
                               MetricId::parse(metric_text), g.threads);
    nlohmann::ordered_json j;
    j["lambda"] = t.best_lambda;
    j["best_value"] = t.best_value;
    j["curve"] = nlohmann::ordered_json::array();
    for (const auto& [l, v] : t.curve) j["curve"].push_back({l, v});
    io::write_text(out_path(g, tune_out), j.dump(2) + "\n");
    std::cout << "lambda " << t.best_lambda << " (" << metric_text << " " << t.best_value << ")\n";
  });

  // retrieve
  auto* retrieve_cmd = command("retrieve", "Write a TREC run from BM25, DE or hybrid retrieval");
  std::string retriever = "bm25", run_out = "run.trec";
  double lambda = 0.0;
  std::size_t depth = 100;
  retrieve_cmd->add_option("--retriever", retriever, "bm25, de or hybrid");
  retrieve_cmd->add_option("--bm25", bm25_path);
  retrieve_cmd->add_option("--encoder", encoder_path);
  retrieve_cmd->add_option("--dense", dense_path);
  retrieve_cmd->add_option("--lambda", lambda);
  retrieve_cmd->add_option("--queries", queries_path)->required();
  retrieve_cmd->add_option("--depth", depth);
  retrieve_cmd->add_option("--out", run_out);
  retrieve_cmd->callback([&] {
    const auto kind = parse_retriever(retriever);
    const auto queries = load_queries(queries_path);
    std::vector<CandidateList> lists(queries.size());
    if (kind == RetrieverKind::kBm25) {
      const auto idx = Bm25Index::load(bm25_path);
      parallel_for(queries.size(), g.threads, [&](std::size_t i) { lists[i] = retrieve(idx, queries[i], depth); });
    } else if (kind == RetrieverKind::kDense) {
      const auto enc = load_encoder(encoder_path);
      const auto dense = DenseIndex::load(dense_path);
      const auto tok = tokenizer_of(g);
      parallel_for(queries.size(), g.threads,
                   [&](std::size_t i) { lists[i] = de_retrieve(enc, dense, queries[i], depth, tok); });
    } else {
      const auto hybrid = open_hybrid(bm25_path, encoder_path, dense_path, lambda);
      parallel_for(queries.size(), g.threads,
                   [&](std::size_t i) { lists[i] = hybrid_retrieve(hybrid, queries[i], depth); });
    }
    write_run(to_run(lists, retriever), out_path(g, run_out));
  });

  // gen-train
  auto* gen_train = command("gen-train", "Sample reranker training lists from a run");
  std::string run_path, lists_out = "lists.jsonl", window_preset;
  SamplingWindow window;
  gen_train->add_option("--run", run_path)->required();
  gen_train->add_option("--qrels", qrels_path)->required();
  gen_train->add_option("--preset", window_preset, "supervised or zero_shot");
  gen_train->add_option("--skip", window.skip);
  gen_train->add_option("--depth", window.depth);
  gen_train->add_option("--negatives", window.n_negatives);
  gen_train->add_option("--out", lists_out);
  gen_train->callback([&] {
    auto w = window;
    if (window_preset == "supervised") w = SamplingWindow::supervised();
    if (window_preset == "zero_shot") w = SamplingWindow::zero_shot();
    const auto set = build_candidate_lists(read_run(run_path), load_qrels(qrels_path), w, seed_of(g));
    write_candidate_lists(set.lists, out_path(g, lists_out));
    std::cout << set.lists.size() << " lists, " << set.short_pool_queries.size() << " short, "
              << set.dropped_queries << " dropped\n";
  });

  // train-reranker
  auto* train_rr = command("train-reranker", "Train the cross-attention reranker on candidate lists");
  std::string lists_path, reranker_out = "reranker.bin";
  RerankerTrainConfig rr_cfg;
  bool ungated = false;
  train_rr->add_option("--lists", lists_path)->required();
  train_rr->add_option("--corpus", corpus_path)->required();
  train_rr->add_option("--queries", queries_path)->required();
  train_rr->add_option("--init", init_path);
  train_rr->add_option("--out", reranker_out);
  train_rr->add_option("--dim", rr_cfg.dim);
  train_rr->add_option("--steps", rr_cfg.steps);
  train_rr->add_option("--batch-size", rr_cfg.batch_size);
  train_rr->add_option("--lr", rr_cfg.learning_rate);
  train_rr->add_option("--embedding-scale", rr_cfg.init.embedding_scale);
  train_rr->add_flag("--ungated", ungated, "Score with w . meanrow(AV) + b0 only");
  train_rr->callback([&] {
    auto cfg = rr_cfg;
    cfg.seed = seed_of(g);
    cfg.threads = g.threads;
    cfg.init.query_gated = !ungated;
    std::optional<RerankerParams> init;
    if (!init_path.empty()) init = load_reranker(init_path);
    const auto result = train_reranker(load_candidate_lists(lists_path), load_corpus(corpus_path),
                                       make_query_lookup(load_queries(queries_path)), cfg, tokenizer_of(g), init);
    save_reranker(result.params, out_path(g, reranker_out));
    std::cout << "loss " << result.initial_loss << " -> " << result.final_loss << "\n";
  });

  // rerank
  auto* rerank_cmd = command("rerank", "Rescore the top of a run with a trained reranker");
  std::string reranker_path;
  std::size_t top_k = 100;
  rerank_cmd->add_option("--reranker", reranker_path)->required();
  rerank_cmd->add_option("--run", run_path)->required();
  rerank_cmd->add_option("--corpus", corpus_path)->required();
  rerank_cmd->add_option("--queries", queries_path)->required();
  rerank_cmd->add_option("--top-k", top_k)->check(CLI::PositiveNumber);
  rerank_cmd->add_option("--out", run_out);
  rerank_cmd->callback([&] {
    const auto params = load_reranker(reranker_path);
    const CrossAttentionScorer scorer(params);
    const auto out = rerank(scorer, read_run(run_path), load_corpus(corpus_path),
                            make_query_lookup(load_queries(queries_path)), top_k, tokenizer_of(g), g.threads);
    write_run(out, out_path(g, run_out));
  });

  // eval
  auto* eval_cmd = command("eval", "Score a run against qrels");
  std::vector<std::string> metric_names{"mrr@10", "ndcg@10", "recall@100"};
  std::string eval_json;
  eval_cmd->add_option("--run", run_path)->required();
  eval_cmd->add_option("--qrels", qrels_path)->required();
  eval_cmd->add_option("--queries", queries_path, "Evaluate these queries (missing ones score 0)");
  eval_cmd->add_option("--metrics", metric_names)->delimiter(',');
  eval_cmd->add_option("--json", eval_json, "Write per-query reports here");
  eval_cmd->callback([&] {
    const auto run = read_run(run_path);
    const auto qrels = load_qrels(qrels_path);
    std::optional<std::vector<std::string>> ids;
    if (!queries_path.empty()) {
      ids.emplace();
      for (const auto& q : load_queries(queries_path)) ids->push_back(q.id);
    }
    ResultsTable table{"", {run.run_tag}, {}, {{}}};
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& name : metric_names) {
      const auto report = evaluate(MetricId::parse(name), run, qrels, ids ? &*ids : nullptr);
      table.column_labels.push_back(report.metric.name());
      table.values[0].push_back(report.mean);
      j[report.metric.name()] = to_json(report);
    }
    std::cout << table.format();
    if (!eval_json.empty()) io::write_text(out_path(g, eval_json), j.dump(2) + "\n");
  });

  // mix
  auto* mix = command("mix", "Mix two training list files 1:1 per query");
  std::string mix_a, mix_b;
  mix->add_option("--a", mix_a)->required();
  mix->add_option("--b", mix_b)->required();
  mix->add_option("--out", lists_out);
  mix->callback([&] {
    const auto mixed = mix_training_data(load_candidate_lists(mix_a), load_candidate_lists(mix_b), seed_of(g));
    write_candidate_lists(mixed.lists, out_path(g, lists_out));
    const auto from_a = std::count(mixed.source.begin(), mixed.source.end(), 'a');
    std::cout << mixed.lists.size() << " lists (" << from_a << " from a, "
              << static_cast<long>(mixed.lists.size()) - from_a << " from b)\n";
  });

  // run
  auto* run_cmd = command("run", "Run the full pipeline from --config");
  run_cmd->callback([&] {
    const auto c = load_config(g);
    if (!c) throw Error("run needs --config");
    const auto report = run_experiment(*c);
    std::cout << report.table.format() << "lambda " << report.lambda << "\nmanifest " << report.manifest.string()
              << "\n";
  });

  // ablate
  auto* ablate = command("ablate", "Reranker x first-stage ablation matrix from --config");
  ablate->callback([&] {
    const auto c = load_config(g);
    if (!c) throw Error("ablate needs --config");
    const auto report = ablation_matrix(*c);
    for (std::size_t i = 0; i < report.tables.size(); ++i) {
      std::cout << report.tables[i].format() << "\n";
      if (report.mixed) std::cout << (*report.mixed)[i].format() << "\n";
    }
    std::cout << "lambda " << report.lambda << "\nmanifest " << report.manifest.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
