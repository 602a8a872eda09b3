// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyrr/common.hpp"
#include "hyrr/corpus.hpp"
#include "hyrr/dense_encoder.hpp"
#include "hyrr/eval.hpp"
#include "hyrr/qgen.hpp"
#include "hyrr/reranker.hpp"
#include "hyrr/sparse_bm25.hpp"
#include "hyrr/synthetic.hpp"

namespace hyrr {

enum class RetrieverKind { kBm25, kDense, kHybrid };
RetrieverKind parse_retriever(std::string_view text);
std::string_view to_string(RetrieverKind kind);

/// Which run feeds build_candidate_lists.
enum class TrainingSource { kBm25, kDense, kHybrid, kMixed };
TrainingSource parse_training_source(std::string_view text);
std::string_view to_string(TrainingSource source);

/// Pairs the dual encoder is trained on: the labeled training queries, the
/// generate/filter/fine-tune pipeline, or both (DE0 on generated pairs,
/// DE1 on filtered pairs plus labeled pairs).
enum class DenseTraining { kSupervised, kGenerated, kBoth };

struct DataPaths {
  std::filesystem::path corpus;
  std::filesystem::path train_queries;
  std::filesystem::path train_qrels;
  std::filesystem::path test_queries;
  std::filesystem::path test_qrels;
};

/// Experiment settings. Parsed from JSON with a strict key set; relative
/// paths resolve against the config file's directory.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path workdir = "work";
  std::optional<DataPaths> data;
  std::optional<SyntheticCorpusSpec> synthetic;  // used when `data` is empty
  bool synthetic_seed_from_experiment = true;

  TokenizerConfig tokenizer;
  Bm25Params bm25;
  DeTrainConfig dense;
  DenseTraining dense_training = DenseTraining::kSupervised;
  GenConfig qgen;
  std::size_t de1_epochs = 10;

  std::optional<double> lambda;  // fixed; tuned on the training queries when empty
  std::vector<double> lambda_grid;
  MetricId tune_metric{MetricKind::kMrr, 10};
  /// Share of training queries held out from dense training and used to
  /// tune lambda, so the tuned weight is not fit to memorized queries.
  double tune_holdout = 0.25;

  SamplingWindow window = SamplingWindow::supervised();
  RerankerTrainConfig reranker;
  bool use_reranker = true;
  TrainingSource training_source = TrainingSource::kHybrid;
  RetrieverKind first_stage = RetrieverKind::kBm25;
  std::size_t rerank_top_k = 100;
  std::size_t run_depth = 100;
  std::vector<MetricId> metrics{{MetricKind::kMrr, 10}, {MetricKind::kNdcg, 10}, {MetricKind::kRecall, 100}};
  bool ablation_mixed = true;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  void validate() const;

  // Sub-seeds, one per randomized stage.
  std::uint64_t dense_seed() const { return mix_seed(seed, 1); }
  std::uint64_t qgen_seed() const { return mix_seed(seed, 2); }
  std::uint64_t sampling_seed() const { return mix_seed(seed, 3); }
  std::uint64_t reranker_seed() const { return mix_seed(seed, 4); }
  std::uint64_t mixing_seed() const { return mix_seed(seed, 5); }
};

/// Records every file a pipeline reads or writes with its SHA-256.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path root) : root_(std::move(root)) {}
  void add(const std::filesystem::path& path, std::string_view role);
  /// Writes manifest.json under the root and returns its path.
  std::filesystem::path write() const;
  nlohmann::ordered_json to_json() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::tuple<std::string, std::string, std::string>> entries_;  // path, role, sha256
};

struct ExperimentReport {
  std::map<std::string, MetricReport> first_stage;  // metric name -> report
  std::map<std::string, MetricReport> reranked;     // empty without a reranker
  ResultsTable table;
  double lambda = 0.0;
  std::optional<FilterReport> filter;
  std::optional<RerankerTrainResult> reranker;
  std::filesystem::path manifest;
  nlohmann::ordered_json to_json() const;
};

/// Per-query whole-list mixing of two training sets. A query covered by both
/// takes the list from one source chosen by a seeded fair coin; a query in
/// only one set keeps that list. Output is ordered by query id.
struct MixedLists {
  std::vector<CandidateList> lists;
  std::vector<char> source;  // 'a' or 'b' per list
};
MixedLists mix_training_data(const std::vector<CandidateList>& lists_a, const std::vector<CandidateList>& lists_b,
                             std::uint64_t seed);

/// index -> dense training -> lambda tuning -> training runs -> candidate
/// lists -> reranker -> first-stage test run -> rerank -> evaluation. Every
/// artifact lands under config.workdir and in manifest.json. Stage failures
/// are rethrown as Error prefixed with the stage name.
ExperimentReport run_experiment(const ExperimentConfig& config);

struct AblationReport {
  /// One table per metric: rows none/BM25RR/DERR/HYRR, columns BM25/DE/Hybrid.
  std::vector<ResultsTable> tables;
  /// Rerankers trained on 1:1 mixed BM25/DE lists, per metric, per retriever.
  std::optional<std::vector<ResultsTable>> mixed;
  double lambda = 0.0;
  std::filesystem::path manifest;
  nlohmann::ordered_json to_json() const;
  /// Value of table[metric](row, column) by labels.
  double value(std::string_view metric, std::string_view row, std::string_view column) const;
};

/// Trains BM25RR, DERR and HYRR (and the mixed baseline when enabled) with
/// identical settings and evaluates each over the three first stages.
AblationReport ablation_matrix(const ExperimentConfig& config);

}  // namespace hyrr
