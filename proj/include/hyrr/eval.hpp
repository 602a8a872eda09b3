// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hyrr/candidate.hpp"
#include "hyrr/corpus.hpp"

namespace hyrr {

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const RankedDoc&) const = default;
};

/// Per-query rankings in TREC exchange form.
struct RunFile {
  std::string run_tag = "hyrr";
  std::map<std::string, std::vector<RankedDoc>> rankings;

  /// Throws Error on a duplicate passage within a query or a score that
  /// increases down a ranking.
  void validate() const;
  bool operator==(const RunFile&) const = default;
};

RunFile to_run(const std::vector<CandidateList>& lists, std::string run_tag);
/// Inverse of to_run; labels are zero, ranks follow the ranking order.
std::vector<CandidateList> to_candidate_lists(const RunFile& run);

/// "qid Q0 docid rank score tag" lines, ranks from 1, shortest round-trip
/// score formatting.
std::string format_run(const RunFile& run);
void write_run(const RunFile& run, const std::filesystem::path& path);
/// Throws ParseError (with line number) on malformed lines, a duplicate
/// docid within a query, or ranks that do not increase.
RunFile read_run(const std::filesystem::path& path);

enum class MetricKind { kMrr, kNdcg, kRecall };

struct MetricId {
  MetricKind kind = MetricKind::kMrr;
  std::size_t cutoff = 10;

  /// "mrr@10", "ndcg@10", "recall@100".
  std::string name() const;
  static MetricId parse(std::string_view text);
  bool operator==(const MetricId&) const = default;
};

struct MetricReport {
  MetricId metric;
  std::map<std::string, double> per_query;
  double mean = 0.0;
  std::size_t excluded_queries = 0;  // queries with no judged-relevant passage
};

/// Evaluated queries: `query_ids` when given (queries missing from the run
/// score 0), else every query in the run. Queries with no passage of grade
/// > 0 are excluded from the mean and counted. Throws Error when nothing is
/// left to evaluate.
MetricReport mrr_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                      const std::vector<std::string>* query_ids = nullptr);
MetricReport ndcg_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                       const std::vector<std::string>* query_ids = nullptr);
MetricReport recall_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                         const std::vector<std::string>* query_ids = nullptr);
MetricReport evaluate(const MetricId& metric, const RunFile& run, const QrelSet& qrels,
                      const std::vector<std::string>* query_ids = nullptr);

nlohmann::ordered_json to_json(const MetricReport& report);

/// Row/column table of metric values rendered with aligned columns.
struct ResultsTable {
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<double>> values;  // [row][column]

  std::string format(int precision = 4) const;
  nlohmann::ordered_json to_json() const;
};

}  // namespace hyrr
