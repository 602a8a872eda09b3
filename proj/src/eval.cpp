// SPDX-License-Identifier: Apache-2.0
#include "hyrr/eval.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hyrr/common.hpp"
#include "hyrr/io.hpp"

namespace hyrr {

void RunFile::validate() const {
  for (const auto& [qid, ranking] : rankings) {
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (!seen.insert(ranking[i].doc_id).second) {
        throw Error("run " + run_tag + ": duplicate passage " + ranking[i].doc_id + " for query " + qid);
      }
      if (i > 0 && ranking[i].score > ranking[i - 1].score) {
        throw Error("run " + run_tag + ": scores increase down the ranking of query " + qid);
      }
    }
  }
}

RunFile to_run(const std::vector<CandidateList>& lists, std::string run_tag) {
  RunFile run;
  run.run_tag = std::move(run_tag);
  for (const auto& list : lists) {
    auto& ranking = run.rankings[list.query_id];
    for (const auto& item : list.items) ranking.push_back({item.passage_id, item.score});
  }
  return run;
}

std::vector<CandidateList> to_candidate_lists(const RunFile& run) {
  std::vector<CandidateList> out;
  for (const auto& [qid, ranking] : run.rankings) {
    CandidateList list{qid, {}};
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      list.items.push_back({ranking[r].doc_id, ranking[r].score, r + 1, 0, r + 1});
    }
    out.push_back(std::move(list));
  }
  return out;
}

std::string format_run(const RunFile& run) {
  std::string out;
  for (const auto& [qid, ranking] : run.rankings) {
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      out += fmt::format("{} Q0 {} {} {} {}\n", qid, ranking[r].doc_id, r + 1, ranking[r].score,
                         run.run_tag);
    }
  }
  return out;
}

void write_run(const RunFile& run, const std::filesystem::path& path) {
  io::write_text(path, format_run(run));
}

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  RunFile run;
  run.run_tag.clear();
  std::map<std::string, std::size_t> last_rank;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, q0, docid, rank_text, score_text, tag, extra;
    if (!(fields >> qid)) continue;
    if (!(fields >> q0 >> docid >> rank_text >> score_text >> tag) || (fields >> extra)) {
      throw ParseError(path.string(), line_no, "expected 'qid Q0 docid rank score tag'");
    }
    std::size_t rank = 0;
    const auto [rp, rec] = std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
    if (rec != std::errc() || rp != rank_text.data() + rank_text.size() || rank < 1) {
      throw ParseError(path.string(), line_no, "bad rank '" + rank_text + "'");
    }
    char* end = nullptr;
    const double score = std::strtod(score_text.c_str(), &end);
    if (end != score_text.c_str() + score_text.size() || !std::isfinite(score)) {
      throw ParseError(path.string(), line_no, "bad score '" + score_text + "'");
    }
    if (run.run_tag.empty()) {
      run.run_tag = tag;
    } else if (tag != run.run_tag) {
      throw ParseError(path.string(), line_no, "mixed run tags '" + run.run_tag + "' and '" + tag + "'");
    }
    auto [it, fresh] = last_rank.try_emplace(qid, 0);
    if (rank <= it->second) {
      throw ParseError(path.string(), line_no, "rank does not increase for query " + qid);
    }
    it->second = rank;
    if (!seen[qid].insert(docid).second) {
      throw ParseError(path.string(), line_no, "duplicate docid " + docid + " for query " + qid);
    }
    run.rankings[qid].push_back({docid, score});
  }
  if (run.run_tag.empty()) run.run_tag = "hyrr";
  return run;
}

std::string MetricId::name() const {
  switch (kind) {
    case MetricKind::kMrr:
      return "mrr@" + std::to_string(cutoff);
    case MetricKind::kNdcg:
      return "ndcg@" + std::to_string(cutoff);
    case MetricKind::kRecall:
      return "recall@" + std::to_string(cutoff);
  }
  return "?";
}

MetricId MetricId::parse(std::string_view text) {
  const auto at = text.find('@');
  if (at == std::string_view::npos) throw Error("metric needs a cutoff: " + std::string(text));
  std::string name(text.substr(0, at));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  MetricId id;
  if (name == "mrr") {
    id.kind = MetricKind::kMrr;
  } else if (name == "ndcg") {
    id.kind = MetricKind::kNdcg;
  } else if (name == "recall") {
    id.kind = MetricKind::kRecall;
  } else {
    throw Error("unknown metric: " + std::string(text));
  }
  const auto digits = text.substr(at + 1);
  const auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.cutoff);
  if (ec != std::errc() || p != digits.data() + digits.size() || id.cutoff < 1) {
    throw Error("bad metric cutoff: " + std::string(text));
  }
  return id;
}

namespace {

using PerQuery = std::function<double(const std::vector<RankedDoc>&, const std::map<std::string, int>&)>;

MetricReport run_metric(MetricId metric, const RunFile& run, const QrelSet& qrels,
                        const std::vector<std::string>* query_ids, const PerQuery& per_query) {
  if (metric.cutoff < 1) throw Error("metric cutoff must be >= 1");
  std::vector<std::string> ids;
  if (query_ids != nullptr) {
    ids = *query_ids;
  } else {
    for (const auto& [qid, ranking] : run.rankings) ids.push_back(qid);
  }
  MetricReport report;
  report.metric = metric;
  static const std::vector<RankedDoc> kEmpty;
  double total = 0.0;
  for (const auto& qid : ids) {
    if (report.per_query.contains(qid)) continue;
    if (qrels.relevant_count(qid) == 0) {
      ++report.excluded_queries;
      continue;
    }
    const auto it = run.rankings.find(qid);
    const double value = per_query(it == run.rankings.end() ? kEmpty : it->second, qrels.judgments(qid));
    report.per_query[qid] = value;
    total += value;
  }
  if (report.per_query.empty()) throw Error(metric.name() + ": no judged queries to evaluate");
  report.mean = total / static_cast<double>(report.per_query.size());
  return report;
}

int grade_of(const std::map<std::string, int>& judged, const std::string& doc) {
  const auto it = judged.find(doc);
  return it == judged.end() ? 0 : it->second;
}

}  // namespace

MetricReport mrr_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                      const std::vector<std::string>* query_ids) {
  return run_metric({MetricKind::kMrr, k}, run, qrels, query_ids,
                    [k](const std::vector<RankedDoc>& ranking, const std::map<std::string, int>& judged) {
                      const std::size_t depth = std::min(k, ranking.size());
                      for (std::size_t r = 0; r < depth; ++r) {
                        if (grade_of(judged, ranking[r].doc_id) > 0) return 1.0 / static_cast<double>(r + 1);
                      }
                      return 0.0;
                    });
}

MetricReport ndcg_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                       const std::vector<std::string>* query_ids) {
  return run_metric({MetricKind::kNdcg, k}, run, qrels, query_ids,
                    [k](const std::vector<RankedDoc>& ranking, const std::map<std::string, int>& judged) {
                      double dcg = 0.0;
                      const std::size_t depth = std::min(k, ranking.size());
                      for (std::size_t r = 0; r < depth; ++r) {
                        dcg += grade_of(judged, ranking[r].doc_id) / std::log2(static_cast<double>(r) + 2.0);
                      }
                      std::vector<int> grades;
                      for (const auto& [doc, g] : judged) {
                        if (g > 0) grades.push_back(g);
                      }
                      std::sort(grades.begin(), grades.end(), std::greater<>());
                      double idcg = 0.0;
                      for (std::size_t r = 0; r < std::min(k, grades.size()); ++r) {
                        idcg += grades[r] / std::log2(static_cast<double>(r) + 2.0);
                      }
                      return idcg == 0.0 ? 0.0 : dcg / idcg;
                    });
}

MetricReport recall_at_k(const RunFile& run, const QrelSet& qrels, std::size_t k,
                         const std::vector<std::string>* query_ids) {
  return run_metric({MetricKind::kRecall, k}, run, qrels, query_ids,
                    [k](const std::vector<RankedDoc>& ranking, const std::map<std::string, int>& judged) {
                      std::size_t relevant = 0;
                      for (const auto& [doc, g] : judged) relevant += g > 0 ? 1 : 0;
                      std::size_t found = 0;
                      const std::size_t depth = std::min(k, ranking.size());
                      for (std::size_t r = 0; r < depth; ++r) {
                        found += grade_of(judged, ranking[r].doc_id) > 0 ? 1 : 0;
                      }
                      return relevant == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(relevant);
                    });
}

MetricReport evaluate(const MetricId& metric, const RunFile& run, const QrelSet& qrels,
                      const std::vector<std::string>* query_ids) {
  switch (metric.kind) {
    case MetricKind::kMrr:
      return mrr_at_k(run, qrels, metric.cutoff, query_ids);
    case MetricKind::kNdcg:
      return ndcg_at_k(run, qrels, metric.cutoff, query_ids);
    case MetricKind::kRecall:
      return recall_at_k(run, qrels, metric.cutoff, query_ids);
  }
  throw Error("unknown metric kind");
}

nlohmann::ordered_json to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["metric"] = report.metric.name();
  j["cutoff"] = report.metric.cutoff;
  j["mean"] = report.mean;
  j["evaluated_queries"] = report.per_query.size();
  j["excluded_queries"] = report.excluded_queries;
  j["per_query"] = nlohmann::ordered_json::object();
  for (const auto& [qid, v] : report.per_query) j["per_query"][qid] = v;
  return j;
}

std::string ResultsTable::format(int precision) const {
  std::size_t label_width = 0;
  for (const auto& r : row_labels) label_width = std::max(label_width, r.size());
  std::vector<std::size_t> widths;
  for (const auto& c : column_labels) widths.push_back(std::max<std::size_t>(c.size(), precision + 3));
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  out << std::left << std::setw(static_cast<int>(label_width)) << "";
  for (std::size_t c = 0; c < column_labels.size(); ++c) {
    out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << column_labels[c];
  }
  out << '\n';
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    out << std::left << std::setw(static_cast<int>(label_width)) << row_labels[r];
    for (std::size_t c = 0; c < column_labels.size(); ++c) {
      out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << std::fixed
          << std::setprecision(precision) << values.at(r).at(c);
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json ResultsTable::to_json() const {
  nlohmann::ordered_json j;
  j["title"] = title;
  j["columns"] = column_labels;
  j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    nlohmann::ordered_json row;
    row["label"] = row_labels[r];
    row["values"] = values.at(r);
    j["rows"].push_back(row);
  }
  return j;
}

}  // namespace hyrr
