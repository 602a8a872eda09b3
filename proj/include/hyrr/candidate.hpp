// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace hyrr {

struct CandidateItem {
  std::string passage_id;
  double score = 0.0;
  std::size_t rank = 0;            // 1-based position in this list
  int label = 0;                   // relevance grade, 0 when unjudged
  std::size_t retriever_rank = 0;  // rank in the source run; 0 if injected
};

/// One query's ordered candidates. Retrieval output and reranker training
/// example share this shape.
struct CandidateList {
  std::string query_id;
  std::vector<CandidateItem> items;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
};

/// Sorts (passage index, score) hits by descending score with ascending
/// passage-id tiebreak, keeps the first k and emits a ranked list.
template <typename IdOf>
CandidateList rank_hits(std::string query_id, std::vector<std::pair<std::size_t, double>> hits,
                        std::size_t k, IdOf&& id_of) {
  const auto better = [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return id_of(a.first) < id_of(b.first);
  };
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    better);
  CandidateList out{std::move(query_id), {}};
  out.items.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) {
    out.items.push_back({std::string(id_of(hits[r].first)), hits[r].second, r + 1, 0, r + 1});
  }
  return out;
}

}  // namespace hyrr
