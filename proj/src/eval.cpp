#include "stdb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace stdb {

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

std::vector<std::size_t> rank_and_filter(const GalleryItem& query,
                                         const std::vector<GalleryItem>& gallery) {
  if (gallery.empty()) throw ContractError("rank_and_filter: empty gallery");
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const GalleryItem& item = gallery[i];
    if (item.embedding.size() != query.embedding.size()) {
      throw DimError("rank_and_filter: embedding width mismatch at gallery item " +
                     std::to_string(i));
    }
    if (item.identity == -1) continue;  // distractor
    if (item.identity == query.identity && item.camera == query.camera) continue;
    order.emplace_back(euclidean(query.embedding, item.embedding), i);
  }
  std::sort(order.begin(), order.end());  // pair ordering breaks ties by index
  std::vector<std::size_t> ranked;
  ranked.reserve(order.size());
  for (const auto& [dist, idx] : order) ranked.push_back(idx);
  return ranked;
}

std::optional<double> average_precision(const std::vector<int>& relevance) {
  std::size_t relevant = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (relevance[r]) {
      ++relevant;
      acc += static_cast<double>(relevant) / static_cast<double>(r + 1);
    }
  }
  if (relevant == 0) return std::nullopt;
  return acc / static_cast<double>(relevant);
}

EvalReport evaluate(const std::vector<GalleryItem>& queries,
                    const std::vector<GalleryItem>& gallery, std::size_t k_max) {
  if (queries.empty()) throw ContractError("evaluate: no queries");
  if (k_max == 0) throw ContractError("evaluate: k_max must be positive");

  struct QueryResult {
    bool valid = false;
    double ap = 0.0;
    std::size_t first_relevant = 0;  // 1-based rank
  };
  std::vector<QueryResult> results(queries.size());

#pragma omp parallel for schedule(static)
  for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(queries.size()); ++qi) {
    const GalleryItem& query = queries[static_cast<std::size_t>(qi)];
    const std::vector<std::size_t> ranked = rank_and_filter(query, gallery);
    std::vector<int> relevance(ranked.size());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      relevance[r] = gallery[ranked[r]].identity == query.identity ? 1 : 0;
    }
    const std::optional<double> ap = average_precision(relevance);
    QueryResult& out = results[static_cast<std::size_t>(qi)];
    if (!ap) continue;
    out.valid = true;
    out.ap = *ap;
    out.first_relevant =
        static_cast<std::size_t>(std::find(relevance.begin(), relevance.end(), 1) -
                                 relevance.begin()) + 1;
  }

  EvalReport report;
  report.cmc.assign(k_max, 0.0);
  for (const QueryResult& r : results) {
    if (!r.valid) {
      ++report.skipped_queries;
      continue;
    }
    ++report.valid_queries;
    report.per_query_ap.push_back(r.ap);
    report.map += r.ap;
    for (std::size_t k = r.first_relevant; k <= k_max; ++k) {
      report.cmc[k - 1] += 1.0;
    }
  }
  if (report.valid_queries == 0) {
    throw ContractError("evaluate: every query was filtered out");
  }
  report.map /= static_cast<double>(report.valid_queries);
  for (double& v : report.cmc) v /= static_cast<double>(report.valid_queries);
  return report;
}

}  // namespace stdb
