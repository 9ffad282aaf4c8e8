#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "stdb/error.hpp"

namespace stdb {

struct GalleryItem {
  std::vector<double> embedding;
  int identity = 0;
  int camera = 0;
};

// Gallery indices ordered by ascending Euclidean distance to the query, ties
// broken by original index. Entries sharing the query's identity and camera
// are removed first (standard junk protocol), as are distractors (id == -1).
std::vector<std::size_t> rank_and_filter(const GalleryItem& query,
                                         const std::vector<GalleryItem>& gallery);

// AP over a ranked binary relevance list: (1/R) * sum of precision at each
// relevant rank. Empty when the list holds no relevant item (query skipped).
std::optional<double> average_precision(const std::vector<int>& relevance);

struct EvalReport {
  double map = 0.0;
  std::vector<double> cmc;           // Rank-1 .. Rank-k_max
  std::vector<double> per_query_ap;  // valid queries, in query order
  std::size_t valid_queries = 0;
  std::size_t skipped_queries = 0;   // no relevant candidate after filtering
};

EvalReport evaluate(const std::vector<GalleryItem>& queries,
                    const std::vector<GalleryItem>& gallery, std::size_t k_max);

}  // namespace stdb
