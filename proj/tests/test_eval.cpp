#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "stdb/eval.hpp"
#include "stdb/rng.hpp"
#include "support/oracles.hpp"

using namespace stdb;

namespace {

GalleryItem item(std::vector<double> emb, int id, int cam) {
  return GalleryItem{std::move(emb), id, cam};
}

}  // namespace

TEST_CASE("rank_and_filter removes same-identity same-camera entries") {
  GalleryItem query = item({0.0}, 1, 1);
  std::vector<GalleryItem> gallery{item({0.1}, 1, 1), item({0.2}, 1, 2),
                                   item({0.3}, 2, 1)};
  const std::vector<std::size_t> ranked = rank_and_filter(query, gallery);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0] == 1);
  CHECK(ranked[1] == 2);
}

TEST_CASE("a zero-distance gallery item ranks first") {
  GalleryItem query = item({0.4, -0.3}, 5, 1);
  std::vector<GalleryItem> gallery{item({1.0, 1.0}, 5, 2),
                                   item({0.4, -0.3}, 7, 1)};
  CHECK(rank_and_filter(query, gallery)[0] == 1);
}

TEST_CASE("distractor identities are removed before ranking") {
  GalleryItem query = item({0.0}, 1, 1);
  std::vector<GalleryItem> gallery{item({0.01}, -1, 2), item({0.5}, 1, 2)};
  const std::vector<std::size_t> ranked = rank_and_filter(query, gallery);
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0] == 1);
}

TEST_CASE("ranking matches a full-sort oracle with index tie-breaks") {
  Rng rng(103);
  GalleryItem query = item({rng.uniform(), rng.uniform()}, 3, 0);
  std::vector<GalleryItem> gallery =
      testutil::random_gallery_items(40, 6, 3, 2, rng, /*with_junk=*/false);
  const std::vector<std::size_t> ranked = rank_and_filter(query, gallery);

  std::vector<std::size_t> oracle;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (gallery[i].identity == query.identity && gallery[i].camera == query.camera)
      continue;
    oracle.push_back(i);
  }
  auto dist = [&](std::size_t i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      const double d = query.embedding[c] - gallery[i].embedding[c];
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  std::stable_sort(oracle.begin(), oracle.end(),
                   [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
  CHECK(ranked == oracle);
}

TEST_CASE("rank_and_filter validates embedding widths") {
  GalleryItem query = item({0.0, 0.0}, 1, 1);
  std::vector<GalleryItem> gallery{item({0.1}, 2, 2)};
  CHECK_THROWS_AS(rank_and_filter(query, gallery), DimError);
}

TEST_CASE("average precision worked examples") {
  CHECK(*average_precision({1, 0, 1}) ==
        doctest::Approx((1.0 / 1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(*average_precision({1, 1, 1}) == 1.0);
  CHECK(*average_precision({0, 0, 0, 1}) == doctest::Approx(0.25));
  CHECK(*average_precision({0, 1}) == doctest::Approx(0.5));
  CHECK_FALSE(average_precision({0, 0, 0}).has_value());
  CHECK_FALSE(average_precision({}).has_value());
}

TEST_CASE("a query whose match ranks third misses Rank-1 but hits Rank-5") {
  // query id 1 cam 0; two closer wrong ids, the true match third
  std::vector<GalleryItem> queries{item({0.0, 0.0}, 1, 0)};
  std::vector<GalleryItem> gallery{
      item({0.1, 0.0}, 2, 1), item({0.2, 0.0}, 3, 1), item({0.3, 0.0}, 1, 1),
  };
  EvalReport report = evaluate(queries, gallery, 10);
  CHECK(report.cmc[0] == 0.0);
  CHECK(report.cmc[4] == 1.0);
  CHECK(report.map == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("a permuted gallery copy with distinct cameras is perfect") {
  Rng rng(107);
  std::vector<GalleryItem> queries;
  for (int id = 0; id < 8; ++id) {
    GalleryItem g;
    g.identity = id;
    g.camera = 0;
    g.embedding = {rng.uniform(), rng.uniform(), rng.uniform()};
    queries.push_back(std::move(g));
  }
  std::vector<GalleryItem> gallery = queries;
  for (GalleryItem& g : gallery) g.camera = 1;
  std::reverse(gallery.begin(), gallery.end());
  EvalReport report = evaluate(queries, gallery, 10);
  CHECK(report.map == 1.0);
  CHECK(report.cmc[0] == 1.0);
  CHECK(report.skipped_queries == 0);
}

TEST_CASE("evaluate matches the brute-force oracle on random instances") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(500 + seed);
    const std::size_t nq = 5 + rng.uniform_index(20);
    const std::size_t ng = 30 + rng.uniform_index(80);
    std::vector<GalleryItem> queries =
        testutil::random_gallery_items(nq, 5, 2, 3, rng, /*with_junk=*/false);
    std::vector<GalleryItem> gallery =
        testutil::random_gallery_items(ng, 5, 2, 3, rng, /*with_junk=*/true);
    EvalReport got = evaluate(queries, gallery, 10);
    testutil::BruteReport want = testutil::brute_force_evaluate(queries, gallery, 10);
    CHECK(got.valid_queries == want.valid);
    CHECK(got.skipped_queries == want.skipped);
    CHECK(std::abs(got.map - want.map) < 1e-12);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(std::abs(got.cmc[k] - want.cmc[k]) < 1e-12);
    }
  }
}

TEST_CASE("cmc is non-decreasing and bounded") {
  Rng rng(109);
  std::vector<GalleryItem> queries = testutil::random_gallery_items(12, 4, 2, 3, rng, false);
  std::vector<GalleryItem> gallery = testutil::random_gallery_items(60, 4, 2, 3, rng, false);
  EvalReport report = evaluate(queries, gallery, 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(report.cmc[k] >= (k ? report.cmc[k - 1] : 0.0));
    CHECK(report.cmc[k] <= 1.0);
  }
}

TEST_CASE("scaling every embedding leaves the report unchanged") {
  Rng rng(113);
  std::vector<GalleryItem> queries = testutil::random_gallery_items(10, 4, 2, 3, rng, false);
  std::vector<GalleryItem> gallery = testutil::random_gallery_items(50, 4, 2, 3, rng, false);
  EvalReport base = evaluate(queries, gallery, 10);

  auto scaled = [&](double c) {
    std::vector<GalleryItem> q = queries, g = gallery;
    for (GalleryItem& item : q)
      for (double& v : item.embedding) v *= c;
    for (GalleryItem& item : g)
      for (double& v : item.embedding) v *= c;
    return evaluate(q, g, 10);
  };
  EvalReport big = scaled(37.5);
  CHECK(big.map == doctest::Approx(base.map).epsilon(1e-12));
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(big.cmc[k] == base.cmc[k]);
  }
}

TEST_CASE("evaluate fails when every query is filtered out") {
  std::vector<GalleryItem> queries{item({0.0}, 1, 1)};
  std::vector<GalleryItem> gallery{item({0.1}, 1, 1), item({0.2}, 2, 2)};
  CHECK_THROWS_AS(evaluate(queries, gallery, 5), ContractError);
}

TEST_CASE("queries without relevant candidates are skipped and counted") {
  std::vector<GalleryItem> queries{item({0.0}, 1, 1), item({0.0}, 9, 1)};
  std::vector<GalleryItem> gallery{item({0.1}, 1, 2), item({0.2}, 2, 2)};
  EvalReport report = evaluate(queries, gallery, 5);
  CHECK(report.valid_queries == 1);
  CHECK(report.skipped_queries == 1);
  CHECK(report.map == 1.0);
}
