#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "apl/memstore.hpp"
#include "apl/rng.hpp"

using namespace apl;

namespace {

StoreSchema one_column(int dim) { return StoreSchema{{{"img", dim}}}; }

Vec random_vec(Rng& rng, int dim) {
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

// Brute-force oracle: full sort of (distance, insertion index), independent
// of the store's own selection path.
std::vector<size_t> brute_force_knn(const std::vector<Vec>& rows, const Vec& key, int k) {
  std::vector<std::pair<double, size_t>> order(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) order[i] = {(rows[i] - key).norm(), i};
  std::sort(order.begin(), order.end());
  std::vector<size_t> out;
  for (size_t i = 0; i < std::min<size_t>(static_cast<size_t>(k), order.size()); ++i)
    out.push_back(order[i].second);
  return out;
}

}  // namespace

TEST_CASE("empty store returns an empty neighbor set") {
  MemoryStore store(one_column(4), 8);
  Vec key = Vec::Zero(4);
  CHECK(store.query_knn(key, 0, 3).empty());
}

TEST_CASE("a single exact match comes back at distance zero") {
  MemoryStore store(one_column(3), 8);
  Rng rng(1);
  Vec v = random_vec(rng, 3);
  store.write({v}, 7, 0);
  auto got = store.query_knn(v, 0, 5);
  REQUIRE(got.size() == 1);
  CHECK(got[0].distance == 0.0);
  CHECK(got[0].label == 7);
  CHECK(got[0].keys[0] == v);
}

TEST_CASE("duplicates are permitted") {
  MemoryStore store(one_column(2), 8);
  Vec v = Vec::Ones(2);
  store.write({v}, 1, 0);
  store.write({v}, 1, 0);
  CHECK(store.size() == 2);
}

TEST_CASE("writing at capacity is an error, never eviction") {
  MemoryStore store(one_column(2), 2);
  Vec v = Vec::Ones(2);
  store.write({v}, 0, 0);
  store.write({v}, 1, 1);
  CHECK_THROWS_WITH_AS(store.write({v}, 2, 2), doctest::Contains("capacity"), Error);
  CHECK(store.size() == 2);
}

TEST_CASE("schema violations are rejected") {
  MemoryStore store(StoreSchema{{{"img", 4}, {"sym", 2}}}, 8);
  Vec a = Vec::Zero(4), b = Vec::Zero(2);
  CHECK_THROWS_AS(store.write({a}, 0, 0), Error);     // missing column
  CHECK_THROWS_AS(store.write({b, a}, 0, 0), Error);  // swapped dims
  store.write({a, b}, 0, 0);
  CHECK_THROWS_AS(store.query_knn(a, 2, 1), Error);  // unknown column
  CHECK_THROWS_AS(store.query_knn(b, 0, 1), Error);  // wrong key dim
  CHECK_THROWS_AS(store.query_knn(a, 0, 0), Error);  // k < 1
  CHECK(store.column_index("sym") == 1);
  CHECK_THROWS_AS(store.column_index("nope"), Error);
}

TEST_CASE("reset empties the store, keeps the schema, and is idempotent") {
  MemoryStore store(one_column(2), 4);
  store.write({Vec::Ones(2)}, 0, 0);
  store.reset();
  CHECK(store.size() == 0);
  store.reset();
  CHECK(store.size() == 0);
  CHECK(store.query_knn(Vec::Zero(2), 0, 3).empty());
  store.write({Vec::Ones(2)}, 1, 0);  // schema still works
  CHECK(store.size() == 1);
}

TEST_CASE("query_knn matches the brute-force oracle on random stores") {
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 2 + rng.uniform_int(15);
    const int n = 1 + rng.uniform_int(500);
    MemoryStore store(one_column(dim), static_cast<size_t>(n));
    std::vector<Vec> rows;
    for (int i = 0; i < n; ++i) {
      Vec v = random_vec(rng, dim);
      // occasional duplicates to exercise tie-breaking
      if (!rows.empty() && rng.uniform() < 0.1)
        v = rows[static_cast<size_t>(rng.uniform_int(static_cast<int>(rows.size())))];
      rows.push_back(v);
      store.write({v}, i, i);
    }
    for (int q = 0; q < 5; ++q) {
      Vec key = random_vec(rng, dim);
      int k = 1 + rng.uniform_int(12);
      auto got = store.query_knn(key, 0, k);
      auto expect = brute_force_knn(rows, key, k);
      REQUIRE(got.size() == expect.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].label == static_cast<int>(expect[i]));  // same row, same order
        CHECK(got[i].distance == doctest::Approx((rows[expect[i]] - key).norm()).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("returned distances are non-negative, sorted, and recomputable") {
  Rng rng(43);
  const int dim = 8;
  MemoryStore store(one_column(dim), 200);
  std::vector<Vec> rows;
  for (int i = 0; i < 200; ++i) {
    rows.push_back(random_vec(rng, dim));
    store.write({rows.back()}, i, i);
  }
  Vec key = random_vec(rng, dim);
  auto got = store.query_knn(key, 0, 50);
  REQUIRE(got.size() == 50);
  double prev = -1.0;
  for (const auto& r : got) {
    CHECK(r.distance >= 0.0);
    CHECK(r.distance >= prev);
    CHECK(std::abs(r.distance - (r.keys[0] - key).norm()) < 1e-9);
    prev = r.distance;
  }
}

TEST_CASE("ties break toward the earlier insertion") {
  MemoryStore store(one_column(2), 8);
  Vec v = Vec::Ones(2);
  store.write({v}, 10, 0);
  store.write({v}, 11, 1);
  store.write({v}, 12, 2);
  auto got = store.query_knn(v, 0, 2);
  REQUIRE(got.size() == 2);
  CHECK(got[0].label == 10);
  CHECK(got[1].label == 11);
}

TEST_CASE("query_knn leaves the store untouched") {
  MemoryStore store(one_column(2), 8);
  Rng rng(44);
  for (int i = 0; i < 5; ++i) store.write({random_vec(rng, 2)}, i, i);
  auto before = store.size();
  Vec k0 = store.key(0, 2);
  (void)store.query_knn(random_vec(rng, 2), 0, 3);
  CHECK(store.size() == before);
  CHECK(store.key(0, 2) == k0);
}

TEST_CASE("jsonl dump carries step, label, and hex-encoded embeddings") {
  MemoryStore store(one_column(2), 4);
  Vec v(2);
  v << 1.0, -2.5;
  store.write({v}, 3, 17);
  std::ostringstream out;
  store.dump_jsonl(out);
  std::string line = out.str();
  CHECK(line.find("\"step\":17") != std::string::npos);
  CHECK(line.find("\"label\":3") != std::string::npos);
  // 1.0f little-endian = 0000803f, -2.5f = 000020c0
  CHECK(line.find("0000803f000020c0") != std::string::npos);
}
