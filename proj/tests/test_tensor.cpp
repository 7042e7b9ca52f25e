#include "sgkd/core/tensor.hpp"

#include <catch_amalgamated.hpp>

#include "sgkd/core/fnv.hpp"
#include "sgkd/core/rng.hpp"

using namespace sgkd;

TEST_CASE("tensor shape and data length stay consistent") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor<float>({2, 0, 4}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(5)), ShapeError);
}

TEST_CASE("reshape preserves element count") {
  Tensor<double> t({4, 6});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
  auto r = t.reshaped({2, 12});
  CHECK(r.numel() == 24);
  CHECK(r.at2(1, 0) == 12.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
}

TEST_CASE("row-major indexing") {
  Tensor<float> t({2, 3, 4, 5});
  t.at4(1, 2, 3, 4) = 7.0f;
  CHECK(t[t.numel() - 1] == 7.0f);
  t.at4(0, 0, 0, 1) = 3.0f;
  CHECK(t[1] == 3.0f);
}

TEST_CASE("rng streams are deterministic and splittable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("rng uniform_index is in range and covers all values") {
  Rng r(7);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 10000; ++i) seen[r.uniform_index(10)] += 1;
  for (int c : seen) CHECK(c > 800);
  CHECK_THROWS_AS(r.uniform_index(0), ValueError);
}

TEST_CASE("rng normal has roughly standard moments") {
  Rng r(11);
  double sum = 0, sq = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("fnv1a64 matches reference vectors") {
  // Known FNV-1a test vectors.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xdeadbeefULL) == "00000000deadbeef");
}
