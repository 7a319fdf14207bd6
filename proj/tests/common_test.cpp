// Copyright 2026 The RankOIE Authors - All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdint>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "rankoie/common.hpp"

namespace rankoie {
namespace {

TEST_CASE("splitmix64 matches the reference output vector", "[common]") {
  // Reference stream for seed 1234567, from the published splitmix64 code.
  std::uint64_t state = 1234567;
  const std::uint64_t expected[] = {
      0x599ed017fb08fc85ull,
      0x2c73f08458540fa5ull,
      0x883ebce5a3f27c77ull,
  };
  for (std::uint64_t want : expected) {
    REQUIRE(splitmix64(state) == want);
  }
}

TEST_CASE("rng uniform stays in the half-open unit interval", "[common]") {
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("rng bounded covers the full range without excess", "[common]") {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = rng.bounded(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  REQUIRE(seen.size() == 7);
}

TEST_CASE("rng sequences are reproducible per seed", "[common]") {
  Rng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const double x = a.uniform();
    REQUIRE(x == b.uniform());
    if (x != c.uniform()) any_diff = true;
  }
  REQUIRE(any_diff);
}

TEST_CASE("derive_seed splits streams and indices apart", "[common]") {
  const std::uint64_t base = 7;
  std::set<std::uint64_t> seeds;
  seeds.insert(derive_seed(base, "init"));
  seeds.insert(derive_seed(base, "dropout"));
  seeds.insert(derive_seed(base, "shuffle.mle", 0));
  seeds.insert(derive_seed(base, "shuffle.mle", 1));
  seeds.insert(derive_seed(base, "calib.round", 1));
  REQUIRE(seeds.size() == 5);
  REQUIRE(derive_seed(base, "init") == derive_seed(base, "init"));
  REQUIRE(derive_seed(base, "init") != derive_seed(base + 1, "init"));
}

TEST_CASE("shuffle is a permutation and deterministic", "[common]") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  REQUIRE(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("fnv1a64 matches known digests", "[common]") {
  // Standard FNV-1a test vectors.
  REQUIRE(fnv1a64("") == 0xcbf29ce484222325ull);
  REQUIRE(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  REQUIRE(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("hex64 renders fixed-width lowercase hex", "[common]") {
  REQUIRE(hex64(0) == "0000000000000000");
  REQUIRE(hex64(0xdeadbeefull) == "00000000deadbeef");
  REQUIRE(hex64(0xffffffffffffffffull) == "ffffffffffffffff");
}

TEST_CASE("parallel_chunks visits every chunk exactly once", "[common]") {
  const std::size_t n = 103;
  std::vector<std::atomic<int>> hits(n);
  for (auto& h : hits) h = 0;
  for (int workers : {1, 2, 4}) {
    for (auto& h : hits) h = 0;
    parallel_chunks(n, 8, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      REQUIRE(begin < end);
      REQUIRE(end - begin <= 8);
      for (std::size_t i = begin; i < end; ++i) hits[i]++;
    });
    for (std::size_t i = 0; i < n; ++i) REQUIRE(hits[i].load() == 1);
  }
}

TEST_CASE("parallel_chunks propagates worker exceptions", "[common]") {
  auto boom = [&](std::size_t chunk, std::size_t, std::size_t) {
    if (chunk == 3) throw DataError("chunk blew up");
  };
  REQUIRE_THROWS_AS(parallel_chunks(64, 8, 4, boom), DataError);
  REQUIRE_THROWS_AS(parallel_chunks(64, 8, 1, boom), DataError);
}

TEST_CASE("resolve_workers falls back to hardware for zero", "[common]") {
  REQUIRE(resolve_workers(1) == 1);
  REQUIRE(resolve_workers(5) == 5);
  REQUIRE(resolve_workers(0) >= 1);
}

TEST_CASE("error taxonomy keeps distinct types", "[common]") {
  REQUIRE_THROWS_AS(throw ConfigError("x"), Error);
  REQUIRE_THROWS_AS(throw MissingArtifactError("x"), Error);
  REQUIRE_THROWS_AS(throw NumericError("x"), Error);
  REQUIRE_THROWS_AS(throw DataError("x"), Error);
}

}  // namespace
}  // namespace rankoie
