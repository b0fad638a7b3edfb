#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/hash.hpp"

using namespace affinity;

namespace {

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

const char* kClient = "/[a-zA-Z0-9]+_";
const char* kClientNumber = "/[a-zA-Z0-9]+_[0-9]+_";

PoolRegistry table_pools() {
  PoolRegistry r;
  r.add(PoolSpec("/frames", 3, 1, kClient));
  r.add(PoolSpec("/states", 3, 1, kClient));
  r.add(PoolSpec("/positions", 5, 1, kClientNumber));
  r.add(PoolSpec("/predictions", 5, 1, kClientNumber));
  r.add(PoolSpec("/cd", 5, 1));
  return r;
}

}  // namespace

// Golden values computed with an independent script before the build.
TEST(Hash, Fnv1a64Goldens) {
  EXPECT_EQ(fnv1a64(""), 14695981039346656037ull);
  EXPECT_EQ(fnv1a64("a"), 12638187200555641996ull);
  EXPECT_EQ(fnv1a64("foobar"), 9625390261332436968ull);
  EXPECT_EQ(fnv1a64("/little3_"), 5976849065399555108ull);
  EXPECT_EQ(fnv1a64("/little3_7_"), 6030406801992300898ull);
  EXPECT_EQ(fnv1a64("/little3_42_"), 17610216536374257883ull);
  EXPECT_EQ(fnv1a64("/frames/little3_42"), 8068625203761187777ull);
  static_assert(fnv1a64("") == 14695981039346656037ull);
}

TEST(Hash, SplitMixGoldens) {
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 16294208416658607535ull);
  EXPECT_EQ(splitmix64(s), 7960286522194355700ull);
}

TEST(ValidateKey, Examples) {
  EXPECT_EQ(validate_key("/frames/little3_42").str(), "/frames/little3_42");
  EXPECT_EQ(error_of([] { validate_key("frames/little3"); }), ErrorCode::MalformedKey);
  EXPECT_EQ(error_of([] { validate_key("/"); }), ErrorCode::MalformedKey);
}

TEST(ValidateKey, Invariants) {
  EXPECT_EQ(error_of([] { validate_key(""); }), ErrorCode::MalformedKey);
  EXPECT_EQ(error_of([] { validate_key("/a//b"); }), ErrorCode::MalformedKey);
  EXPECT_EQ(error_of([] { validate_key("/a/"); }), ErrorCode::MalformedKey);
  EXPECT_EQ(error_of([] { validate_key("/a b"); }), ErrorCode::MalformedKey);
  EXPECT_EQ(error_of([] { validate_key("/a\tb"); }), ErrorCode::MalformedKey);
  EXPECT_NO_THROW(validate_key("/a"));
  EXPECT_NO_THROW(validate_key("/RCP/taxis/1234"));
}

TEST(ResolvePool, Examples) {
  PoolRegistry two;
  two.add(PoolSpec("/frames", 1, 1));
  two.add(PoolSpec("/states", 1, 1));
  EXPECT_EQ(resolve_pool(validate_key("/frames/little3_42"), two).path().str(), "/frames");

  PoolRegistry one;
  one.add(PoolSpec("/frames", 1, 1));
  EXPECT_EQ(error_of([&] { resolve_pool(validate_key("/framesX/a"), one); }), ErrorCode::NoSuchPool);

  auto table = table_pools();
  EXPECT_EQ(resolve_pool(validate_key("/cd/little3_42_7_5"), table).path().str(), "/cd");
}

TEST(ResolvePool, EmptyRegistryAndNesting) {
  PoolRegistry empty;
  EXPECT_EQ(error_of([&] { resolve_pool(validate_key("/a/b"), empty); }), ErrorCode::NoSuchPool);
  PoolRegistry r;
  r.add(PoolSpec("/a", 1, 1));
  EXPECT_EQ(error_of([&] { r.add(PoolSpec("/a", 2, 1)); }), ErrorCode::DuplicatePool);
  EXPECT_EQ(error_of([&] { r.add(PoolSpec("/a/b", 1, 1)); }), ErrorCode::DuplicatePool);
  EXPECT_NO_THROW(r.add(PoolSpec("/ab", 1, 1)));
}

TEST(PoolSpec, Validation) {
  EXPECT_EQ(error_of([] { PoolSpec("/p", 0, 1); }), ErrorCode::BadConfig);
  EXPECT_EQ(error_of([] { PoolSpec("/p", 1, 0); }), ErrorCode::BadConfig);
  EXPECT_EQ(error_of([] { PoolSpec("/p", 1, 1, "(a"); }), ErrorCode::BadRegex);
  EXPECT_EQ(error_of([] { PoolSpec("p", 1, 1); }), ErrorCode::MalformedKey);
  PoolSpec g("/grouping", 1, 1, "_[0-9]+");
  EXPECT_TRUE(g.grouped());
  EXPECT_EQ(g.affinity_regex(), "_[0-9]+");
  PoolSpec b("/no_grouping", 1, 1);
  EXPECT_FALSE(b.grouped());
}

TEST(ExtractAffinityKey, Examples) {
  auto ex = [](const char* re, const char* key) -> std::optional<std::string> {
    auto k = extract_affinity_key(re, validate_key(key));
    if (!k) return std::nullopt;
    return k->str();
  };
  EXPECT_EQ(ex(kClient, "/frames/little3_42"), "/little3_");
  EXPECT_EQ(ex(kClientNumber, "/positions/little3_7_42"), "/little3_7_");
  EXPECT_EQ(ex("_[0-9]+", "/grouping/example_1"), "_1");
  EXPECT_EQ(ex("/[0-9]+_", "/frames/little3"), std::nullopt);
  // An empty match is not a key.
  EXPECT_EQ(ex("x*", "/frames/little3"), std::nullopt);
}

TEST(ShardFor, Examples) {
  PoolSpec frames("/frames", 3, 1, kClient);
  EXPECT_EQ(shard_for(frames, validate_key("/frames/little3_42")),
            shard_for(frames, validate_key("/frames/little3_43")));

  PoolSpec single("/single", 1, 1);
  EXPECT_EQ(shard_for(single, validate_key("/single/anything_1")).index, 0u);

  // FNV-1a("/little3_7_") = 6030406801992300898, mod 5 = 3 (oracle script).
  PoolSpec positions("/positions", 5, 1, kClientNumber);
  auto s = shard_for(positions, validate_key("/positions/little3_7_42"));
  EXPECT_EQ(s.pool, "/positions");
  EXPECT_EQ(s.index, 3u);
}

TEST(ShardFor, BaselineHashesFullKey) {
  PoolSpec cd("/cd", 5, 1);
  // FNV-1a("/cd/little3_42_7_5") mod 5 = 2.
  EXPECT_EQ(shard_for(cd, validate_key("/cd/little3_42_7_5")).index, 2u);
  auto p = place(cd, validate_key("/cd/little3_42_7_5"));
  EXPECT_FALSE(p.affinity);
  EXPECT_FALSE(p.fallback);
}

TEST(ShardFor, NoMatchFallsBackToFullKey) {
  PoolSpec frames("/frames", 3, 1, "/[0-9]+_");
  auto p = place(frames, validate_key("/frames/little3_42"));
  EXPECT_TRUE(p.fallback);
  EXPECT_FALSE(p.affinity);
  EXPECT_EQ(p.shard.index, fnv1a64("/frames/little3_42") % 3);
}

TEST(ShardFor, CoResidencyOverGeneratedKeys) {
  PoolSpec positions("/positions", 7, 1, kClientNumber);
  std::map<std::string, std::set<std::uint32_t>> shards_of;
  for (const char* client : {"little3", "hyang5", "gates3", "c0"}) {
    for (int actor = 0; actor < 30; ++actor) {
      for (int frame = 0; frame < 40; ++frame) {
        auto key = validate_key("/positions/" + std::string(client) + "_" + std::to_string(actor) + "_" +
                                std::to_string(frame));
        auto p = place(positions, key);
        ASSERT_TRUE(p.affinity);
        shards_of[p.affinity->str()].insert(p.shard.index);
      }
    }
  }
  EXPECT_EQ(shards_of.size(), 120u);
  for (const auto& [label, shards] : shards_of) EXPECT_EQ(shards.size(), 1u) << label;
}

TEST(ShardFor, Deterministic) {
  PoolSpec a("/frames", 5, 1, kClient);
  PoolSpec b("/frames", 5, 1, kClient);
  for (int i = 0; i < 100; ++i) {
    auto key = validate_key("/frames/c" + std::to_string(i) + "_" + std::to_string(i * 7));
    EXPECT_EQ(shard_for(a, key), shard_for(b, key));
  }
}

TEST(ShardFor, BalanceWithinFifteenPercent) {
  std::mt19937_64 rng(7);
  const int n = 10'000;
  for (std::uint32_t shards : {3u, 5u, 7u}) {
    PoolSpec pool("/p", shards, 1, "/[a-z0-9]+_");
    std::vector<int> counts(shards, 0);
    std::set<std::string> seen;
    while (static_cast<int>(seen.size()) < n) {
      std::string label = "k" + std::to_string(rng());
      if (!seen.insert(label).second) continue;
      counts[shard_for(pool, validate_key("/p/" + label + "_1")).index]++;
    }
    const double expect = static_cast<double>(n) / shards;
    for (int c : counts) {
      EXPECT_GE(c, expect * 0.85);
      EXPECT_LE(c, expect * 1.15);
    }
  }
}

TEST(SegmentPrefix, Boundary) {
  EXPECT_TRUE(has_segment_prefix("/frames/a", "/frames"));
  EXPECT_TRUE(has_segment_prefix("/frames", "/frames"));
  EXPECT_FALSE(has_segment_prefix("/framesX/a", "/frames"));
  EXPECT_FALSE(has_segment_prefix("/fr", "/frames"));
}
