#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "permnet/error.hpp"
#include "permnet/perm_key.hpp"
#include "permnet/reference_ops.hpp"
#include "random_model.hpp"

namespace permnet {
namespace {

std::vector<std::uint32_t> map_of(const PermKey& key) {
  return {key.map().begin(), key.map().end()};
}

TEST(SplitMix64, MatchesReferenceStream) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(GenerateKey, Deterministic) {
  EXPECT_EQ(generate_key(6, 9, 1234), generate_key(6, 9, 1234));
}

TEST(GenerateKey, SingleElement) {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL, ~0ULL}) {
    EXPECT_EQ(map_of(generate_key(1, 1, seed)), std::vector<std::uint32_t>{0});
  }
}

// Golden vectors produced by an independent Python splitmix64 + Fisher-Yates.
TEST(GenerateKey, GoldenVectors) {
  EXPECT_EQ(map_of(generate_key(2, 2, 42)), (std::vector<std::uint32_t>{2, 0, 3, 1}));
  EXPECT_EQ(map_of(generate_key(3, 3, 7)),
            (std::vector<std::uint32_t>{2, 6, 5, 1, 7, 8, 0, 4, 3}));
  EXPECT_EQ(map_of(generate_key(4, 4, 0)),
            (std::vector<std::uint32_t>{2, 10, 14, 11, 6, 1, 5, 13, 8, 3, 4, 7, 12, 9, 0, 15}));
  EXPECT_EQ(map_of(generate_key(1, 5, 123)), (std::vector<std::uint32_t>{3, 2, 1, 4, 0}));
}

TEST(GenerateKey, RejectsZeroArea) {
  try {
    generate_key(0, 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParameter);
  }
}

TEST(GenerateKey, AlwaysBijective) {
  testing::Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t h = 1 + rng() % 20, w = 1 + rng() % 20;
    const PermKey key = generate_key(h, w, rng());
    std::vector<std::uint32_t> sorted = map_of(key);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::uint32_t> expected(h * w);
    std::iota(expected.begin(), expected.end(), 0u);
    ASSERT_EQ(sorted, expected);
  }
}

TEST(InvertKey, Identity) {
  EXPECT_EQ(invert_key(PermKey::identity(3, 4)), PermKey::identity(3, 4));
}

TEST(InvertKey, ReversalIsSelfInverse) {
  EXPECT_EQ(map_of(invert_key(PermKey(2, 2, {3, 2, 1, 0}))),
            (std::vector<std::uint32_t>{3, 2, 1, 0}));
}

TEST(InvertKey, DefinitionAndInvolution) {
  testing::Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const PermKey key = testing::random_key(rng, 1 + rng() % 12, 1 + rng() % 12);
    const PermKey inv = invert_key(key);
    for (std::size_t q = 0; q < key.area(); ++q) ASSERT_EQ(inv[key[q]], q);
    ASSERT_EQ(invert_key(inv), key);
  }
}

TEST(InvertKey, GatherRoundTripIsBitwise) {
  testing::Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 1 + rng() % 10, w = 1 + rng() % 10;
    const Tensor x = testing::random_tensor(rng, {2, h, w});
    const PermKey key = testing::random_key(rng, h, w);
    ASSERT_TRUE(gather_spatial(gather_spatial(x, key), invert_key(key)).bitwise_equal(x));
  }
}

TEST(PermKeyType, RejectsDuplicateNamingIndex) {
  try {
    PermKey(2, 2, {0, 1, 1, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIntegrity);
    EXPECT_NE(e.message().find("index 1"), std::string::npos) << e.message();
  }
}

TEST(PermKeyType, RejectsOutOfRangeAndWrongLength) {
  EXPECT_THROW(PermKey(2, 2, {0, 1, 2, 4}), Error);
  EXPECT_THROW(PermKey(2, 2, {0, 1, 2}), Error);
  EXPECT_THROW(PermKey(0, 2, {}), Error);
}

}  // namespace
}  // namespace permnet
