#include <doctest.h>

#include <random>

#include "sacomp/chacha.hpp"
#include "sacomp/errors.hpp"
#include "sacomp/group.hpp"

using namespace sacomp;

namespace {

GroupVector random_vec(std::mt19937_64& rng, std::size_t n, int p) {
  std::vector<std::uint32_t> v(n);
  const std::uint32_t m = group_mask(p);
  for (auto& x : v) x = static_cast<std::uint32_t>(rng()) & m;
  return GroupVector(std::move(v), p);
}

}  // namespace

TEST_CASE("add_mod wraps at the modulus") {
  CHECK(add_mod(GroupVector({7}, 3), GroupVector({1}, 3)) == GroupVector({0}, 3));
  CHECK(add_mod(GroupVector({0, 0}, 8), GroupVector({5, 250}, 8)) ==
        GroupVector({5, 250}, 8));
}

TEST_CASE("sub_mod wraps below zero") {
  CHECK(sub_mod(GroupVector({0}, 3), GroupVector({1}, 3)) == GroupVector({7}, 3));
  CHECK(sub_mod(GroupVector({5}, 8), GroupVector({5}, 8)) == GroupVector({0}, 8));
}

TEST_CASE("add/sub roundtrip over random vectors") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_vec(rng, 32, 16);
    const auto b = random_vec(rng, 32, 16);
    CHECK(sub_mod(add_mod(a, b), b) == a);
  }
}

TEST_CASE("mismatched operands are rejected") {
  CHECK_THROWS_AS(add_mod(GroupVector({1}, 4), GroupVector({1}, 5)), DimensionError);
  CHECK_THROWS_AS(add_mod(GroupVector({1}, 4), GroupVector({1, 2}, 4)),
                  DimensionError);
  CHECK_THROWS_AS(GroupVector({16}, 4), DimensionError);
  CHECK_THROWS_AS(GroupVector({0}, 0), DimensionError);
  CHECK_THROWS_AS(GroupVector({0}, 33), DimensionError);
}

TEST_CASE("abelian group laws on random triples") {
  std::mt19937_64 rng(11);
  for (int p : {1, 5, 13, 32}) {
    const auto a = random_vec(rng, 64, p);
    const auto b = random_vec(rng, 64, p);
    const auto c = random_vec(rng, 64, p);
    CHECK(add_mod(add_mod(a, b), c) == add_mod(a, add_mod(b, c)));
    CHECK(add_mod(a, b) == add_mod(b, a));
    CHECK(add_mod(a, GroupVector::zeros(64, p)) == a);
    CHECK(sub_mod(add_mod(a, b), b) == a);
  }
}

TEST_CASE("mul_scalar_mod multiplies in the group") {
  CHECK(mul_scalar_mod(GroupVector({7, 20}, 5), 3) == GroupVector({21, 28}, 5));
  CHECK(mul_scalar_mod(GroupVector({1}, 32), 0xFFFFFFFFull) ==
        GroupVector({0xFFFFFFFFu}, 32));
  CHECK_THROWS_AS(mul_scalar_mod(GroupVector({1}, 8), 1ull << 32), CapacityError);
}

TEST_CASE("re-embedding widens freely and narrows only when values fit") {
  const GroupVector v({3, 15}, 4);
  CHECK(v.with_bit_width(9).bit_width() == 9);
  CHECK(v.with_bit_width(9).values() == v.values());
  CHECK(v.with_bit_width(4) == v);
  CHECK_THROWS_AS(v.with_bit_width(3), DimensionError);
}

TEST_CASE("expand_mask basics") {
  const MaskSeed seed = MaskSeed::from_words(1, 2);
  CHECK(expand_mask(seed, 0, 8).size() == 0);
  const auto a = expand_mask(seed, 100, 12);
  const auto b = expand_mask(seed, 100, 12);
  CHECK(a == b);
  const auto c = expand_mask(MaskSeed::from_words(1, 3), 100, 12);
  CHECK(a != c);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] <= group_mask(12));
}

TEST_CASE("expand_mask_at is a window into one stream") {
  const MaskSeed seed = MaskSeed::from_words(42, 0);
  const auto whole = expand_mask(seed, 300, 9);
  const auto window = expand_mask_at(seed, 37, 100, 9);
  for (std::size_t i = 0; i < 100; ++i) CHECK(window[i] == whole[37 + i]);
}

TEST_CASE("mask cancellation is exact for every p") {
  std::mt19937_64 rng(13);
  for (int p : {1, 2, 8, 17, 31, 32}) {
    const auto x = random_vec(rng, 257, p);
    const auto m = expand_mask(MaskSeed::from_words(rng(), rng()), 257, p);
    CHECK(sub_mod(add_mod(x, m), m) == x);
  }
}

TEST_CASE("expand_mask is chi-square uniform at p=8") {
  const auto draws = expand_mask(MaskSeed::from_words(0xFEED, 0xBEEF), 100000, 8);
  std::array<double, 256> counts{};
  for (std::size_t i = 0; i < draws.size(); ++i) counts[draws[i]] += 1.0;
  const double expected = 100000.0 / 256.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // df = 255, upper tail at significance 0.01
  CHECK(chi2 < 310.457);
}

TEST_CASE("DrawStream matches random-access draws") {
  const MaskSeed seed = MaskSeed::from_words(5, 6);
  DrawStream s(seed, 2, 9);
  for (std::uint64_t i = 0; i < 40; ++i) {
    CHECK(s.next64() == stream_draw64(seed, 2, 9, i));
  }
}

TEST_CASE("derive_subseed separates streams") {
  const MaskSeed root = MaskSeed::from_words(77, 88);
  const MaskSeed a = derive_subseed(root, 0);
  const MaskSeed b = derive_subseed(root, 1);
  CHECK(a == derive_subseed(root, 0));
  CHECK(a != b);
  CHECK(a != root);
  // Derivation must not collide with the root's own mask stream.
  CHECK(expand_mask(a, 16, 32) != expand_mask(root, 16, 32));
}

TEST_CASE("pack sizes and byte-aligned layout") {
  CHECK(pack(GroupVector(std::vector<std::uint32_t>(8, 0), 5)).size() == 5);
  CHECK(pack(GroupVector({1, 2, 3}, 8)) == std::vector<std::uint8_t>{1, 2, 3});
}

TEST_CASE("pack/unpack is a bijection for every p") {
  std::mt19937_64 rng(23);
  for (int p = 1; p <= 32; ++p) {
    for (std::size_t n : {0u, 1u, 7u, 64u, 129u}) {
      const auto v = random_vec(rng, n, p);
      CHECK(unpack(pack(v), n, p) == v);
    }
  }
}

TEST_CASE("unpack rejects malformed bodies") {
  const auto bytes = pack(GroupVector({3, 1, 2}, 5));
  CHECK_THROWS_AS(unpack(bytes, 4, 5), FramingError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(unpack(longer, 3, 5), FramingError);
  auto padded = bytes;
  padded.back() |= 0x80;  // 3*5 = 15 bits, the top padding bit must be zero
  CHECK_THROWS_AS(unpack(padded, 3, 5), FramingError);
}

TEST_CASE("frozen mask-stream vectors") {
  std::array<std::uint8_t, 16> sb{};
  for (int i = 0; i < 16; ++i) sb[i] = static_cast<std::uint8_t>(i);
  const MaskSeed seed(sb);
  CHECK(expand_mask(seed, 8, 16).values() ==
        std::vector<std::uint32_t>{0x2382, 0x0aca, 0xfd3e, 0x5da8, 0x2744,
                                   0x664b, 0x0b64, 0xb2db});
  CHECK(expand_mask(seed, 4, 32).values() ==
        std::vector<std::uint32_t>{0xa03a2382, 0x57140aca, 0xe934fd3e,
                                   0x97a65da8});
  CHECK(pack(GroupVector({1, 2, 3, 4, 5, 6, 7, 8}, 5)) ==
        std::vector<std::uint8_t>{0x41, 0x0c, 0x52, 0xcc, 0x41});
  CHECK(derive_subseed(seed, 42).hex() == "5bac3d8eaa0a9a66969cf106af8e4730");
}

TEST_CASE("chacha block matches the RFC 7539 vector") {
  chacha::Key key{};
  for (int i = 0; i < 32; ++i) key[i] = static_cast<std::uint8_t>(i);
  chacha::Nonce nonce{0x00, 0x00, 0x00, 0x09, 0x00, 0x00,
                      0x00, 0x4a, 0x00, 0x00, 0x00, 0x00};
  const chacha::Block out = chacha::block(key, 1, nonce);
  const std::array<std::uint32_t, 16> expected = {
      0xe4e7f110, 0x15593bd1, 0x1fdd0f50, 0xc47120a3,
      0xc7f4d1c7, 0x0368c033, 0x9aaa2204, 0x4e6cd4c3,
      0x466482d2, 0x09aa9f07, 0x05d7c214, 0xa2028bd9,
      0xd19c12b5, 0xb94e16de, 0xe883d0cb, 0x4e3c50a2};
  CHECK(out == expected);
}
