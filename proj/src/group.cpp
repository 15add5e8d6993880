#include "sacomp/group.hpp"

#include <bit>
#include <cstdio>

#include "sacomp/chacha.hpp"
#include "sacomp/errors.hpp"

namespace sacomp {

namespace {

void check_bit_width(int p) {
  if (p < 1 || p > kMaxBitWidth) {
    throw DimensionError("bit width must be in [1, 32], got " + std::to_string(p));
  }
}

void check_compatible(const GroupVector& a, const GroupVector& b) {
  if (a.bit_width() != b.bit_width()) {
    throw DimensionError("group bit widths differ: " + std::to_string(a.bit_width()) +
                         " vs " + std::to_string(b.bit_width()));
  }
  if (a.size() != b.size()) {
    throw DimensionError("vector lengths differ: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

chacha::Key key_from_seed(const MaskSeed& seed) {
  chacha::Key key{};
  const auto& b = seed.bytes();
  for (int i = 0; i < 16; ++i) key[i] = b[i];
  return key;
}

chacha::Nonce make_nonce(std::uint32_t domain, std::uint64_t label) {
  chacha::Nonce nonce{};
  for (int i = 0; i < 4; ++i) nonce[i] = static_cast<std::uint8_t>(domain >> (8 * i));
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(label >> (8 * i));
  return nonce;
}

}  // namespace

std::uint32_t group_mask(int bit_width) {
  check_bit_width(bit_width);
  return bit_width == 32 ? 0xFFFFFFFFu : ((1u << bit_width) - 1u);
}

int ceil_log2(std::uint64_t n) {
  if (n <= 1) return 0;
  return std::bit_width(n - 1);
}

MaskSeed MaskSeed::from_words(std::uint64_t lo, std::uint64_t hi) {
  std::array<std::uint8_t, 16> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(lo >> (8 * i));
  for (int i = 0; i < 8; ++i) bytes[8 + i] = static_cast<std::uint8_t>(hi >> (8 * i));
  return MaskSeed(bytes);
}

std::string MaskSeed::hex() const {
  std::string out;
  out.reserve(32);
  for (std::uint8_t b : bytes_) {
    char buf[3];
    std::snprintf(buf, sizeof(buf), "%02x", b);
    out += buf;
  }
  return out;
}

GroupVector::GroupVector(std::vector<std::uint32_t> values, int bit_width)
    : values_(std::move(values)), bit_width_(bit_width) {
  const std::uint32_t m = group_mask(bit_width_);
  for (std::uint32_t v : values_) {
    if (v > m) {
      throw DimensionError("element " + std::to_string(v) + " out of range for p=" +
                           std::to_string(bit_width_));
    }
  }
}

GroupVector GroupVector::zeros(std::size_t n, int bit_width) {
  check_bit_width(bit_width);
  return GroupVector(std::vector<std::uint32_t>(n, 0u), bit_width);
}

GroupVector GroupVector::with_bit_width(int bit_width) const {
  return GroupVector(values_, bit_width);
}

GroupVector add_mod(const GroupVector& a, const GroupVector& b) {
  check_compatible(a, b);
  const std::uint32_t m = a.mask();
  std::vector<std::uint32_t> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (a[i] + b[i]) & m;
  }
  return GroupVector(std::move(out), a.bit_width());
}

GroupVector sub_mod(const GroupVector& a, const GroupVector& b) {
  check_compatible(a, b);
  const std::uint32_t m = a.mask();
  std::vector<std::uint32_t> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (a[i] - b[i]) & m;
  }
  return GroupVector(std::move(out), a.bit_width());
}

GroupVector mul_scalar_mod(const GroupVector& a, std::uint64_t scalar) {
  if (scalar > 0xFFFFFFFFull) {
    throw CapacityError("scalar weight exceeds 2^32");
  }
  const std::uint32_t m = a.mask();
  std::vector<std::uint32_t> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint32_t>(static_cast<std::uint64_t>(a[i]) * scalar) & m;
  }
  return GroupVector(std::move(out), a.bit_width());
}

GroupVector expand_mask(const MaskSeed& seed, std::size_t length, int bit_width) {
  return expand_mask_at(seed, 0, length, bit_width);
}

GroupVector expand_mask_at(const MaskSeed& seed, std::uint64_t word_offset,
                           std::size_t length, int bit_width) {
  const std::uint32_t m = group_mask(bit_width);
  const chacha::Key key = key_from_seed(seed);
  const chacha::Nonce nonce = make_nonce(0, 0);

  std::vector<std::uint32_t> out(length);
  std::uint64_t block_index = ~0ull;
  chacha::Block block{};
  for (std::size_t i = 0; i < length; ++i) {
    const std::uint64_t w = word_offset + i;
    if (w / 16 != block_index) {
      block_index = w / 16;
      block = chacha::block(key, static_cast<std::uint32_t>(block_index), nonce);
    }
    out[i] = block[w % 16] & m;
  }
  return GroupVector(std::move(out), bit_width);
}

std::uint64_t stream_draw64(const MaskSeed& seed, std::uint32_t domain,
                            std::uint64_t label, std::uint64_t draw_index) {
  const chacha::Key key = key_from_seed(seed);
  const chacha::Nonce nonce = make_nonce(domain, label);
  const std::uint64_t w = draw_index * 2;
  const chacha::Block block = chacha::block(key, static_cast<std::uint32_t>(w / 16), nonce);
  const std::uint64_t lo = block[w % 16];
  const std::uint64_t hi = block[w % 16 + 1];
  return lo | (hi << 32);
}

DrawStream::DrawStream(const MaskSeed& seed, std::uint32_t domain,
                       std::uint64_t label)
    : key_(key_from_seed(seed)), nonce_(make_nonce(domain, label)) {}

std::uint64_t DrawStream::next64() {
  const std::uint64_t w = next_word_;
  next_word_ += 2;
  if (w / 16 != cached_block_) {
    cached_block_ = w / 16;
    block_ = chacha::block(key_, static_cast<std::uint32_t>(cached_block_), nonce_);
  }
  const std::uint64_t lo = block_[w % 16];
  const std::uint64_t hi = block_[w % 16 + 1];
  return lo | (hi << 32);
}

double DrawStream::next_unit() {
  return static_cast<double>(next64() >> 11) * 0x1.0p-53;
}

MaskSeed derive_subseed(const MaskSeed& seed, std::uint64_t tag) {
  const chacha::Key key = key_from_seed(seed);
  const chacha::Block block = chacha::block(key, 0, make_nonce(1, tag));
  std::array<std::uint8_t, 16> bytes{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      bytes[4 * i + j] = static_cast<std::uint8_t>(block[i] >> (8 * j));
    }
  }
  return MaskSeed(bytes);
}

std::size_t packed_byte_count(std::size_t length, int bit_width) {
  check_bit_width(bit_width);
  const std::uint64_t bits = static_cast<std::uint64_t>(length) * bit_width;
  return static_cast<std::size_t>((bits + 7) / 8);
}

std::vector<std::uint8_t> pack(const GroupVector& v) {
  const int p = v.bit_width();
  std::vector<std::uint8_t> out(packed_byte_count(v.size(), p));
  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t oi = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc |= static_cast<std::uint64_t>(v[i]) << acc_bits;
    acc_bits += p;
    while (acc_bits >= 8) {
      out[oi++] = static_cast<std::uint8_t>(acc & 0xFF);
      acc >>= 8;
      acc_bits -= 8;
    }
  }
  if (acc_bits > 0) {
    out[oi++] = static_cast<std::uint8_t>(acc & 0xFF);
  }
  return out;
}

GroupVector unpack(std::span<const std::uint8_t> bytes, std::size_t length,
                   int bit_width) {
  const std::size_t expected = packed_byte_count(length, bit_width);
  if (bytes.size() != expected) {
    throw FramingError("packed body has " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(expected));
  }
  const std::uint32_t m = group_mask(bit_width);
  std::vector<std::uint32_t> out(length);
  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t bi = 0;
  for (std::size_t i = 0; i < length; ++i) {
    while (acc_bits < bit_width) {
      acc |= static_cast<std::uint64_t>(bytes[bi++]) << acc_bits;
      acc_bits += 8;
    }
    out[i] = static_cast<std::uint32_t>(acc) & m;
    acc >>= bit_width;
    acc_bits -= bit_width;
  }
  if (acc != 0) {
    throw FramingError("nonzero padding bits in packed body");
  }
  return GroupVector(std::move(out), bit_width);
}

}  // namespace sacomp
