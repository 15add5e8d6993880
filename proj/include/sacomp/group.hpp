#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sacomp {

// All masked payloads live in Z_{2^p} with p in [1, 32]. Elements are stored
// as uint32 residues; arithmetic wraps modulo 2^p exactly because 2^p divides
// 2^32.

constexpr int kMaxBitWidth = 32;

// Residue mask for a p-bit group, i.e. 2^p - 1.
std::uint32_t group_mask(int bit_width);

// ceil(log2(n)) for n >= 1; 0 for n <= 1.
int ceil_log2(std::uint64_t n);

// 128-bit key for the mask stream. Expansion is a keyed counter-based PRF:
// ChaCha20 (RFC 7539 block function) keyed with seed || 16 zero bytes.
// The 12-byte nonce is a domain tag: bytes 0..3 = stream domain (little
// endian), bytes 4..11 = a 64-bit label (little endian). Domains in use:
//   0  mask streams (expand_mask)
//   1  subseed derivation (label = tag)
//   2  pruning mask shuffles
//   3  k-means sampling
// Word w of a stream is word w%16 of block w/16. This construction is frozen;
// golden vectors live in the test suite and README.
class MaskSeed {
 public:
  MaskSeed() = default;
  explicit MaskSeed(const std::array<std::uint8_t, 16>& bytes) : bytes_(bytes) {}
  static MaskSeed from_words(std::uint64_t lo, std::uint64_t hi);

  const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }
  std::string hex() const;

  bool operator==(const MaskSeed&) const = default;

 private:
  std::array<std::uint8_t, 16> bytes_{};
};

class GroupVector {
 public:
  GroupVector() = default;
  // Validates bit_width in [1, 32] and every element < 2^bit_width.
  GroupVector(std::vector<std::uint32_t> values, int bit_width);
  static GroupVector zeros(std::size_t n, int bit_width);

  std::size_t size() const { return values_.size(); }
  int bit_width() const { return bit_width_; }
  std::uint32_t mask() const { return group_mask(bit_width_); }
  const std::vector<std::uint32_t>& values() const { return values_; }
  std::uint32_t operator[](std::size_t i) const { return values_[i]; }

  // Re-embeds the same residues in a wider (or equal) group. Narrowing is
  // allowed only when every element already fits.
  GroupVector with_bit_width(int bit_width) const;

  bool operator==(const GroupVector&) const = default;

 private:
  std::vector<std::uint32_t> values_;
  int bit_width_ = 1;
};

// Elementwise (a + b) mod 2^p. Throws DimensionError on mismatched p/length.
GroupVector add_mod(const GroupVector& a, const GroupVector& b);

// Elementwise (a - b) mod 2^p.
GroupVector sub_mod(const GroupVector& a, const GroupVector& b);

// Elementwise (a * scalar) mod 2^p; scalar must be < 2^32.
GroupVector mul_scalar_mod(const GroupVector& a, std::uint64_t scalar);

// Deterministic pseudo-random vector, each element uniform over [0, 2^p - 1].
// Element i consumes exactly one 32-bit stream word (word_offset + i) and
// keeps its low p bits; a power-of-two modulus makes this exact-uniform.
GroupVector expand_mask(const MaskSeed& seed, std::size_t length, int bit_width);
GroupVector expand_mask_at(const MaskSeed& seed, std::uint64_t word_offset,
                           std::size_t length, int bit_width);

// 64-bit draws from an auxiliary stream (two words per draw), used by the
// seeded shuffles and k-means sampling. `domain` selects the nonce domain.
std::uint64_t stream_draw64(const MaskSeed& seed, std::uint32_t domain,
                            std::uint64_t label, std::uint64_t draw_index);

// Sequential view over the same draw stream; draw i of DrawStream equals
// stream_draw64(seed, domain, label, i).
class DrawStream {
 public:
  DrawStream(const MaskSeed& seed, std::uint32_t domain, std::uint64_t label);
  std::uint64_t next64();
  // Uniform double in [0, 1) from the top 53 bits of a draw.
  double next_unit();

 private:
  std::array<std::uint8_t, 32> key_{};
  std::array<std::uint8_t, 12> nonce_{};
  std::array<std::uint32_t, 16> block_{};
  std::uint64_t next_word_ = 0;
  std::uint64_t cached_block_ = ~0ull;
};

// Derives an independent 128-bit subseed (per-tensor masks, per-client
// seeds): first 16 bytes of the domain-1 stream labelled `tag`.
MaskSeed derive_subseed(const MaskSeed& seed, std::uint64_t tag);

// Wire layout for masked payload bodies: values in index order, each
// occupying exactly p bits, LSB-first within each value, bits filled into
// bytes little-endian, final partial byte zero-padded in its high bits.
std::size_t packed_byte_count(std::size_t length, int bit_width);
std::vector<std::uint8_t> pack(const GroupVector& v);

// Inverse of pack. Throws FramingError when the byte count is not exactly
// ceil(length*p/8) or the padding bits are nonzero.
GroupVector unpack(std::span<const std::uint8_t> bytes, std::size_t length,
                   int bit_width);

}  // namespace sacomp
