#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacomp/group.hpp"
#include "sacomp/pq.hpp"

namespace sacomp {

enum class SchemeTag : std::uint8_t {
  SQ = 0,
  Prune = 1,
  PqAssign = 2,
};

// One client-to-server frame. Wire form: 16-byte little-endian header
// (round_id u32, client_id u32, scheme_tag u8, p u8, reserved u16 = 0,
// body_len u32) followed by the bit-packed body.
struct MaskedPayload {
  std::uint32_t round_id = 0;
  std::uint32_t client_id = 0;
  SchemeTag scheme = SchemeTag::SQ;
  std::uint8_t p = 0;
  std::vector<std::uint8_t> body;

  bool operator==(const MaskedPayload&) const = default;
};

constexpr std::size_t kFrameHeaderBytes = 16;

std::vector<std::uint8_t> serialize_frame(const MaskedPayload& payload);
MaskedPayload parse_frame(std::span<const std::uint8_t> bytes);

// Client role: mask the compressed update in its group and frame it.
// `stream_word_offset` positions this segment inside the client's per-round
// mask stream (multi-segment uploads share one seed).
MaskedPayload client_encrypt(const GroupVector& q_update, const MaskSeed& seed,
                             std::uint32_t round_id, std::uint32_t client_id,
                             SchemeTag scheme, std::uint64_t stream_word_offset = 0);

// Mask with an explicit mask vector (the seam the seeded path is built on).
MaskedPayload client_encrypt_with_mask(const GroupVector& q_update,
                                       const GroupVector& mask,
                                       std::uint32_t round_id,
                                       std::uint32_t client_id, SchemeTag scheme);

// Weighted variant: (q * weight + mask) in the group. The caller is
// responsible for having reserved enough bit-width for the weighted sum.
MaskedPayload weighted_client_encrypt(const GroupVector& q_update,
                                      std::uint64_t weight, const MaskSeed& seed,
                                      std::uint32_t round_id,
                                      std::uint32_t client_id, SchemeTag scheme,
                                      std::uint64_t stream_word_offset = 0);

// TEE-side helper: unmask one payload (used by SecInd and by tests).
GroupVector decrypt_payload(const MaskedPayload& payload, const MaskSeed& seed,
                            std::size_t element_count,
                            std::uint64_t stream_word_offset = 0);

// TEE role for SecAgg: the modular sum of every client's expanded mask.
GroupVector tee_mask_sum(std::span<const MaskSeed> seeds, std::size_t length,
                         int bit_width, std::uint64_t stream_word_offset = 0);

// Server role: sum the masked payloads and subtract the TEE mask sum; the
// result is exactly the modular sum of the compressed client updates. All
// payloads must share round, scheme, p and length, and their count must
// match the seed list the TEE saw.
GroupVector server_aggregate_secagg(std::span<const MaskedPayload> payloads,
                                    const GroupVector& mask_sum,
                                    std::size_t expected_clients);

// --- Secure Indexing -------------------------------------------------------

// Masking group for assignment matrices: Z_{2^ceil(log2 k)} when k is a
// power of two (exact-uniform single-word masks), additive masking modulo k
// otherwise (two stream words per element). Either way the wire width is
// ceil(log2 k) bits per assignment.
MaskedPayload client_encrypt_assignments(const pq::Assignments& assignments,
                                         std::size_t k, const MaskSeed& seed,
                                         std::uint32_t round_id,
                                         std::uint32_t client_id,
                                         std::uint64_t stream_word_offset = 0);

// Per-block histogram of codeword indices across clients.
struct AssignmentHistograms {
  std::size_t k = 0;
  std::size_t n_blocks = 0;
  std::vector<std::uint32_t> counts;  // n_blocks x k, block-major

  std::span<const std::uint32_t> block(std::size_t b) const {
    return {counts.data() + b * k, k};
  }
};

// TEE role for SecInd: decrypt each assignment matrix and tally per-block
// histograms. A decrypted index >= k marks a corrupt client.
AssignmentHistograms tee_histograms(std::span<const MaskedPayload> payloads,
                                    std::span<const MaskSeed> seeds,
                                    std::size_t k, std::size_t n_blocks,
                                    std::uint64_t stream_word_offset = 0);

// Server role for SecInd: per-block weighted codeword sums,
// sum_r H[r] * C[r], merged back into matrix layout.
pq::Matrix server_reconstruct_secind(const AssignmentHistograms& histograms,
                                     const pq::Codebook& codebook,
                                     std::size_t block_rows, std::size_t cols);

// --- Simulator-only oracle --------------------------------------------------

// Fraction of positions whose true (unwrapped) integer sum reaches 2^p,
// i.e. where the modular aggregate wrapped. Requires plaintext access, so
// it lives behind the simulator, never on the protocol path.
double detect_overflows(std::span<const GroupVector> updates, int bit_width);

// Centered variant for symmetric fixed-point payloads: positions where the
// zero-offset-corrected sum falls outside [-2^(p-1), 2^(p-1)), i.e. where
// the centered lift mis-decodes. `zero_offset` is total_weight * zero_point.
double detect_overflows_centered(std::span<const GroupVector> updates,
                                 int bit_width, std::uint64_t zero_offset);

}  // namespace sacomp
