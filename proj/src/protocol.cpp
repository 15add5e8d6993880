#include "sacomp/protocol.hpp"

#include <bit>
#include <string>

#include "sacomp/errors.hpp"

namespace sacomp {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
  return v;
}

MaskedPayload make_payload(const GroupVector& masked, std::uint32_t round_id,
                           std::uint32_t client_id, SchemeTag scheme) {
  MaskedPayload payload;
  payload.round_id = round_id;
  payload.client_id = client_id;
  payload.scheme = scheme;
  payload.p = static_cast<std::uint8_t>(masked.bit_width());
  payload.body = pack(masked);
  return payload;
}

// Per-element assignment masks modulo k. Power-of-two k uses one stream
// word (exact-uniform); otherwise two words are reduced mod k.
std::vector<std::uint32_t> assignment_masks(const MaskSeed& seed,
                                            std::uint64_t word_offset,
                                            std::size_t count, std::size_t k) {
  if (std::has_single_bit(k)) {
    return expand_mask_at(seed, word_offset, count, pq::assignment_bits(k)).values();
  }
  const GroupVector raw = expand_mask_at(seed, word_offset, 2 * count, 32);
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t lo = raw[2 * i];
    const std::uint64_t hi = raw[2 * i + 1];
    out[i] = static_cast<std::uint32_t>(((hi << 32) | lo) % k);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_frame(const MaskedPayload& payload) {
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + payload.body.size());
  put_u32(out, payload.round_id);
  put_u32(out, payload.client_id);
  out.push_back(static_cast<std::uint8_t>(payload.scheme));
  out.push_back(payload.p);
  out.push_back(0);  // reserved
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(payload.body.size()));
  out.insert(out.end(), payload.body.begin(), payload.body.end());
  return out;
}

MaskedPayload parse_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderBytes) {
    throw FramingError("frame shorter than its 16-byte header");
  }
  MaskedPayload payload;
  payload.round_id = get_u32(bytes, 0);
  payload.client_id = get_u32(bytes, 4);
  const std::uint8_t tag = bytes[8];
  if (tag > static_cast<std::uint8_t>(SchemeTag::PqAssign)) {
    throw FramingError("unknown scheme tag " + std::to_string(tag));
  }
  payload.scheme = static_cast<SchemeTag>(tag);
  payload.p = bytes[9];
  if (payload.p < 1 || payload.p > kMaxBitWidth) {
    throw FramingError("invalid bit-width " + std::to_string(payload.p));
  }
  if (bytes[10] != 0 || bytes[11] != 0) {
    throw FramingError("reserved header bytes must be zero");
  }
  const std::uint32_t body_len = get_u32(bytes, 12);
  if (bytes.size() != kFrameHeaderBytes + body_len) {
    throw FramingError("frame length does not match body_len");
  }
  payload.body.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return payload;
}

MaskedPayload client_encrypt_with_mask(const GroupVector& q_update,
                                       const GroupVector& mask,
                                       std::uint32_t round_id,
                                       std::uint32_t client_id, SchemeTag scheme) {
  return make_payload(add_mod(q_update, mask), round_id, client_id, scheme);
}

MaskedPayload client_encrypt(const GroupVector& q_update, const MaskSeed& seed,
                             std::uint32_t round_id, std::uint32_t client_id,
                             SchemeTag scheme, std::uint64_t stream_word_offset) {
  const GroupVector mask = expand_mask_at(seed, stream_word_offset,
                                          q_update.size(), q_update.bit_width());
  return client_encrypt_with_mask(q_update, mask, round_id, client_id, scheme);
}

MaskedPayload weighted_client_encrypt(const GroupVector& q_update,
                                      std::uint64_t weight, const MaskSeed& seed,
                                      std::uint32_t round_id,
                                      std::uint32_t client_id, SchemeTag scheme,
                                      std::uint64_t stream_word_offset) {
  return client_encrypt(mul_scalar_mod(q_update, weight), seed, round_id,
                        client_id, scheme, stream_word_offset);
}

GroupVector decrypt_payload(const MaskedPayload& payload, const MaskSeed& seed,
                            std::size_t element_count,
                            std::uint64_t stream_word_offset) {
  const GroupVector masked = unpack(payload.body, element_count, payload.p);
  const GroupVector mask =
      expand_mask_at(seed, stream_word_offset, element_count, payload.p);
  return sub_mod(masked, mask);
}

GroupVector tee_mask_sum(std::span<const MaskSeed> seeds, std::size_t length,
                         int bit_width, std::uint64_t stream_word_offset) {
  if (seeds.empty()) {
    throw ProtocolError("mask sum requires at least one seed");
  }
  GroupVector acc = GroupVector::zeros(length, bit_width);
  for (const MaskSeed& seed : seeds) {
    acc = add_mod(acc, expand_mask_at(seed, stream_word_offset, length, bit_width));
  }
  return acc;
}

GroupVector server_aggregate_secagg(std::span<const MaskedPayload> payloads,
                                    const GroupVector& mask_sum,
                                    std::size_t expected_clients) {
  if (payloads.empty()) {
    throw ProtocolError("no payloads to aggregate");
  }
  if (payloads.size() != expected_clients) {
    throw ProtocolError("received " + std::to_string(payloads.size()) +
                        " payloads for " + std::to_string(expected_clients) +
                        " expected clients");
  }
  const MaskedPayload& first = payloads.front();
  for (const MaskedPayload& payload : payloads) {
    if (payload.round_id != first.round_id || payload.scheme != first.scheme ||
        payload.p != first.p || payload.body.size() != first.body.size()) {
      throw ProtocolError("heterogeneous payloads in one aggregation");
    }
  }
  if (first.p != mask_sum.bit_width()) {
    throw ProtocolError("payload bit-width does not match mask sum");
  }
  GroupVector acc = GroupVector::zeros(mask_sum.size(), mask_sum.bit_width());
  for (const MaskedPayload& payload : payloads) {
    acc = add_mod(acc, unpack(payload.body, mask_sum.size(), mask_sum.bit_width()));
  }
  return sub_mod(acc, mask_sum);
}

MaskedPayload client_encrypt_assignments(const pq::Assignments& assignments,
                                         std::size_t k, const MaskSeed& seed,
                                         std::uint32_t round_id,
                                         std::uint32_t client_id,
                                         std::uint64_t stream_word_offset) {
  const int bits = pq::assignment_bits(k);
  const std::size_t n = assignments.count();
  const auto masks = assignment_masks(seed, stream_word_offset, n, k);
  std::vector<std::uint32_t> masked(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t a = assignments.indices[i];
    if (a >= k) {
      throw ProtocolError("assignment index out of range");
    }
    masked[i] = static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(a) + masks[i]) % k);
  }
  return make_payload(GroupVector(std::move(masked), bits), round_id, client_id,
                      SchemeTag::PqAssign);
}

AssignmentHistograms tee_histograms(std::span<const MaskedPayload> payloads,
                                    std::span<const MaskSeed> seeds,
                                    std::size_t k, std::size_t n_blocks,
                                    std::uint64_t stream_word_offset) {
  if (payloads.size() != seeds.size()) {
    throw ProtocolError("one mask seed required per assignment payload");
  }
  if (payloads.empty()) {
    throw ProtocolError("no assignment payloads");
  }
  const int bits = pq::assignment_bits(k);
  AssignmentHistograms hist;
  hist.k = k;
  hist.n_blocks = n_blocks;
  hist.counts.assign(n_blocks * k, 0);
  for (std::size_t c = 0; c < payloads.size(); ++c) {
    const MaskedPayload& payload = payloads[c];
    if (payload.scheme != SchemeTag::PqAssign || payload.p != bits) {
      throw ProtocolError("payload is not an assignment matrix for this k");
    }
    const GroupVector masked = unpack(payload.body, n_blocks, bits);
    const auto masks = assignment_masks(seeds[c], stream_word_offset, n_blocks, k);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      if (masked[b] >= k) {
        throw ProtocolError("assignment outside Z_k from client " +
                            std::to_string(payload.client_id));
      }
      const std::uint64_t r =
          (static_cast<std::uint64_t>(masked[b]) + k - masks[b]) % k;
      hist.counts[b * k + r]++;
    }
  }
  return hist;
}

pq::Matrix server_reconstruct_secind(const AssignmentHistograms& histograms,
                                     const pq::Codebook& codebook,
                                     std::size_t block_rows, std::size_t cols) {
  if (histograms.k != codebook.k) {
    throw ProtocolError("histogram k does not match codebook k");
  }
  if (histograms.n_blocks != block_rows * cols) {
    throw ProtocolError("histogram count does not match block layout");
  }
  pq::Blocks blocks;
  blocks.d = codebook.d;
  blocks.block_rows = block_rows;
  blocks.cols = cols;
  blocks.data.assign(histograms.n_blocks * codebook.d, 0.0);
  for (std::size_t b = 0; b < histograms.n_blocks; ++b) {
    double* out = blocks.data.data() + b * codebook.d;
    const auto counts = histograms.block(b);
    for (std::size_t r = 0; r < codebook.k; ++r) {
      if (counts[r] == 0) continue;
      const auto cw = codebook.codeword(r);
      const double w = static_cast<double>(counts[r]);
      for (std::size_t j = 0; j < codebook.d; ++j) {
        out[j] += w * cw[j];
      }
    }
  }
  return pq::merge_blocks(blocks);
}

double detect_overflows(std::span<const GroupVector> updates, int bit_width) {
  if (updates.empty()) {
    throw ProtocolError("overflow oracle needs at least one update");
  }
  const std::size_t n = updates.front().size();
  for (const GroupVector& u : updates) {
    if (u.size() != n) {
      throw DimensionError("updates must share one length");
    }
  }
  if (n == 0) return 0.0;
  const std::uint64_t modulus = 1ull << bit_width;
  std::size_t wrapped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t sum = 0;
    for (const GroupVector& u : updates) sum += u[i];
    if (sum >= modulus) wrapped++;
  }
  return static_cast<double>(wrapped) / static_cast<double>(n);
}

double detect_overflows_centered(std::span<const GroupVector> updates,
                                 int bit_width, std::uint64_t zero_offset) {
  if (updates.empty()) {
    throw ProtocolError("overflow oracle needs at least one update");
  }
  const std::size_t n = updates.front().size();
  for (const GroupVector& u : updates) {
    if (u.size() != n) {
      throw DimensionError("updates must share one length");
    }
  }
  if (n == 0) return 0.0;
  const std::int64_t half = 1ll << (bit_width - 1);
  std::size_t wrapped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t sum = -static_cast<std::int64_t>(zero_offset);
    for (const GroupVector& u : updates) sum += u[i];
    if (sum < -half || sum >= half) wrapped++;
  }
  return static_cast<double>(wrapped) / static_cast<double>(n);
}

}  // namespace sacomp
