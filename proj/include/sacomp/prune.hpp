#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacomp/group.hpp"

namespace sacomp {

// Round-shared random pruning. The keep-set is a pure function of
// (mask_seed, size, sparsity), so only values travel on the wire; every
// participant re-derives the positions from the broadcast seed.
struct PruneSpec {
  MaskSeed mask_seed;
  double sparsity = 0.0;   // fraction pruned, in [0, 1)
  std::size_t size = 0;    // tensor element count

  // size - floor(sparsity * size); always >= 1 for a valid spec.
  std::size_t kept_count() const;
};

// Deterministic uniformly-random keep-set of kept_count() indices, sorted
// ascending. Sampled by a seeded partial Fisher-Yates shuffle over [0, n).
std::vector<std::uint32_t> derive_keep_indices(const PruneSpec& spec);

// Values at kept indices, in ascending index order.
std::vector<double> compact(std::span<const double> tensor, const PruneSpec& spec);

// Scatter back into zeros at the kept indices (the linear operator P).
std::vector<double> expand(std::span<const double> compacted, const PruneSpec& spec);

// kept_count * p: uplink cost of the values-only sparse payload.
std::uint64_t pruned_uplink_bits(const PruneSpec& spec, int bit_width);

}  // namespace sacomp
