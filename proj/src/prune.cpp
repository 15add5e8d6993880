#include "sacomp/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sacomp/errors.hpp"

namespace sacomp {

namespace {

constexpr std::uint32_t kShuffleDomain = 2;

void check_spec(const PruneSpec& spec) {
  if (spec.size == 0) {
    throw DimensionError("prune spec has zero elements");
  }
  if (!(spec.sparsity >= 0.0 && spec.sparsity < 1.0)) {
    throw DimensionError("sparsity must be in [0, 1)");
  }
}

}  // namespace

std::size_t PruneSpec::kept_count() const {
  check_spec(*this);
  const auto pruned = static_cast<std::size_t>(
      std::floor(sparsity * static_cast<double>(size)));
  return size - pruned;
}

std::vector<std::uint32_t> derive_keep_indices(const PruneSpec& spec) {
  const std::size_t n = spec.size;
  const std::size_t kept = spec.kept_count();

  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  DrawStream draws(spec.mask_seed, kShuffleDomain, 0);
  for (std::size_t i = 0; i < kept && i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(draws.next64() % (n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(kept);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<double> compact(std::span<const double> tensor, const PruneSpec& spec) {
  if (tensor.size() != spec.size) {
    throw DimensionError("tensor length " + std::to_string(tensor.size()) +
                         " does not match prune spec size " + std::to_string(spec.size));
  }
  const auto keep = derive_keep_indices(spec);
  std::vector<double> out(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out[i] = tensor[keep[i]];
  }
  return out;
}

std::vector<double> expand(std::span<const double> compacted, const PruneSpec& spec) {
  const auto keep = derive_keep_indices(spec);
  if (compacted.size() != keep.size()) {
    throw DimensionError("compacted length " + std::to_string(compacted.size()) +
                         " does not match kept count " + std::to_string(keep.size()));
  }
  std::vector<double> out(spec.size, 0.0);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out[keep[i]] = compacted[i];
  }
  return out;
}

std::uint64_t pruned_uplink_bits(const PruneSpec& spec, int bit_width) {
  group_mask(bit_width);
  return static_cast<std::uint64_t>(spec.kept_count()) * bit_width;
}

}  // namespace sacomp
