#include "sacomp/pq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "sacomp/errors.hpp"

namespace sacomp::pq {

namespace {

constexpr std::uint32_t kKMeansDomain = 3;
constexpr double kRelImprovementTol = 1e-6;

double dist2(std::span<const double> a, const double* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

Blocks Blocks::from_raw(std::size_t d, std::vector<double> values) {
  if (d == 0 || values.size() % d != 0) {
    throw DimensionError("raw block data length must be a multiple of d");
  }
  Blocks b;
  b.d = d;
  b.block_rows = values.size() / d;
  b.cols = 1;
  b.data = std::move(values);
  return b;
}

Blocks split_blocks(const Matrix& w, std::size_t d) {
  if (d == 0 || w.rows % d != 0) {
    throw DimensionError("block size " + std::to_string(d) +
                         " does not divide input dim " + std::to_string(w.rows));
  }
  Blocks b;
  b.d = d;
  b.block_rows = w.rows / d;
  b.cols = w.cols;
  b.data = w.data;  // column-major storage is already in flat block order
  return b;
}

Matrix merge_blocks(const Blocks& blocks) {
  Matrix w(blocks.block_rows * blocks.d, blocks.cols);
  w.data = blocks.data;
  return w;
}

std::size_t adapt_block_size(std::size_t layer_input_dim, std::size_t requested_d) {
  if (layer_input_dim == 0 || requested_d == 0) {
    throw DimensionError("dimensions must be >= 1");
  }
  for (std::size_t d = std::min(requested_d, layer_input_dim); d > 1; --d) {
    if (layer_input_dim % d == 0) return d;
  }
  return 1;
}

KMeansResult train_codebook(const Blocks& blocks, std::size_t k,
                            std::size_t max_iters, const MaskSeed& seed) {
  const std::size_t n = blocks.count();
  const std::size_t d = blocks.d;
  if (n == 0) {
    throw DimensionError("cannot train a codebook on zero blocks");
  }
  if (k == 0) {
    throw DimensionError("codeword count must be >= 1");
  }

  KMeansResult result;
  result.codebook.k = k;
  result.codebook.d = d;
  result.codebook.data.assign(k * d, 0.0);
  auto centroid = [&](std::size_t r) { return result.codebook.data.data() + r * d; };

  DrawStream draws(seed, kKMeansDomain, 0);

  // k-means++ seeding. When the remaining distance mass is zero there are
  // fewer distinct blocks than codewords; duplicate and flag.
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  {
    const std::size_t first = static_cast<std::size_t>(draws.next64() % n);
    std::copy_n(blocks.block(first).data(), d, centroid(0));
    for (std::size_t i = 0; i < n; ++i) {
      min_d2[i] = dist2(blocks.block(i), centroid(0));
    }
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : min_d2) total += v;
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = draws.next_unit() * total;
        double run = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          run += min_d2[i];
          if (run > target) {
            pick = i;
            break;
          }
        }
      } else {
        result.degenerate = true;
      }
      std::copy_n(blocks.block(pick).data(), d, centroid(c));
      for (std::size_t i = 0; i < n; ++i) {
        min_d2[i] = std::min(min_d2[i], dist2(blocks.block(i), centroid(c)));
      }
    }
  }

  std::vector<std::uint32_t> labels(n, 0);
  std::vector<std::size_t> counts(k, 0);
  double prev_distortion = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    double distortion = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_r = 0;
      for (std::size_t r = 0; r < k; ++r) {
        const double v = dist2(blocks.block(i), centroid(r));
        if (v < best) {
          best = v;
          best_r = static_cast<std::uint32_t>(r);
        }
      }
      labels[i] = best_r;
      counts[best_r]++;
      distortion += best;
    }
    result.iterations = iter + 1;
    result.distortion = distortion;
    result.distortion_history.push_back(distortion);

    // Reseed empty clusters from the farthest member of the largest one.
    bool reseeded = false;
    for (std::size_t r = 0; r < k; ++r) {
      if (counts[r] != 0) continue;
      const std::size_t big = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[big] <= 1) {
        result.degenerate = true;
        continue;
      }
      double far_d = -1.0;
      std::size_t far_i = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != big) continue;
        const double v = dist2(blocks.block(i), centroid(big));
        if (v > far_d) {
          far_d = v;
          far_i = i;
        }
      }
      std::copy_n(blocks.block(far_i).data(), d, centroid(r));
      labels[far_i] = static_cast<std::uint32_t>(r);
      counts[big]--;
      counts[r]++;
      reseeded = true;
    }

    // Update step.
    std::vector<double> sums(k * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto blk = blocks.block(i);
      double* s = sums.data() + labels[i] * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += blk[j];
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (counts[r] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        centroid(r)[j] = sums[r * d + j] / static_cast<double>(counts[r]);
      }
    }

    if (!reseeded && prev_distortion - distortion <
                         kRelImprovementTol * std::max(prev_distortion, 1e-30)) {
      break;
    }
    prev_distortion = distortion;
  }
  // Final distortion under the updated centroids.
  double final_distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < k; ++r) {
      best = std::min(best, dist2(blocks.block(i), centroid(r)));
    }
    final_distortion += best;
  }
  result.distortion = final_distortion;
  result.distortion_history.push_back(final_distortion);
  return result;
}

Assignments assign(const Blocks& blocks, const Codebook& codebook) {
  if (blocks.d != codebook.d) {
    throw DimensionError("block dim " + std::to_string(blocks.d) +
                         " does not match codeword dim " + std::to_string(codebook.d));
  }
  Assignments a;
  a.block_rows = blocks.block_rows;
  a.cols = blocks.cols;
  a.indices.resize(blocks.count());
  for (std::size_t i = 0; i < blocks.count(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_r = 0;
    for (std::size_t r = 0; r < codebook.k; ++r) {
      const double v = dist2(blocks.block(i), codebook.codeword(r).data());
      if (v < best) {
        best = v;
        best_r = static_cast<std::uint32_t>(r);
      }
    }
    a.indices[i] = best_r;
  }
  return a;
}

Matrix decompress(const Codebook& codebook, const Assignments& assignments) {
  Blocks blocks;
  blocks.d = codebook.d;
  blocks.block_rows = assignments.block_rows;
  blocks.cols = assignments.cols;
  blocks.data.resize(assignments.count() * codebook.d);
  for (std::size_t i = 0; i < assignments.count(); ++i) {
    const std::uint32_t r = assignments.indices[i];
    if (r >= codebook.k) {
      throw DimensionError("assignment index " + std::to_string(r) +
                           " out of range for k=" + std::to_string(codebook.k));
    }
    std::copy_n(codebook.codeword(r).data(), codebook.d,
                blocks.data.data() + i * codebook.d);
  }
  return merge_blocks(blocks);
}

int assignment_bits(std::size_t k) {
  if (k == 0) {
    throw DimensionError("codeword count must be >= 1");
  }
  return std::max(1, ceil_log2(k));
}

std::uint64_t pq_uplink_bits(std::span<const LayerShape> layers, const PQConfig& cfg) {
  std::uint64_t bits = 0;
  for (const auto& layer : layers) {
    const std::size_t d = adapt_block_size(layer.rows, cfg.d);
    const std::uint64_t blocks = static_cast<std::uint64_t>(layer.rows / d) * layer.cols;
    bits += blocks * static_cast<std::uint64_t>(assignment_bits(cfg.k));
  }
  return bits;
}

std::uint64_t codebook_downlink_bytes(std::span<const LayerShape> layers,
                                      const PQConfig& cfg) {
  std::uint64_t bytes = 0;
  for (const auto& layer : layers) {
    const std::size_t d = adapt_block_size(layer.rows, cfg.d);
    bytes += static_cast<std::uint64_t>(cfg.k) * d * 4;
  }
  return bytes;
}

std::vector<std::uint8_t> serialize_codebook(const Codebook& cb) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + cb.data.size() * 4);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(cb.k));
  put_u32(static_cast<std::uint32_t>(cb.d));
  for (double v : cb.data) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(bits);
  }
  return out;
}

Codebook parse_codebook(std::span<const std::uint8_t> bytes) {
  auto get_u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  if (bytes.size() < 8) {
    throw FramingError("codebook record too short");
  }
  Codebook cb;
  cb.k = get_u32(0);
  cb.d = get_u32(4);
  if (bytes.size() != 8 + cb.k * cb.d * 4) {
    throw FramingError("codebook record length mismatch");
  }
  cb.data.resize(cb.k * cb.d);
  for (std::size_t i = 0; i < cb.data.size(); ++i) {
    const std::uint32_t bits = get_u32(8 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    cb.data[i] = f;
  }
  return cb;
}

}  // namespace sacomp::pq
