#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacomp/group.hpp"

namespace sacomp::pq {

// Dense matrix in column-major order: column n holds the C_in values of
// output unit n, so PQ blocks are contiguous column segments.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[c * rows + r]; }
  double at(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
};

struct PQConfig {
  std::size_t k = 16;  // codeword count, >= 2
  std::size_t d = 4;   // requested block size, >= 1
};

// Blocks of one matrix: block (m, n) covers rows [m*d, (m+1)*d) of column n.
// Flat block index = n * block_rows + m, matching column-major traversal.
struct Blocks {
  std::size_t d = 1;
  std::size_t block_rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // count() * d, blocks back to back

  std::size_t count() const { return block_rows * cols; }
  std::span<const double> block(std::size_t i) const {
    return {data.data() + i * d, d};
  }
  // Free-standing block list (tests, cross-layer pools).
  static Blocks from_raw(std::size_t d, std::vector<double> values);
};

struct Codebook {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> data;  // k x d, row-major

  std::span<const double> codeword(std::size_t r) const {
    return {data.data() + r * d, d};
  }
};

// Codeword indices, one per block, stored in flat block order.
struct Assignments {
  std::size_t block_rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> indices;

  std::size_t count() const { return block_rows * cols; }
};

struct KMeansResult {
  Codebook codebook;
  double distortion = 0.0;
  std::size_t iterations = 0;
  bool degenerate = false;  // fewer distinct blocks than codewords
  std::vector<double> distortion_history;
};

// Splits the matrix columns into d-vectors. Throws when d does not divide
// rows; callers adapt d first.
Blocks split_blocks(const Matrix& w, std::size_t d);

// Inverse of split_blocks.
Matrix merge_blocks(const Blocks& blocks);

// Largest d' <= requested_d dividing layer_input_dim (d' = 1 always works).
std::size_t adapt_block_size(std::size_t layer_input_dim, std::size_t requested_d);

// Lloyd k-means under squared Euclidean distance with seeded k-means++
// initialization. Empty clusters are reseeded by splitting the largest
// cluster. Stops at max_iters or when the distortion improves by less than
// 1e-6 relative. Deterministic given the seed.
KMeansResult train_codebook(const Blocks& blocks, std::size_t k,
                            std::size_t max_iters, const MaskSeed& seed);

// Nearest codeword per block; ties break toward the lowest index.
Assignments assign(const Blocks& blocks, const Codebook& codebook);

// W_hat = C[A].
Matrix decompress(const Codebook& codebook, const Assignments& assignments);

// ceil(log2 k) bits per transmitted assignment.
int assignment_bits(std::size_t k);

struct LayerShape {
  std::size_t rows = 0;  // C_in
  std::size_t cols = 0;
};

// Total assignment bits for the given layers, with the block size adapted
// per layer.
std::uint64_t pq_uplink_bits(std::span<const LayerShape> layers, const PQConfig& cfg);

// Broadcast cost of the per-layer codebooks: k * d_layer * 4 bytes each.
std::uint64_t codebook_downlink_bytes(std::span<const LayerShape> layers,
                                      const PQConfig& cfg);

// Codebook wire form: u32 k, u32 d, then k*d f32 values row-major, all
// little endian.
std::vector<std::uint8_t> serialize_codebook(const Codebook& cb);
Codebook parse_codebook(std::span<const std::uint8_t> bytes);

}  // namespace sacomp::pq
