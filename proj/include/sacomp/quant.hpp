#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sacomp/group.hpp"

namespace sacomp {

enum class QScheme { Affine, Symmetric };

// Per-tensor scalar quantization parameters, shared by every client in a
// round. The symmetric scheme lives in the unsigned group via z = 2^(b-1).
struct QParams {
  double scale = 1.0;
  std::uint32_t zero_point = 0;
  int bit_width = 8;

  bool operator==(const QParams&) const = default;
};

// Scale floor for degenerate ranges (max == min).
constexpr double kMinScale = 1e-12;

// MinMax calibration over the whole tensor.
//   affine:    s = (max - min) / (2^b - 1),   z = clamp(round(-min/s))
//   symmetric: s = max(|min|, |max|) / (2^(b-1) - 1),  z = 2^(b-1)
// The symmetric denominator is floored at 1 so b = 1 stays defined.
// Throws CalibrationError on an empty tensor.
QParams calibrate_minmax(std::span<const double> tensor, int bit_width,
                         QScheme scheme);

// w -> clamp(round(w / s) + z, [0, 2^b - 1]), round half away from zero.
GroupVector quantize(std::span<const double> tensor, const QParams& qp);

// w_q -> s * (w_q - z).
std::vector<double> dequantize(const GroupVector& q, const QParams& qp);

// Aggregate dequantizer for a modular sum of `total_weight` updates
// (client count when unweighted, sum of integer weights otherwise):
// x -> s * (x - total_weight * z). Exact whenever the integer sum did not
// wrap, which p >= min_safe_bitwidth guarantees.
std::vector<double> dequantize_aggregate(const GroupVector& q_sum,
                                         const QParams& qp,
                                         std::uint64_t total_weight);

// Wraparound-tolerant variant: the residue (x - total_weight * z) mod 2^p is
// lifted to [-2^(p-1), 2^(p-1)). With symmetric qparams this decodes the
// centered sum correctly even when the unsigned sum wrapped, as long as the
// centered sum itself fits the signed range; the simulator uses it for
// sub-margin bit-width studies.
std::vector<double> dequantize_aggregate_centered(const GroupVector& q_sum,
                                                  const QParams& qp,
                                                  std::uint64_t total_weight);

// b + ceil(log2(n_clients)): the SecAgg bit-width at which N full-scale
// values sum without wraparound. Throws CapacityError above 32.
int min_safe_bitwidth(int bit_width, std::uint64_t n_clients);

// Downlink wire form: f64 scale, u32 zero-point, u8 bit-width (little
// endian).
constexpr std::size_t kQParamsWireBytes = 13;
std::array<std::uint8_t, kQParamsWireBytes> serialize_qparams(const QParams& qp);
QParams parse_qparams(std::span<const std::uint8_t> bytes);

}  // namespace sacomp
