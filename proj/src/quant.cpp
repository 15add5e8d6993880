#include "sacomp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sacomp/errors.hpp"

namespace sacomp {

namespace {

double level_count(int bit_width) {
  return static_cast<double>((1ull << bit_width) - 1ull);
}

}  // namespace

QParams calibrate_minmax(std::span<const double> tensor, int bit_width,
                         QScheme scheme) {
  group_mask(bit_width);  // validates the range
  if (tensor.empty()) {
    throw CalibrationError("cannot calibrate qparams on an empty tensor");
  }
  const auto [mn_it, mx_it] = std::minmax_element(tensor.begin(), tensor.end());
  const double mn = *mn_it;
  const double mx = *mx_it;

  QParams qp;
  qp.bit_width = bit_width;
  if (scheme == QScheme::Affine) {
    qp.scale = std::max((mx - mn) / level_count(bit_width), kMinScale);
    const double z = std::round(-mn / qp.scale);
    qp.zero_point = static_cast<std::uint32_t>(
        std::clamp(z, 0.0, level_count(bit_width)));
  } else {
    const double amax = std::max(std::fabs(mn), std::fabs(mx));
    const double denom = std::max(1.0, std::exp2(bit_width - 1) - 1.0);
    qp.scale = std::max(amax / denom, kMinScale);
    qp.zero_point = 1u << (bit_width - 1);
  }
  return qp;
}

GroupVector quantize(std::span<const double> tensor, const QParams& qp) {
  const std::uint32_t m = group_mask(qp.bit_width);
  const double lo = 0.0;
  const double hi = level_count(qp.bit_width);
  std::vector<std::uint32_t> out(tensor.size());
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    // round() is half-away-from-zero, applied before the zero-point shift.
    const double q = std::round(tensor[i] / qp.scale) +
                     static_cast<double>(qp.zero_point);
    out[i] = static_cast<std::uint32_t>(std::clamp(q, lo, hi)) & m;
  }
  return GroupVector(std::move(out), qp.bit_width);
}

std::vector<double> dequantize(const GroupVector& q, const QParams& qp) {
  std::vector<double> out(q.size());
  const double z = static_cast<double>(qp.zero_point);
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = qp.scale * (static_cast<double>(q[i]) - z);
  }
  return out;
}

std::vector<double> dequantize_aggregate(const GroupVector& q_sum,
                                         const QParams& qp,
                                         std::uint64_t total_weight) {
  if (q_sum.bit_width() < qp.bit_width) {
    throw DimensionError("aggregate bit-width below quantization bit-width");
  }
  std::vector<double> out(q_sum.size());
  const double offset = static_cast<double>(total_weight) *
                        static_cast<double>(qp.zero_point);
  for (std::size_t i = 0; i < q_sum.size(); ++i) {
    out[i] = qp.scale * (static_cast<double>(q_sum[i]) - offset);
  }
  return out;
}

std::vector<double> dequantize_aggregate_centered(const GroupVector& q_sum,
                                                  const QParams& qp,
                                                  std::uint64_t total_weight) {
  if (q_sum.bit_width() < qp.bit_width) {
    throw DimensionError("aggregate bit-width below quantization bit-width");
  }
  const int p = q_sum.bit_width();
  const std::uint64_t modulus = 1ull << p;
  const std::uint64_t half = modulus >> 1;
  const std::uint64_t offset =
      (total_weight * static_cast<std::uint64_t>(qp.zero_point)) & (modulus - 1);
  std::vector<double> out(q_sum.size());
  for (std::size_t i = 0; i < q_sum.size(); ++i) {
    const std::uint64_t r = (q_sum[i] + modulus - offset) & (modulus - 1);
    const std::int64_t lifted =
        r >= half ? static_cast<std::int64_t>(r) - static_cast<std::int64_t>(modulus)
                  : static_cast<std::int64_t>(r);
    out[i] = qp.scale * static_cast<double>(lifted);
  }
  return out;
}

int min_safe_bitwidth(int bit_width, std::uint64_t n_clients) {
  group_mask(bit_width);
  if (n_clients < 1) {
    throw DimensionError("n_clients must be >= 1");
  }
  const int p = bit_width + ceil_log2(n_clients);
  if (p > kMaxBitWidth) {
    throw CapacityError("required bit-width " + std::to_string(p) +
                        " exceeds the 32-bit group");
  }
  return p;
}

std::array<std::uint8_t, kQParamsWireBytes> serialize_qparams(const QParams& qp) {
  std::array<std::uint8_t, kQParamsWireBytes> out{};
  std::uint64_t s_bits;
  static_assert(sizeof(double) == 8);
  std::memcpy(&s_bits, &qp.scale, 8);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(s_bits >> (8 * i));
  for (int i = 0; i < 4; ++i) out[8 + i] = static_cast<std::uint8_t>(qp.zero_point >> (8 * i));
  out[12] = static_cast<std::uint8_t>(qp.bit_width);
  return out;
}

QParams parse_qparams(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kQParamsWireBytes) {
    throw FramingError("qparams record must be 13 bytes");
  }
  std::uint64_t s_bits = 0;
  for (int i = 0; i < 8; ++i) s_bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  QParams qp;
  std::memcpy(&qp.scale, &s_bits, 8);
  qp.zero_point = 0;
  for (int i = 0; i < 4; ++i) qp.zero_point |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  qp.bit_width = bytes[12];
  group_mask(qp.bit_width);
  return qp;
}

}  // namespace sacomp
