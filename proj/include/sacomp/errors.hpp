#pragma once

#include <stdexcept>

namespace sacomp {

// Error taxonomy shared by all modules.

// Mismatched vector lengths or group bit-widths.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed wire bytes: wrong byte count, nonzero padding, bad header.
struct FramingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A round-protocol contract was violated (heterogeneous payloads,
// missing clients, out-of-range decrypted values).
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A requested configuration cannot fit the 32-bit group.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Quantization parameters cannot be derived from the given tensor.
struct CalibrationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid simulator or CLI configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sacomp
