#pragma once

#include <array>
#include <cstdint>

namespace sacomp::chacha {

// ChaCha20 block function with the RFC 7539 state layout: 32-byte key,
// 32-bit block counter, 12-byte nonce, 20 rounds. One call yields a
// 64-byte keystream block, returned as 16 words already in host order
// (serializing each word little-endian reproduces the RFC byte stream).
using Key = std::array<std::uint8_t, 32>;
using Nonce = std::array<std::uint8_t, 12>;
using Block = std::array<std::uint32_t, 16>;

Block block(const Key& key, std::uint32_t counter, const Nonce& nonce);

}  // namespace sacomp::chacha
