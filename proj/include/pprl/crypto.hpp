#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pprl {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Digest hmac_sha256(std::span<const std::uint8_t> key, std::string_view message);

Bytes concat_key(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
Bytes concat_key(std::span<const std::uint8_t> a, std::string_view b);

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

/// Draws `n` bytes from a seeded engine (reproducible runs).
Bytes random_bytes(std::mt19937_64& rng, std::size_t n);
/// Draws `n` bytes from the OpenSSL CSPRNG.
Bytes secure_random_bytes(std::size_t n);

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept {
    std::size_t h = 0;
    for (std::size_t i = 0; i < sizeof(std::size_t); ++i) h = (h << 8) | d[i];
    return h;
  }
};

}  // namespace pprl
