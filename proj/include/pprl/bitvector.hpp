#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pprl {

/// Fixed-length bit sequence backed by 64-bit words. Bits past `size()` in the
/// last word are always zero, so word-wise popcounts are exact.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t length);

  /// Parses a string of '0'/'1' characters, bit 0 first.
  static BitVector from_string(std::string_view bits);

  std::size_t size() const noexcept { return length_; }
  bool empty() const noexcept { return length_ == 0; }

  void set(std::size_t pos);
  bool test(std::size_t pos) const;
  std::size_t popcount() const noexcept;
  double fill_rate() const noexcept;

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }

  std::string to_string() const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::size_t length_ = 0;
  std::vector<std::uint64_t> words_;
};

/// |a AND b|. Lengths must match.
std::size_t and_count(const BitVector& a, const BitVector& b);

}  // namespace pprl
