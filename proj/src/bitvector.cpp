#include "pprl/bitvector.hpp"

#include <stdexcept>

namespace pprl {

BitVector::BitVector(std::size_t length) : length_(length), words_((length + 63) / 64, 0) {}

BitVector BitVector::from_string(std::string_view bits) {
  BitVector v(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') {
      v.set(i);
    } else if (bits[i] != '0') {
      throw std::invalid_argument("bit string may only contain '0' and '1'");
    }
  }
  return v;
}

void BitVector::set(std::size_t pos) {
  if (pos >= length_) throw std::out_of_range("bit position out of range");
  words_[pos / 64] |= std::uint64_t{1} << (pos % 64);
}

bool BitVector::test(std::size_t pos) const {
  if (pos >= length_) throw std::out_of_range("bit position out of range");
  return (words_[pos / 64] >> (pos % 64)) & 1U;
}

std::size_t BitVector::popcount() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

double BitVector::fill_rate() const noexcept {
  return length_ == 0 ? 0.0 : static_cast<double>(popcount()) / static_cast<double>(length_);
}

std::string BitVector::to_string() const {
  std::string s(length_, '0');
  for (std::size_t i = 0; i < length_; ++i) {
    if (test(i)) s[i] = '1';
  }
  return s;
}

std::size_t and_count(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("bit vector length mismatch");
  auto wa = a.words();
  auto wb = b.words();
  std::size_t n = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    n += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  }
  return n;
}

}  // namespace pprl
