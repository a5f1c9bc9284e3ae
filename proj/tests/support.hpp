#pragma once

#include <initializer_list>
#include <random>
#include <string>

#include "pprl/bitvector.hpp"
#include "pprl/encoding.hpp"

namespace pprl::test {

// Values in schema order FN, MN, LN, YOB, CITY, ZIP, POB; "" = missing.
inline PlainRecord make_record(std::string id, Source source,
                               std::initializer_list<const char*> values) {
  PlainRecord r;
  r.id = std::move(id);
  r.source = source;
  std::size_t i = 0;
  for (const char* v : values) {
    if (v && *v) r.values[i] = std::string(v);
    ++i;
  }
  return r;
}

inline EncodingParams test_params(std::string_view key = "unit-test-key") {
  EncodingParams p;
  p.owner_key.assign(key.begin(), key.end());
  return p;
}

inline BitVector random_bits(std::mt19937_64& rng, std::size_t m, double density) {
  std::bernoulli_distribution bit(density);
  BitVector v(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (bit(rng)) v.set(i);
  }
  return v;
}

inline Bytes key_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace pprl::test
