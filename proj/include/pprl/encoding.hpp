#pragma once

// Data-owner side transformations: q-grams, keyed random hashing, record-level
// CLK, XOR folding, pair-keyed attribute-level Bloom filters (KABF), frequency
// labels and hashed blocking keys.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pprl/attributes.hpp"
#include "pprl/bitvector.hpp"
#include "pprl/crypto.hpp"

namespace pprl {

using PairId = std::uint64_t;

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlainRecord {
  std::string id;
  Source source = Source::A;
  PerAttr<std::optional<std::string>> values;

  const std::optional<std::string>& operator[](Attr a) const { return values[idx(a)]; }
  std::optional<std::string>& operator[](Attr a) { return values[idx(a)]; }
  bool has(Attr a) const { return values[idx(a)].has_value(); }
};

struct EncodingParams {
  std::size_t record_bits = 1024;
  std::size_t record_hashes = 12;
  std::size_t attr_bits = 256;
  PerAttr<std::size_t> attr_hashes{18, 21, 17, 26, 13, 21, 43};
  std::size_t q = 2;
  Bytes owner_key;
  bool xor_fold = false;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct EncodedRecord {
  std::string record_id;
  BitVector record_level;
  std::vector<Digest> blocking_keys;  // sorted, unique
};

/// Frequency label values: 0 = absent, 1 = top 1% mass, 2 = top 5%, 3 = rarer.
using FreqLabel = std::uint8_t;

struct KeyedAttributeEncoding {
  std::string record_id;
  PairId pair_id = 0;
  PerAttr<std::optional<BitVector>> vectors;
  PerAttr<FreqLabel> freq_labels{};
};

/// Overlapping q-grams of the normalized value. Values shorter than q yield the
/// whole value as a single feature; empty values yield nothing.
std::vector<std::string> extract_qgrams(std::string_view value, std::size_t q);

/// h positions in [0, m) drawn from a PRNG seeded with HMAC-SHA256(feature, key).
std::vector<std::uint32_t> hash_positions(std::string_view feature,
                                          std::span<const std::uint8_t> key,
                                          std::size_t h, std::size_t m);

/// Record-level Cryptographic Longterm Key with attribute salting.
/// Throws EncodingError if no attribute is present.
BitVector encode_clk(const PlainRecord& record, const EncodingParams& params);

/// Bit i of the result = v[i] XOR v[i + n/2]. Throws on odd length.
BitVector xor_fold(const BitVector& v);

/// Per-owner value-frequency table used to assign frequency labels.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::span<const PlainRecord> records);

  /// 1 if the value lies in the smallest frequency-sorted prefix of distinct
  /// values holding >= 1% of the attribute's records, 2 for 5%, else 3.
  /// Returns 0 for missing values. Unknown values are rare (3).
  FreqLabel label(Attr attr, const std::optional<std::string>& value) const;

 private:
  PerAttr<std::unordered_map<std::string, FreqLabel>> labels_;
};

/// Pair-keyed attribute-level Bloom filters: per attribute key
/// owner_key || pair_key || attribute name.
KeyedAttributeEncoding encode_kabf(const PlainRecord& record,
                                   std::span<const std::uint8_t> pair_key, PairId pair_id,
                                   const EncodingParams& params,
                                   const FrequencyTable* freq = nullptr);

/// Conventional attribute-level Bloom filter keyed by owner_key || attribute name
/// only (shared by every record). Used by the weighted-mean baseline.
std::optional<BitVector> encode_abf(const PlainRecord& record, Attr attr,
                                    const EncodingParams& params);

/// Classic American Soundex. Non-letters are dropped; throws if no letter remains.
std::string soundex(std::string_view name);

/// Keyed digests of FN+YOB, LN+YOB and Soundex(FN)+Soundex(LN); recipes with a
/// missing input are skipped.
std::vector<Digest> blocking_keys(const PlainRecord& record, std::span<const std::uint8_t> key);

/// CLK (optionally XOR-folded) plus blocking keys.
EncodedRecord encode_record(const PlainRecord& record, const EncodingParams& params);

}  // namespace pprl
