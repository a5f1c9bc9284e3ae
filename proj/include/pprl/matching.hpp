#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pprl/attributes.hpp"
#include "pprl/bitvector.hpp"
#include "pprl/crypto.hpp"
#include "pprl/encoding.hpp"

namespace pprl {

enum class MatchLabel : std::uint8_t { NonMatch, Match };

/// Protocol layers: record-level encodings, keyed attribute-level encodings,
/// masked clerical review.
enum class Layer : std::uint8_t { R, A, C };

std::string_view layer_name(Layer l) noexcept;
std::optional<Layer> layer_from_name(std::string_view name) noexcept;
std::string_view label_name(MatchLabel g) noexcept;

/// Binary decision plus its probability in [0.5, 1].
struct Prediction {
  MatchLabel g = MatchLabel::NonMatch;
  double p = 0.5;

  bool is_match() const noexcept { return g == MatchLabel::Match; }
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

using AttrSims = PerAttr<std::optional<double>>;

struct CandidatePair {
  PairId pair_id = 0;
  std::uint32_t idx_a = 0;  // index into source A's encoded records
  std::uint32_t idx_b = 0;
  std::optional<double> record_sim;
  std::optional<AttrSims> attr_sims;
  PerAttr<std::uint8_t> freq_features{};
  Prediction prediction;
  Layer label_layer = Layer::R;
  Bytes pair_key;
};

/// Cross-source pairs sharing at least one blocking digest, ordered by
/// (idx_a, idx_b); pair ids are the positions in that order.
std::vector<CandidatePair> block_candidates(std::span<const EncodedRecord> enc_a,
                                            std::span<const EncodedRecord> enc_b);

/// 2|a AND b| / (|a| + |b|); 0 when both are empty. Throws on length mismatch.
double dice(const BitVector& a, const BitVector& b);

class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills attr_sims and freq_features from both owners' keyed encodings.
/// Throws ComparisonError if the encodings belong to another pair.
void compare_layer_a(CandidatePair& pair, const KeyedAttributeEncoding& enc_a,
                     const KeyedAttributeEncoding& enc_b);

inline constexpr PerAttr<double> kBaselineWeights{12.04, 15.15, 5.12, 6.58, 8.23, 10.95, 6.63};

/// Weighted mean over present similarities; absent attributes drop out of both
/// sums. Throws std::invalid_argument if nothing is present.
double baseline_weighted_mean(const AttrSims& sims,
                              const PerAttr<double>& weights = kBaselineWeights);

}  // namespace pprl
