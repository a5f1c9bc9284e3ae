#pragma once

// Privacy-risk measures: bit-frequency inequality (Gini, Jensen-Shannon
// divergence against uniform), KAPR for the clerical layer and per-attribute
// availability, plus the need-to-know audit over the disclosure ledger.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pprl/attributes.hpp"
#include "pprl/bitvector.hpp"
#include "pprl/matching.hpp"

namespace pprl {

struct BitFrequencyDistribution {
  std::vector<std::uint64_t> counts;
  std::uint64_t n_vectors = 0;
};

/// Exact per-position set-bit counts. Throws on empty input or mixed lengths.
BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors);

/// Gini coefficient of the per-position frequencies,
/// sum_i sum_j |f_i - f_j| / (2 m^2 mean(f)). 0 for uniform or all-zero input.
double gini(const BitFrequencyDistribution& dist);
double gini(std::span<const double> values);

/// Jensen-Shannon divergence (base 2) between the normalized frequencies and
/// the uniform distribution over positions. 0 for all-zero input.
double jsd(const BitFrequencyDistribution& dist);
double jensen_shannon(std::span<const double> p, std::span<const double> q);

struct KaprInput {
  std::size_t attribute_count = kAttrCount;
  std::vector<std::size_t> disclosed;          // d_i
  std::vector<std::size_t> equivalence_class;  // k_i
};

/// (1 / (N D)) sum_i d_i / k_i; 0 when N = 0.
double kapr(const KaprInput& input);

/// A record in the clerical pool together with the plaintext disclosed for it.
struct DisclosedRecord {
  Source source = Source::A;
  std::string record_id;
  PerAttr<std::optional<std::string>> values;
};

/// Builds d_i and k_i with k_i = number of pool records whose disclosed
/// (attribute, value) set equals record i's.
KaprInput kapr_input(std::span<const DisclosedRecord> pool);

struct DisclosureLedgerEntry {
  std::uint64_t iteration = 0;
  Layer layer = Layer::A;
  Source source = Source::A;
  std::string record_id;
  PairId pair_id = 0;
  std::vector<Attr> requested;
  std::vector<Attr> disclosed;
};

nlohmann::json to_json(const DisclosureLedgerEntry& e);
DisclosureLedgerEntry ledger_entry_from_json(const nlohmann::json& j);

/// Share of layer-C records with each attribute disclosed; absent for an empty pool.
PerAttr<std::optional<double>> availability_stats(std::span<const DisclosureLedgerEntry> ledger,
                                                  std::size_t clerical_record_count);

/// Per-attribute privacy summary of a collection of Bloom filters.
struct EncodingPrivacy {
  std::size_t n_encodings = 0;
  double gini = 0.0;
  double jsd = 0.0;
};

EncodingPrivacy encoding_privacy(std::span<const BitVector> vectors);

}  // namespace pprl
