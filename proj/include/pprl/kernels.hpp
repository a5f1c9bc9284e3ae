#pragma once

// Data-parallel batch kernels. Each kernel has an OpenMP implementation in
// pprl::kernels and a plain serial reference in pprl::kernels::serial that the
// tests compare against. Results are independent of the thread count.

#include <span>
#include <vector>

#include "pprl/encoding.hpp"
#include "pprl/matching.hpp"
#include "pprl/models.hpp"
#include "pprl/privacy.hpp"

namespace pprl::kernels {

std::vector<EncodedRecord> encode_records(std::span<const PlainRecord> records,
                                          const EncodingParams& params);

/// Sets record_sim = dice(CLK_a, CLK_b) for every pair.
void score_pairs(std::span<CandidatePair> pairs, std::span<const EncodedRecord> enc_a,
                 std::span<const EncodedRecord> enc_b);

BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors);

std::vector<Prediction> classify_batch(const EvolvingForest& forest,
                                       std::span<const std::vector<double>> features);

/// Shared-key attribute-level Bloom filters of one attribute for every record
/// holding it.
std::vector<BitVector> encode_abf_column(std::span<const PlainRecord> records, Attr attr,
                                         const EncodingParams& params);

int max_threads() noexcept;

namespace serial {

std::vector<EncodedRecord> encode_records(std::span<const PlainRecord> records,
                                          const EncodingParams& params);
void score_pairs(std::span<CandidatePair> pairs, std::span<const EncodedRecord> enc_a,
                 std::span<const EncodedRecord> enc_b);
BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors);
std::vector<Prediction> classify_batch(const EvolvingForest& forest,
                                       std::span<const std::vector<double>> features);
std::vector<BitVector> encode_abf_column(std::span<const PlainRecord> records, Attr attr,
                                         const EncodingParams& params);

}  // namespace serial

}  // namespace pprl::kernels
