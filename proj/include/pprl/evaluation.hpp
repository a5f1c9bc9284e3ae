#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "pprl/dataset.hpp"
#include "pprl/protocol.hpp"

namespace pprl {

struct Quality {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision is 0 when nothing is predicted; recall is 0 without true matches.
Quality quality_from_counts(const QualityCounts& c) noexcept;

/// Ground truth resolved against the record order of both sources.
class TruthIndex {
 public:
  TruthIndex() = default;
  TruthIndex(const std::set<TruthPair>& truth, std::span<const PlainRecord> a,
             std::span<const PlainRecord> b);

  bool is_match(std::uint32_t idx_a, std::uint32_t idx_b) const;
  /// All true matches, including those blocking never proposed.
  std::size_t total() const noexcept { return total_; }

 private:
  std::unordered_set<std::uint64_t> keys_;
  std::size_t total_ = 0;
};

/// Counts over the candidate-pair universe; true matches missed by blocking
/// count as false negatives.
QualityCounts count_quality(std::span<const CandidatePair> pairs, const TruthIndex& truth);

/// Same, with predictions given as a flag per pair.
QualityCounts count_quality(std::span<const CandidatePair> pairs,
                            std::span<const bool> predicted_match, const TruthIndex& truth);

struct ThresholdScore {
  double threshold = 0.0;
  Quality quality;
};

/// F1 of thresholding `scores` (sim >= t is a match) at each t in
/// [lo, hi] with the given step.
std::vector<ThresholdScore> threshold_sweep(std::span<const CandidatePair> pairs,
                                            std::span<const double> scores,
                                            const TruthIndex& truth, double lo = 0.5,
                                            double hi = 1.0, double step = 0.005);

/// Smallest threshold with the best F1 on layer-R similarities.
ThresholdScore find_topt(std::span<const CandidatePair> pairs, const TruthIndex& truth);

Evaluator make_evaluator(const TruthIndex& truth);

}  // namespace pprl
