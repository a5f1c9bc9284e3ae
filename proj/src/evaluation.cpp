#include "pprl/evaluation.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace pprl {

namespace {

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

Quality quality_from_counts(const QualityCounts& c) noexcept {
  Quality q;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) q.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) q.recall = tp / static_cast<double>(c.tp + c.fn);
  if (q.precision + q.recall > 0.0) q.f1 = 2.0 * q.precision * q.recall / (q.precision + q.recall);
  return q;
}

TruthIndex::TruthIndex(const std::set<TruthPair>& truth, std::span<const PlainRecord> a,
                       std::span<const PlainRecord> b) {
  std::unordered_map<std::string, std::uint32_t> ia, ib;
  for (std::size_t i = 0; i < a.size(); ++i) ia.emplace(a[i].id, static_cast<std::uint32_t>(i));
  for (std::size_t i = 0; i < b.size(); ++i) ib.emplace(b[i].id, static_cast<std::uint32_t>(i));
  for (const auto& [id_a, id_b] : truth) {
    auto x = ia.find(id_a);
    auto y = ib.find(id_b);
    if (x == ia.end() || y == ib.end()) {
      throw std::invalid_argument("truth pair (" + id_a + ", " + id_b + ") names an unknown record");
    }
    keys_.insert(pair_key(x->second, y->second));
  }
  total_ = keys_.size();
}

bool TruthIndex::is_match(std::uint32_t idx_a, std::uint32_t idx_b) const {
  return keys_.contains(pair_key(idx_a, idx_b));
}

QualityCounts count_quality(std::span<const CandidatePair> pairs, const TruthIndex& truth) {
  QualityCounts c;
  for (const auto& p : pairs) {
    if (!p.prediction.is_match()) continue;
    if (truth.is_match(p.idx_a, p.idx_b)) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = truth.total() - c.tp;
  return c;
}

QualityCounts count_quality(std::span<const CandidatePair> pairs,
                            std::span<const bool> predicted_match, const TruthIndex& truth) {
  if (pairs.size() != predicted_match.size()) throw std::invalid_argument("prediction count mismatch");
  QualityCounts c;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!predicted_match[i]) continue;
    if (truth.is_match(pairs[i].idx_a, pairs[i].idx_b)) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = truth.total() - c.tp;
  return c;
}

std::vector<ThresholdScore> threshold_sweep(std::span<const CandidatePair> pairs,
                                            std::span<const double> scores,
                                            const TruthIndex& truth, double lo, double hi,
                                            double step) {
  if (pairs.size() != scores.size()) throw std::invalid_argument("score count mismatch");
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("bad sweep range");
  std::vector<bool> is_true(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) is_true[i] = truth.is_match(pairs[i].idx_a, pairs[i].idx_b);
  const auto steps = static_cast<std::size_t>(std::llround((hi - lo) / step));
  std::vector<ThresholdScore> out;
  out.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = lo + static_cast<double>(k) * step;
    QualityCounts c;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (scores[i] < t) continue;
      if (is_true[i]) {
        ++c.tp;
      } else {
        ++c.fp;
      }
    }
    c.fn = truth.total() - c.tp;
    out.push_back({t, quality_from_counts(c)});
  }
  return out;
}

ThresholdScore find_topt(std::span<const CandidatePair> pairs, const TruthIndex& truth) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) scores.push_back(p.record_sim.value_or(0.0));
  const auto sweep = threshold_sweep(pairs, scores, truth);
  ThresholdScore best = sweep.front();
  for (const auto& s : sweep) {
    if (s.quality.f1 > best.quality.f1) best = s;
  }
  return best;
}

Evaluator make_evaluator(const TruthIndex& truth) {
  return [truth](std::span<const CandidatePair> pairs, std::span<const EncodedRecord>,
                 std::span<const EncodedRecord>) { return count_quality(pairs, truth); };
}

}  // namespace pprl
