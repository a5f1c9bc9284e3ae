#include "pprl/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <exception>
#include <optional>
#include <stdexcept>

namespace pprl::kernels {

namespace {

// Rethrows the first exception raised inside a parallel region.
class ErrorSlot {
 public:
  void capture() {
#pragma omp critical(pprl_kernel_error)
    if (!error_) error_ = std::current_exception();
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

void check_lengths(std::span<const BitVector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("bit_frequencies needs at least one vector");
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw std::invalid_argument("bit_frequencies: mixed vector lengths");
    }
  }
}

}  // namespace

int max_threads() noexcept { return omp_get_max_threads(); }

std::vector<EncodedRecord> encode_records(std::span<const PlainRecord> records,
                                          const EncodingParams& params) {
  params.validate();
  std::vector<EncodedRecord> out(records.size());
  ErrorSlot err;
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = encode_record(records[static_cast<std::size_t>(i)], params);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return out;
}

void score_pairs(std::span<CandidatePair> pairs, std::span<const EncodedRecord> enc_a,
                 std::span<const EncodedRecord> enc_b) {
  ErrorSlot err;
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& p = pairs[static_cast<std::size_t>(i)];
    try {
      p.record_sim = dice(enc_a[p.idx_a].record_level, enc_b[p.idx_b].record_level);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
}

BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors) {
  check_lengths(vectors);
  const std::size_t m = vectors.front().size();
  const std::size_t words = (m + 63) / 64;
  BitFrequencyDistribution dist;
  dist.n_vectors = vectors.size();
  dist.counts.assign(m, 0);
  const auto w_count = static_cast<std::ptrdiff_t>(words);
  // Each thread owns a disjoint range of 64-bit word columns.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < w_count; ++w) {
    const std::size_t base = static_cast<std::size_t>(w) * 64;
    const std::size_t width = std::min<std::size_t>(64, m - base);
    for (const auto& v : vectors) {
      std::uint64_t bits = v.words()[static_cast<std::size_t>(w)];
      while (bits != 0) {
        const auto b = static_cast<std::size_t>(std::countr_zero(bits));
        if (b < width) ++dist.counts[base + b];
        bits &= bits - 1;
      }
    }
  }
  return dist;
}

std::vector<Prediction> classify_batch(const EvolvingForest& forest,
                                       std::span<const std::vector<double>> features) {
  std::vector<Prediction> out(features.size());
  const auto n = static_cast<std::ptrdiff_t>(features.size());
  ErrorSlot err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = forest.classify(features[static_cast<std::size_t>(i)]);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return out;
}

std::vector<BitVector> encode_abf_column(std::span<const PlainRecord> records, Attr attr,
                                         const EncodingParams& params) {
  std::vector<std::optional<BitVector>> slots(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  ErrorSlot err;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      slots[static_cast<std::size_t>(i)] = encode_abf(records[static_cast<std::size_t>(i)], attr, params);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  std::vector<BitVector> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

namespace serial {

std::vector<EncodedRecord> encode_records(std::span<const PlainRecord> records,
                                          const EncodingParams& params) {
  params.validate();
  std::vector<EncodedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_record(r, params));
  return out;
}

void score_pairs(std::span<CandidatePair> pairs, std::span<const EncodedRecord> enc_a,
                 std::span<const EncodedRecord> enc_b) {
  for (auto& p : pairs) p.record_sim = dice(enc_a[p.idx_a].record_level, enc_b[p.idx_b].record_level);
}

BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors) {
  check_lengths(vectors);
  BitFrequencyDistribution dist;
  dist.n_vectors = vectors.size();
  dist.counts.assign(vectors.front().size(), 0);
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v.test(i)) ++dist.counts[i];
    }
  }
  return dist;
}

std::vector<Prediction> classify_batch(const EvolvingForest& forest,
                                       std::span<const std::vector<double>> features) {
  std::vector<Prediction> out;
  out.reserve(features.size());
  for (const auto& x : features) out.push_back(forest.classify(x));
  return out;
}

std::vector<BitVector> encode_abf_column(std::span<const PlainRecord> records, Attr attr,
                                         const EncodingParams& params) {
  std::vector<BitVector> out;
  for (const auto& r : records) {
    if (auto bf = encode_abf(r, attr, params)) out.push_back(std::move(*bf));
  }
  return out;
}

}  // namespace serial

}  // namespace pprl::kernels
