#include "pprl/matching.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "pprl/kernels.hpp"

namespace pprl {

std::string_view layer_name(Layer l) noexcept {
  switch (l) {
    case Layer::R: return "R";
    case Layer::A: return "A";
    case Layer::C: return "C";
  }
  return "?";
}

std::optional<Layer> layer_from_name(std::string_view name) noexcept {
  if (name == "R") return Layer::R;
  if (name == "A") return Layer::A;
  if (name == "C") return Layer::C;
  return std::nullopt;
}

std::string_view label_name(MatchLabel g) noexcept {
  return g == MatchLabel::Match ? "match" : "nonmatch";
}

std::vector<CandidatePair> block_candidates(std::span<const EncodedRecord> enc_a,
                                            std::span<const EncodedRecord> enc_b) {
  std::unordered_map<Digest, std::vector<std::uint32_t>, DigestHash> index;
  for (std::uint32_t j = 0; j < enc_b.size(); ++j) {
    for (const auto& key : enc_b[j].blocking_keys) index[key].push_back(j);
  }
  std::vector<CandidatePair> pairs;
  std::vector<std::uint32_t> partners;
  for (std::uint32_t i = 0; i < enc_a.size(); ++i) {
    partners.clear();
    for (const auto& key : enc_a[i].blocking_keys) {
      auto it = index.find(key);
      if (it != index.end()) partners.insert(partners.end(), it->second.begin(), it->second.end());
    }
    std::sort(partners.begin(), partners.end());
    partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
    for (auto j : partners) {
      CandidatePair p;
      p.pair_id = pairs.size();
      p.idx_a = i;
      p.idx_b = j;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

double dice(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dice: bit vector length mismatch");
  const std::size_t total = a.popcount() + b.popcount();
  if (total == 0) return 0.0;
  return 2.0 * static_cast<double>(and_count(a, b)) / static_cast<double>(total);
}

void compare_layer_a(CandidatePair& pair, const KeyedAttributeEncoding& enc_a,
                     const KeyedAttributeEncoding& enc_b) {
  if (enc_a.pair_id != pair.pair_id || enc_b.pair_id != pair.pair_id) {
    throw ComparisonError("keyed encodings belong to a different pair");
  }
  AttrSims sims;
  for (Attr a : kAllAttrs) {
    const auto& va = enc_a.vectors[idx(a)];
    const auto& vb = enc_b.vectors[idx(a)];
    pair.freq_features[idx(a)] = 0;
    if (!va || !vb) continue;
    const double s = dice(*va, *vb);
    sims[idx(a)] = s;
    if (s == 1.0) {
      const FreqLabel la = enc_a.freq_labels[idx(a)];
      const FreqLabel lb = enc_b.freq_labels[idx(a)];
      if (la != 0 && lb != 0) pair.freq_features[idx(a)] = std::max(la, lb);
    }
  }
  pair.attr_sims = sims;
}

double baseline_weighted_mean(const AttrSims& sims, const PerAttr<double>& weights) {
  double num = 0.0;
  double den = 0.0;
  for (Attr a : kAllAttrs) {
    const auto& s = sims[idx(a)];
    if (!s) continue;
    num += weights[idx(a)] * *s;
    den += weights[idx(a)];
  }
  if (den == 0.0) throw std::invalid_argument("no attribute similarity present");
  return num / den;
}

}  // namespace pprl
