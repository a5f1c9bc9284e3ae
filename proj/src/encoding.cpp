#include "pprl/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <stdexcept>

namespace pprl {

void EncodingParams::validate() const {
  if (record_bits < 2 || record_bits % 2 != 0) {
    throw std::invalid_argument("record_bits must be even and >= 2");
  }
  if (attr_bits < 2 || attr_bits % 2 != 0) {
    throw std::invalid_argument("attr_bits must be even and >= 2");
  }
  if (record_hashes == 0) throw std::invalid_argument("record_hashes must be >= 1");
  for (auto h : attr_hashes) {
    if (h == 0) throw std::invalid_argument("attribute hash counts must be >= 1");
  }
  if (q == 0) throw std::invalid_argument("q must be >= 1");
  if (owner_key.empty()) throw std::invalid_argument("owner key must not be empty");
}

std::vector<std::string> extract_qgrams(std::string_view value, std::size_t q) {
  const std::string v = normalize(value);
  std::vector<std::string> grams;
  if (v.empty()) return grams;
  if (q == 0 || v.size() <= q) {
    grams.push_back(v);
    return grams;
  }
  grams.reserve(v.size() - q + 1);
  for (std::size_t i = 0; i + q <= v.size(); ++i) grams.push_back(v.substr(i, q));
  return grams;
}

std::vector<std::uint32_t> hash_positions(std::string_view feature,
                                          std::span<const std::uint8_t> key, std::size_t h,
                                          std::size_t m) {
  if (h == 0 || m < 2 || key.empty()) {
    throw std::invalid_argument("hash_positions requires h >= 1, m >= 2 and a key");
  }
  const Digest digest = hmac_sha256(key, feature);
  std::array<std::uint32_t, 8> seed_words{};
  for (std::size_t i = 0; i < seed_words.size(); ++i) {
    seed_words[i] = static_cast<std::uint32_t>(digest[4 * i]) |
                    static_cast<std::uint32_t>(digest[4 * i + 1]) << 8 |
                    static_cast<std::uint32_t>(digest[4 * i + 2]) << 16 |
                    static_cast<std::uint32_t>(digest[4 * i + 3]) << 24;
  }
  std::seed_seq seq(seed_words.begin(), seed_words.end());
  std::mt19937_64 prng(seq);
  std::vector<std::uint32_t> positions(h);
  for (auto& p : positions) p = static_cast<std::uint32_t>(prng() % m);
  return positions;
}

namespace {

// Hashes every q-gram of `value` into `bf`. Returns false if nothing was hashed.
bool add_value(BitVector& bf, std::string_view value, std::span<const std::uint8_t> key,
               std::size_t h, std::size_t q) {
  const auto grams = extract_qgrams(value, q);
  for (const auto& g : grams) {
    for (auto pos : hash_positions(g, key, h, bf.size())) bf.set(pos);
  }
  return !grams.empty();
}

}  // namespace

BitVector encode_clk(const PlainRecord& record, const EncodingParams& params) {
  BitVector bf(params.record_bits);
  bool any = false;
  for (Attr a : kAllAttrs) {
    const auto& value = record[a];
    if (!value) continue;
    const Bytes key = concat_key(params.owner_key, attr_name(a));
    any = add_value(bf, *value, key, params.record_hashes, params.q) || any;
  }
  if (!any) throw EncodingError("record '" + record.id + "' has no attribute to encode");
  return bf;
}

BitVector xor_fold(const BitVector& v) {
  if (v.size() % 2 != 0) throw std::invalid_argument("xor_fold needs an even length");
  const std::size_t half = v.size() / 2;
  BitVector out(half);
  for (std::size_t i = 0; i < half; ++i) {
    if (v.test(i) != v.test(i + half)) out.set(i);
  }
  return out;
}

FrequencyTable::FrequencyTable(std::span<const PlainRecord> records) {
  for (Attr a : kAllAttrs) {
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& r : records) {
      if (!r.has(a)) continue;
      std::string v = normalize(*r[a]);
      if (v.empty()) continue;
      ++counts[v];
      ++total;
    }
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    const double top1 = 0.01 * static_cast<double>(total);
    const double top5 = 0.05 * static_cast<double>(total);
    std::size_t cum = 0;
    auto& labels = labels_[idx(a)];
    for (const auto& [value, count] : sorted) {
      const auto before = static_cast<double>(cum);
      labels[value] = before < top1 ? 1 : before < top5 ? 2 : 3;
      cum += count;
    }
  }
}

FreqLabel FrequencyTable::label(Attr attr, const std::optional<std::string>& value) const {
  if (!value) return 0;
  const std::string v = normalize(*value);
  if (v.empty()) return 0;
  const auto& labels = labels_[idx(attr)];
  auto it = labels.find(v);
  return it == labels.end() ? 3 : it->second;
}

KeyedAttributeEncoding encode_kabf(const PlainRecord& record,
                                   std::span<const std::uint8_t> pair_key, PairId pair_id,
                                   const EncodingParams& params, const FrequencyTable* freq) {
  KeyedAttributeEncoding enc;
  enc.record_id = record.id;
  enc.pair_id = pair_id;
  const Bytes base = concat_key(params.owner_key, pair_key);
  for (Attr a : kAllAttrs) {
    const auto& value = record[a];
    if (!value) continue;
    BitVector bf(params.attr_bits);
    const Bytes key = concat_key(base, attr_name(a));
    if (!add_value(bf, *value, key, params.attr_hashes[idx(a)], params.q)) continue;
    enc.vectors[idx(a)] = std::move(bf);
    enc.freq_labels[idx(a)] = freq ? freq->label(a, value) : 0;
  }
  return enc;
}

std::optional<BitVector> encode_abf(const PlainRecord& record, Attr attr,
                                    const EncodingParams& params) {
  const auto& value = record[attr];
  if (!value) return std::nullopt;
  BitVector bf(params.attr_bits);
  const Bytes key = concat_key(params.owner_key, attr_name(attr));
  if (!add_value(bf, *value, key, params.attr_hashes[idx(attr)], params.q)) return std::nullopt;
  return bf;
}

std::string soundex(std::string_view name) {
  // 0 = vowel (separates equal codes), '-' = H/W (transparent).
  static constexpr std::string_view kCodes = "01230120022455012623010202";
  std::string letters;
  for (char ch : name) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c) && c < 128) letters.push_back(static_cast<char>(std::toupper(c)));
  }
  if (letters.empty()) throw std::invalid_argument("soundex needs at least one letter");

  auto code = [](char c) -> char {
    if (c == 'H' || c == 'W') return '-';
    return kCodes[static_cast<std::size_t>(c - 'A')];
  };
  std::string out(1, letters[0]);
  char prev = code(letters[0]);
  if (prev == '-') prev = '0';
  for (std::size_t i = 1; i < letters.size() && out.size() < 4; ++i) {
    const char c = code(letters[i]);
    if (c == '-') continue;
    if (c != '0' && c != prev) out.push_back(c);
    prev = c;
  }
  out.resize(4, '0');
  return out;
}

std::vector<Digest> blocking_keys(const PlainRecord& record, std::span<const std::uint8_t> key) {
  const Bytes block_key = concat_key(key, std::string_view{"blocking"});
  auto value = [&](Attr a) -> std::optional<std::string> {
    if (!record.has(a)) return std::nullopt;
    std::string v = normalize(*record[a]);
    if (v.empty()) return std::nullopt;
    return v;
  };
  std::vector<Digest> keys;
  const auto fn = value(Attr::FN);
  const auto ln = value(Attr::LN);
  const auto yob = value(Attr::YOB);
  if (fn && yob) keys.push_back(hmac_sha256(block_key, "FN+YOB:" + *fn + "|" + *yob));
  if (ln && yob) keys.push_back(hmac_sha256(block_key, "LN+YOB:" + *ln + "|" + *yob));
  if (fn && ln) {
    try {
      keys.push_back(hmac_sha256(block_key, "SDX:" + soundex(*fn) + "|" + soundex(*ln)));
    } catch (const std::invalid_argument&) {
      // a name without letters has no phonetic code
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

EncodedRecord encode_record(const PlainRecord& record, const EncodingParams& params) {
  EncodedRecord enc;
  enc.record_id = record.id;
  enc.record_level = encode_clk(record, params);
  if (params.xor_fold) enc.record_level = xor_fold(enc.record_level);
  enc.blocking_keys = blocking_keys(record, params.owner_key);
  return enc;
}

}  // namespace pprl
