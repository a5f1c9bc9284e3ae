#include "pprl/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "pprl/kernels.hpp"

namespace pprl {

BitFrequencyDistribution bit_frequencies(std::span<const BitVector> vectors) {
  return kernels::bit_frequencies(vectors);
}

double gini(std::span<const double> values) {
  const std::size_t m = values.size();
  if (m == 0) return 0.0;
  std::vector<double> f(values.begin(), values.end());
  std::sort(f.begin(), f.end());
  const double sum = std::accumulate(f.begin(), f.end(), 0.0);
  if (sum <= 0.0) return 0.0;
  // sum_i sum_j |f_i - f_j| = 2 sum_i (2i - m + 1) f_(i) over ascending order
  double weighted = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    weighted += (2.0 * static_cast<double>(i) - static_cast<double>(m) + 1.0) * f[i];
  }
  return std::max(0.0, weighted / (static_cast<double>(m) * sum));
}

double gini(const BitFrequencyDistribution& dist) {
  if (dist.n_vectors == 0) return 0.0;
  std::vector<double> f(dist.counts.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<double>(dist.counts[i]) / static_cast<double>(dist.n_vectors);
  }
  return gini(f);
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions differ in support size");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, js / std::log(2.0));
}

double jsd(const BitFrequencyDistribution& dist) {
  const std::size_t m = dist.counts.size();
  const double total = std::accumulate(dist.counts.begin(), dist.counts.end(), 0.0,
                                       [](double acc, std::uint64_t c) { return acc + static_cast<double>(c); });
  if (m == 0 || total <= 0.0) return 0.0;
  std::vector<double> p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = static_cast<double>(dist.counts[i]) / total;
  const std::vector<double> u(m, 1.0 / static_cast<double>(m));
  return jensen_shannon(p, u);
}

double kapr(const KaprInput& input) {
  const std::size_t n = input.disclosed.size();
  if (n == 0) return 0.0;
  if (input.equivalence_class.size() != n) {
    throw std::invalid_argument("one equivalence class size per record required");
  }
  if (input.attribute_count == 0) throw std::invalid_argument("attribute count must be > 0");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (input.equivalence_class[i] == 0) throw std::invalid_argument("k_i must be >= 1");
    if (input.disclosed[i] > input.attribute_count) throw std::invalid_argument("d_i > D");
    sum += static_cast<double>(input.disclosed[i]) / static_cast<double>(input.equivalence_class[i]);
  }
  return sum / (static_cast<double>(n) * static_cast<double>(input.attribute_count));
}

KaprInput kapr_input(std::span<const DisclosedRecord> pool) {
  using Key = std::vector<std::pair<std::size_t, std::string>>;
  std::vector<Key> keys;
  keys.reserve(pool.size());
  std::map<Key, std::size_t> classes;
  KaprInput in;
  for (const auto& rec : pool) {
    Key key;
    for (Attr a : kAllAttrs) {
      if (rec.values[idx(a)]) key.emplace_back(idx(a), *rec.values[idx(a)]);
    }
    in.disclosed.push_back(key.size());
    ++classes[key];
    keys.push_back(std::move(key));
  }
  for (const auto& key : keys) in.equivalence_class.push_back(classes[key]);
  return in;
}

namespace {

nlohmann::json attr_list(const std::vector<Attr>& attrs) {
  auto j = nlohmann::json::array();
  for (Attr a : attrs) j.push_back(attr_name(a));
  return j;
}

std::vector<Attr> attr_list_from(const nlohmann::json& j) {
  std::vector<Attr> out;
  for (const auto& s : j) {
    auto a = attr_from_name(s.get<std::string>());
    if (!a) throw std::invalid_argument("unknown attribute in ledger: " + s.get<std::string>());
    out.push_back(*a);
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const DisclosureLedgerEntry& e) {
  return nlohmann::json{{"iteration", e.iteration},
                        {"layer", layer_name(e.layer)},
                        {"source", source_name(e.source)},
                        {"record_id", e.record_id},
                        {"pair_id", e.pair_id},
                        {"requested", attr_list(e.requested)},
                        {"disclosed", attr_list(e.disclosed)}};
}

DisclosureLedgerEntry ledger_entry_from_json(const nlohmann::json& j) {
  DisclosureLedgerEntry e;
  e.iteration = j.at("iteration").get<std::uint64_t>();
  auto layer = layer_from_name(j.at("layer").get<std::string>());
  if (!layer) throw std::invalid_argument("unknown layer in ledger entry");
  e.layer = *layer;
  e.source = j.at("source").get<std::string>() == "B" ? Source::B : Source::A;
  e.record_id = j.at("record_id").get<std::string>();
  e.pair_id = j.at("pair_id").get<PairId>();
  e.requested = attr_list_from(j.at("requested"));
  e.disclosed = attr_list_from(j.at("disclosed"));
  return e;
}

PerAttr<std::optional<double>> availability_stats(std::span<const DisclosureLedgerEntry> ledger,
                                                  std::size_t clerical_record_count) {
  PerAttr<std::optional<double>> shares;
  if (clerical_record_count == 0) return shares;
  PerAttr<std::set<std::pair<Source, std::string>>> seen;
  for (const auto& e : ledger) {
    if (e.layer != Layer::C) continue;
    for (Attr a : e.disclosed) seen[idx(a)].emplace(e.source, e.record_id);
  }
  for (Attr a : kAllAttrs) {
    shares[idx(a)] = static_cast<double>(seen[idx(a)].size()) /
                     static_cast<double>(clerical_record_count);
  }
  return shares;
}

EncodingPrivacy encoding_privacy(std::span<const BitVector> vectors) {
  EncodingPrivacy out;
  out.n_encodings = vectors.size();
  if (vectors.empty()) return out;
  const auto dist = bit_frequencies(vectors);
  out.gini = gini(dist);
  out.jsd = jsd(dist);
  return out;
}

}  // namespace pprl
