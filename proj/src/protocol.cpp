#include "pprl/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pprl/kernels.hpp"

namespace pprl {

namespace {

constexpr std::size_t kPairKeyBytes = 16;

// Stream ids for the protocol's independent random streams.
enum class Stream : std::uint64_t { Select = 1, PairKey = 2, Forest = 3 };

std::mt19937_64 stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

std::uint64_t forest_seed(std::uint64_t seed) { return stream(seed, Stream::Forest)(); }

nlohmann::json attrs_to_json(std::span<const Attr> attrs) {
  nlohmann::json j = nlohmann::json::array();
  for (Attr a : attrs) j.push_back(attr_name(a));
  return j;
}

std::vector<Attr> attrs_from_json(const nlohmann::json& j) {
  std::vector<Attr> out;
  for (const auto& v : j) {
    auto a = attr_from_name(v.get<std::string>());
    if (!a) throw std::invalid_argument("unknown attribute: " + v.get<std::string>());
    out.push_back(*a);
  }
  return out;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ProtocolConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("protocol config: " + what); };
  if (!(p_threshold > 0.5 && p_threshold <= 1.0)) fail("p_threshold must lie in (0.5, 1]");
  if (buckets < 1) fail("buckets must be >= 1");
  if (warmup_batch_size < 1 || post_warmup_batch_size < 1) fail("batch sizes must be >= 1");
  if (clerical_budget < 1) fail("clerical_budget must be >= 1");
  if (!(oracle_err >= 0.0 && oracle_err <= 1.0)) fail("oracle_err must lie in [0, 1]");
  if (!(oversample_factor >= 1.0)) fail("oversample_factor must be >= 1");
  if (!(response_rate > 0.0 && response_rate <= 1.0)) fail("response_rate must lie in (0, 1]");
  if (!(initial_threshold > 0.0 && initial_threshold <= 1.0)) fail("initial_threshold must lie in (0, 1]");
  if (forest.init_trees < 1 || forest.max_trees < forest.init_trees) fail("forest tree counts");
  if (forest.max_depth < 1) fail("forest max_depth must be >= 1");
  if (!(forest.bag_fraction > 0.0 && forest.bag_fraction <= 1.0)) fail("forest bag_fraction");
}

nlohmann::json to_json(const ProtocolConfig& c) {
  return {
      {"p_threshold", c.p_threshold},
      {"buckets", c.buckets},
      {"warmup_batches", c.warmup_batches},
      {"warmup_batch_size", c.warmup_batch_size},
      {"clerical_batches_per_iteration", c.clerical_batches_per_iteration},
      {"clerical_budget", c.clerical_budget},
      {"post_warmup_batches", c.post_warmup_batches},
      {"post_warmup_batch_size", c.post_warmup_batch_size},
      {"oracle_err", c.oracle_err},
      {"oversample_factor", c.oversample_factor},
      {"response_rate", c.response_rate},
      {"initial_threshold", c.initial_threshold},
      {"selection", selection_mode_name(c.selection.mode)},
      {"dissimilar_bound", c.selection.dissimilar_bound},
      {"secure_pair_keys", c.secure_pair_keys},
      {"forest",
       {{"max_trees", c.forest.max_trees},
        {"init_trees", c.forest.init_trees},
        {"add_trees", c.forest.add_trees},
        {"max_depth", c.forest.max_depth},
        {"bag_fraction", c.forest.bag_fraction},
        {"min_leaf_weight", c.forest.min_leaf_weight},
        {"features_per_split", c.forest.features_per_split}}},
  };
}

ProtocolConfig protocol_config_from_json(const nlohmann::json& j) {
  ProtocolConfig c;
  read_opt(j, "p_threshold", c.p_threshold);
  read_opt(j, "buckets", c.buckets);
  read_opt(j, "warmup_batches", c.warmup_batches);
  read_opt(j, "warmup_batch_size", c.warmup_batch_size);
  read_opt(j, "clerical_batches_per_iteration", c.clerical_batches_per_iteration);
  read_opt(j, "clerical_budget", c.clerical_budget);
  read_opt(j, "post_warmup_batches", c.post_warmup_batches);
  read_opt(j, "post_warmup_batch_size", c.post_warmup_batch_size);
  read_opt(j, "oracle_err", c.oracle_err);
  read_opt(j, "oversample_factor", c.oversample_factor);
  read_opt(j, "response_rate", c.response_rate);
  read_opt(j, "initial_threshold", c.initial_threshold);
  read_opt(j, "secure_pair_keys", c.secure_pair_keys);
  read_opt(j, "dissimilar_bound", c.selection.dissimilar_bound);
  if (auto it = j.find("selection"); it != j.end()) {
    auto mode = selection_mode_from_name(it->get<std::string>());
    if (!mode) throw std::invalid_argument("unknown selection mode: " + it->get<std::string>());
    c.selection.mode = *mode;
  }
  if (auto it = j.find("forest"); it != j.end()) {
    read_opt(*it, "max_trees", c.forest.max_trees);
    read_opt(*it, "init_trees", c.forest.init_trees);
    read_opt(*it, "add_trees", c.forest.add_trees);
    read_opt(*it, "max_depth", c.forest.max_depth);
    read_opt(*it, "bag_fraction", c.forest.bag_fraction);
    read_opt(*it, "min_leaf_weight", c.forest.min_leaf_weight);
    read_opt(*it, "features_per_split", c.forest.features_per_split);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Policy

void DisclosurePolicy::set(const std::string& record_id, RecordPolicy policy) {
  records_[record_id] = std::move(policy);
}

const RecordPolicy& DisclosurePolicy::lookup(const std::string& record_id) const {
  static const RecordPolicy kDefault{};
  auto it = records_.find(record_id);
  return it == records_.end() ? kDefault : it->second;
}

bool DisclosurePolicy::permits(const std::string& record_id, Layer layer) const {
  return layer <= lookup(record_id).max_layer;
}

nlohmann::json DisclosurePolicy::to_json() const {
  // Sorted for stable output.
  std::map<std::string, const RecordPolicy*> sorted;
  for (const auto& [id, p] : records_) sorted.emplace(id, &p);
  nlohmann::json recs = nlohmann::json::object();
  for (const auto& [id, p] : sorted) {
    recs[id] = {{"max_layer", layer_name(p->max_layer)},
                {"deny_clerical", attrs_to_json(p->deny_clerical)}};
  }
  return {{"records", std::move(recs)}};
}

DisclosurePolicy DisclosurePolicy::from_json(const nlohmann::json& j) {
  DisclosurePolicy policy;
  const auto& recs = j.contains("records") ? j.at("records") : j;
  for (const auto& [id, v] : recs.items()) {
    RecordPolicy p;
    if (auto it = v.find("max_layer"); it != v.end()) {
      auto l = layer_from_name(it->get<std::string>());
      if (!l) throw std::invalid_argument("unknown layer in policy: " + it->get<std::string>());
      p.max_layer = *l;
    }
    if (auto it = v.find("deny_clerical"); it != v.end()) p.deny_clerical = attrs_from_json(*it);
    policy.set(id, std::move(p));
  }
  return policy;
}

// ---------------------------------------------------------------------------
// Owner

DataOwner::DataOwner(Source source, std::vector<PlainRecord> records, EncodingParams params,
                     DisclosurePolicy policy, double response_probability, std::uint64_t seed)
    : source_(source),
      records_(std::move(records)),
      params_(std::move(params)),
      policy_(std::move(policy)),
      freq_(records_),
      respond_(response_probability),
      rng_(seed) {
  params_.validate();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!by_id_.emplace(records_[i].id, i).second) {
      throw std::invalid_argument("duplicate record id: " + records_[i].id);
    }
  }
}

const PlainRecord& DataOwner::record(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("unknown record id: " + id);
  return records_[it->second];
}

std::vector<EncodedRecord> DataOwner::encode_all() const {
  return kernels::encode_records(records_, params_);
}

std::vector<OwnerResponse> DataOwner::respond(std::span<const WishlistRequest> requests) {
  std::vector<OwnerResponse> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    OwnerResponse r;
    r.pair_id = req.pair_id;
    r.record_id = req.record_id;
    const PlainRecord& rec = record(req.record_id);
    if (!policy_.permits(req.record_id, req.layer) || !respond_(rng_)) {
      r.refused = true;
      out.push_back(std::move(r));
      continue;
    }
    if (req.layer == Layer::A) {
      r.encoding = encode_kabf(rec, req.pair_key, req.pair_id, params_, &freq_);
    } else if (req.layer == Layer::C) {
      const auto& deny = policy_.lookup(req.record_id).deny_clerical;
      for (Attr a : req.attributes) {
        if (std::find(deny.begin(), deny.end(), a) != deny.end()) continue;
        if (!rec.has(a)) continue;
        r.plaintext[idx(a)] = rec[a];
        r.disclosed.push_back(a);
      }
    } else {
      r.refused = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query strategy

double bucket_width(double p_threshold, std::size_t buckets) noexcept {
  return (p_threshold - 0.5) / static_cast<double>(buckets);
}

std::size_t bucket_index(double p, double p_threshold, std::size_t buckets) noexcept {
  const double b = std::floor((p - 0.5) / bucket_width(p_threshold, buckets));
  if (!(b > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(b), buckets - 1);
}

std::vector<PairId> select_uncertain_batch(std::span<const PoolEntry> pool, double p_threshold,
                                           std::size_t buckets, std::size_t batch_size,
                                           std::mt19937_64& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::vector<PairId>> bins(buckets);
  for (const auto& e : pool) {
    if (e.p < p_threshold) bins[bucket_index(e.p, p_threshold, buckets)].push_back(e.pair_id);
  }
  std::vector<PairId> out;
  bool any = true;
  while (out.size() < batch_size && any) {
    any = false;
    for (auto& bin : bins) {
      if (bin.empty()) continue;
      any = true;
      std::uniform_int_distribution<std::size_t> pick(0, bin.size() - 1);
      const std::size_t k = pick(rng);
      out.push_back(bin[k]);
      bin[k] = bin.back();
      bin.pop_back();
      if (out.size() == batch_size) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer R

void RecordLayer::link(std::span<const EncodedRecord> enc_a, std::span<const EncodedRecord> enc_b) {
  pairs_ = block_candidates(enc_a, enc_b);
  kernels::score_pairs(pairs_, enc_a, enc_b);
  for (auto& p : pairs_) {
    p.prediction = mr_classify(*p.record_sim, model_);
    p.label_layer = Layer::R;
  }
  store_.clear();
  excluded_.clear();
}

const CandidatePair& RecordLayer::pair(PairId id) const {
  if (id >= pairs_.size()) throw ProtocolError("unknown pair id " + std::to_string(id));
  return pairs_[id];
}

std::vector<PairId> RecordLayer::select_batch(double p_threshold, std::size_t buckets,
                                              std::size_t n, std::mt19937_64& rng) const {
  std::vector<PoolEntry> pool;
  for (const auto& p : pairs_) {
    if (store_.contains(p.pair_id) || excluded_.contains(p.pair_id)) continue;
    pool.push_back({p.pair_id, p.prediction.p});
  }
  return select_uncertain_batch(pool, p_threshold, buckets, n, rng);
}

std::vector<PairId> RecordLayer::receive(std::span<const LabelReport> reports) {
  for (const auto& r : reports) {
    if (r.pair_id >= pairs_.size()) throw ProtocolError("report for unknown pair " + std::to_string(r.pair_id));
    auto& pair = pairs_[r.pair_id];
    LabeledInstance inst;
    inst.pair_id = r.pair_id;
    inst.features = {*pair.record_sim};
    inst.label = r.prediction.g;
    inst.weight = instance_weight(r.prediction.p, r.origin);
    inst.origin = r.origin;
    store_[r.pair_id] = std::move(inst);
    pair.prediction = r.prediction;
    pair.label_layer = r.origin == Origin::C ? Layer::C : Layer::A;
  }
  if (!reports.empty()) {
    const auto labels = labeled();
    model_ = mr_update(model_, labels);
  }
  return reclassify();
}

std::vector<PairId> RecordLayer::reclassify() {
  std::vector<PairId> changed;
  for (auto& p : pairs_) {
    if (store_.contains(p.pair_id)) continue;
    const Prediction next = mr_classify(*p.record_sim, model_);
    if (next != p.prediction) {
      p.prediction = next;
      changed.push_back(p.pair_id);
    }
  }
  return changed;
}

void RecordLayer::exclude(PairId id) {
  if (id >= pairs_.size()) throw ProtocolError("exclude of unknown pair " + std::to_string(id));
  excluded_.insert(id);
}

std::vector<LabeledInstance> RecordLayer::labeled() const {
  std::vector<LabeledInstance> out;
  out.reserve(store_.size());
  for (const auto& [id, inst] : store_) out.push_back(inst);
  return out;
}

// ---------------------------------------------------------------------------
// Layer A

void AttributeLayer::add(const CandidatePair& pair, const Prediction& prelabel) {
  if (!pair.attr_sims) throw ProtocolError("pair added to layer A without attribute similarities");
  auto& stored = pairs_[pair.pair_id] = pair;
  stored.prediction = prelabel;
  stored.label_layer = Layer::A;
  LabeledInstance inst;
  inst.pair_id = pair.pair_id;
  inst.features = attribute_features(pair);
  inst.label = prelabel.g;
  inst.weight = instance_weight(prelabel.p, Origin::R);
  inst.origin = Origin::R;
  store_[pair.pair_id] = std::move(inst);
}

void AttributeLayer::ensure_model() {
  if (model_ready_ || store_.empty()) return;
  forest_ = EvolvingForest::bootstrap(labeled(), params_, seed_);
  model_ready_ = true;
}

std::vector<PairId> AttributeLayer::classify_all() {
  std::vector<PairId> changed;
  if (!model_ready_) return changed;
  std::vector<PairId> ids;
  std::vector<std::vector<double>> features;
  for (const auto& [id, p] : pairs_) {
    if (p.label_layer == Layer::C) continue;
    ids.push_back(id);
    features.push_back(attribute_features(p));
  }
  const auto preds = kernels::classify_batch(forest_, features);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& p = pairs_.at(ids[i]);
    if (preds[i] != p.prediction) {
      p.prediction = preds[i];
      changed.push_back(ids[i]);
    }
  }
  return changed;
}

std::vector<PairId> AttributeLayer::select_batch(double p_threshold, std::size_t buckets,
                                                 std::size_t n, std::mt19937_64& rng) const {
  std::vector<PoolEntry> pool;
  for (const auto& [id, p] : pairs_) {
    if (p.label_layer == Layer::C || no_review_.contains(id)) continue;
    pool.push_back({id, p.prediction.p});
  }
  return select_uncertain_batch(pool, p_threshold, buckets, n, rng);
}

std::vector<PairId> AttributeLayer::receive_clerical(
    std::span<const std::pair<PairId, MatchLabel>> labels) {
  std::vector<PairId> changed;
  for (const auto& [id, g] : labels) {
    auto it = pairs_.find(id);
    if (it == pairs_.end()) throw ProtocolError("clerical label for unknown pair " + std::to_string(id));
    auto& p = it->second;
    const Prediction pred{g, 1.0};
    if (pred != p.prediction) changed.push_back(id);
    p.prediction = pred;
    p.label_layer = Layer::C;
    LabeledInstance inst;
    inst.pair_id = id;
    inst.features = attribute_features(p);
    inst.label = g;
    inst.weight = instance_weight(pred.p, Origin::C);
    inst.origin = Origin::C;
    store_[id] = std::move(inst);
  }
  if (!labels.empty() && !frozen_) {
    if (!model_ready_) {
      ensure_model();
    } else {
      forest_.update(labeled());
    }
  }
  auto reclassified = classify_all();
  changed.insert(changed.end(), reclassified.begin(), reclassified.end());
  return changed;
}

const CandidatePair& AttributeLayer::pair(PairId id) const {
  auto it = pairs_.find(id);
  if (it == pairs_.end()) throw ProtocolError("pair " + std::to_string(id) + " not at layer A");
  return it->second;
}

std::vector<LabeledInstance> AttributeLayer::labeled() const {
  std::vector<LabeledInstance> out;
  out.reserve(store_.size());
  for (const auto& [id, inst] : store_) out.push_back(inst);
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration

LinkageProtocol::LinkageProtocol(ProtocolConfig config, DataOwner& owner_a, DataOwner& owner_b,
                                 ClericalOracle& oracle, std::uint64_t seed, Evaluator evaluator)
    : config_(std::move(config)),
      owner_a_(owner_a),
      owner_b_(owner_b),
      oracle_(oracle),
      evaluator_(std::move(evaluator)),
      select_rng_(stream(seed, Stream::Select)),
      key_rng_(stream(seed, Stream::PairKey)),
      record_(ThresholdModel::starting_at(config_.initial_threshold)),
      attribute_(config_.forest, forest_seed(seed)) {
  config_.validate();
  if (owner_a_.source() != Source::A || owner_b_.source() != Source::B) {
    throw std::invalid_argument("owners must be passed as (A, B)");
  }
}

void LinkageProtocol::run_initial_linkage() {
  run_initial_linkage(owner_a_.encode_all(), owner_b_.encode_all());
}

void LinkageProtocol::run_initial_linkage(std::vector<EncodedRecord> enc_a,
                                          std::vector<EncodedRecord> enc_b) {
  if (enc_a.size() != owner_a_.records().size() || enc_b.size() != owner_b_.records().size()) {
    throw ProtocolError("encodings do not match the owners' record counts");
  }
  enc_a_ = std::move(enc_a);
  enc_b_ = std::move(enc_b);
  thresholds_.clear();
  record_.link(enc_a_, enc_b_);
  thresholds_.push_back(record_.model().t);
  linked_ = true;
}

Wishlist LinkageProtocol::issue_wishlist(std::span<const PairId> batch, Layer layer) {
  if (!linked_) throw ProtocolError("wishlist before initial linkage");
  Wishlist wl;
  for (PairId id : batch) {
    const CandidatePair& pair = record_.pair(id);
    WishlistRequest req;
    req.pair_id = id;
    req.layer = layer;
    if (layer == Layer::A) {
      req.pair_key = config_.secure_pair_keys ? secure_random_bytes(kPairKeyBytes)
                                              : random_bytes(key_rng_, kPairKeyBytes);
      pair_keys_[id] = req.pair_key;
      issued_keys_.push_back(req.pair_key);
    } else if (layer == Layer::C) {
      req.attributes = select_attributes(attribute_.pair(id), config_.selection);
      clerical_selections_.emplace_back(id, req.attributes);
      if (req.attributes.empty()) continue;  // nothing to disclose
    } else {
      throw ProtocolError("layer R issues no wishlist");
    }
    WishlistRequest req_b = req;
    req.record_id = enc_a_[pair.idx_a].record_id;
    req_b.record_id = enc_b_[pair.idx_b].record_id;
    wl.queues[idx(Source::A)].push_back(std::move(req));
    wl.queues[idx(Source::B)].push_back(std::move(req_b));
  }
  return wl;
}

std::vector<PairId> LinkageProtocol::review_at_attribute_layer(std::span<const PairId> batch) {
  const Wishlist wl = issue_wishlist(batch, Layer::A);
  const auto resp_a = owner_a_.respond(wl.queues[idx(Source::A)]);
  const auto resp_b = owner_b_.respond(wl.queues[idx(Source::B)]);
  std::vector<PairId> reviewed;
  for (std::size_t i = 0; i < resp_a.size(); ++i) {
    const auto& ra = resp_a[i];
    const auto& rb = resp_b[i];
    if (ra.refused || rb.refused) {
      record_.exclude(ra.pair_id);
      continue;
    }
    CandidatePair pair = record_.pair(ra.pair_id);
    pair.pair_key = pair_keys_.at(ra.pair_id);
    compare_layer_a(pair, *ra.encoding, *rb.encoding);
    for (Attr a : kAllAttrs) {
      for (const auto* enc : {&*ra.encoding, &*rb.encoding}) {
        if (const auto& v = enc->vectors[idx(a)]) received_kabf_[idx(a)].push_back(*v);
      }
    }
    attribute_.add(pair, record_.pair(ra.pair_id).prediction);
    reviewed.push_back(ra.pair_id);
    ++layer_a_reviews_;
  }
  return reviewed;
}

void LinkageProtocol::clerical_batch() {
  const std::size_t remaining = config_.clerical_budget - clerical_used_;
  const std::size_t n = std::min(config_.clerical_batch_size(), remaining);
  if (n == 0) return;
  const auto batch = attribute_.select_batch(config_.p_threshold, config_.buckets, n, select_rng_);
  if (batch.empty()) return;

  const Wishlist wl = issue_wishlist(batch, Layer::C);
  std::map<PairId, PerSource<const OwnerResponse*>> by_pair;
  PerSource<std::vector<OwnerResponse>> responses;
  for (Source s : kAllSources) {
    DataOwner& owner = s == Source::A ? owner_a_ : owner_b_;
    responses[idx(s)] = owner.respond(wl.queues[idx(s)]);
  }
  for (Source s : kAllSources) {
    const auto& queue = wl.queues[idx(s)];
    for (std::size_t i = 0; i < queue.size(); ++i) {
      const OwnerResponse& r = responses[idx(s)][i];
      by_pair[r.pair_id][idx(s)] = &r;
      if (r.refused) continue;
      DisclosureLedgerEntry e;
      e.iteration = iteration_;
      e.layer = Layer::C;
      e.source = s;
      e.record_id = r.record_id;
      e.pair_id = r.pair_id;
      e.requested = queue[i].attributes;
      e.disclosed = r.disclosed;
      ledger_.push_back(std::move(e));
      auto& pooled = clerical_pool_[{s, r.record_id}];
      for (Attr a : r.disclosed) pooled[idx(a)] = r.plaintext[idx(a)];
    }
  }

  std::vector<ReviewTask> tasks;
  for (PairId id : batch) {
    PerSource<PerAttr<std::optional<std::string>>> shown{};
    if (auto it = by_pair.find(id); it != by_pair.end()) {
      const auto& [ra, rb] = it->second;
      if (ra->refused || rb->refused) {
        attribute_.exclude_from_review(id);
        continue;
      }
      shown[idx(Source::A)] = ra->plaintext;
      shown[idx(Source::B)] = rb->plaintext;
    }
    ReviewTask task;
    task.pair_id = id;
    task.view = build_view(attribute_.pair(id), shown[idx(Source::A)], shown[idx(Source::B)],
                           config_.selection.dissimilar_bound);
    tasks.push_back(std::move(task));
  }
  if (tasks.empty()) return;

  const auto labels = oracle_.review(tasks);
  if (labels.size() != tasks.size()) throw ProtocolError("oracle returned a wrong number of labels");
  std::vector<std::pair<PairId, MatchLabel>> labeled;
  for (std::size_t i = 0; i < tasks.size(); ++i) labeled.emplace_back(tasks[i].pair_id, labels[i]);
  clerical_used_ += labeled.size();
  attribute_.receive_clerical(labeled);
}

void LinkageProtocol::report_upwards() {
  std::vector<LabelReport> reports;
  for (const auto& [id, p] : attribute_.pairs()) {
    auto it = reported_.find(id);
    if (it != reported_.end() && it->second == p.prediction) continue;
    reports.push_back({id, p.prediction, p.label_layer == Layer::C ? Origin::C : Origin::A});
    reported_[id] = p.prediction;
  }
  if (reports.empty()) return;
  backpropagate(reports, Layer::A);
}

void LinkageProtocol::backpropagate(std::span<const LabelReport> revised, Layer layer) {
  if (layer == Layer::R) throw ProtocolError("layer R has no upper layer");
  if (layer == Layer::C) {
    std::vector<std::pair<PairId, MatchLabel>> labels;
    for (const auto& r : revised) labels.emplace_back(r.pair_id, r.prediction.g);
    attribute_.receive_clerical(labels);
    return;
  }
  for (const auto& r : revised) {
    if (!attribute_.contains(r.pair_id)) {
      throw ProtocolError("revision for pair " + std::to_string(r.pair_id) + " unknown at layer A");
    }
  }
  record_.receive(revised);
  thresholds_.push_back(record_.model().t);
}

void LinkageProtocol::record_metrics(Layer layer) {
  MetricsRow row;
  row.iteration = iteration_;
  row.layer = layer;
  row.reviews_used = layer_a_reviews_;
  row.clerical_used = clerical_used_;
  row.threshold = record_.model().t;
  if (evaluator_) {
    const QualityCounts c = evaluator_(record_.pairs(), enc_a_, enc_b_);
    row.tp = c.tp;
    row.fp = c.fp;
    row.fn = c.fn;
    const double tp = static_cast<double>(c.tp);
    row.precision = c.tp + c.fp > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
    row.recall = c.tp + c.fn > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
    row.f1 = row.precision + row.recall > 0.0
                 ? 2.0 * row.precision * row.recall / (row.precision + row.recall)
                 : 0.0;
  }
  metrics_.push_back(row);
}

LayerPrivacy LinkageProtocol::privacy_summary() const {
  LayerPrivacy out;
  for (Attr a : kAllAttrs) {
    if (!received_kabf_[idx(a)].empty()) out.kabf[idx(a)] = encoding_privacy(received_kabf_[idx(a)]);
  }
  std::vector<DisclosedRecord> pool;
  for (const auto& [key, values] : clerical_pool_) pool.push_back({key.first, key.second, values});
  out.kapr = kapr(kapr_input(pool));
  out.clerical_records = pool.size();
  out.availability = availability_stats(ledger_, pool.size());
  return out;
}

RunResult LinkageProtocol::run() {
  if (!linked_) run_initial_linkage();
  iteration_ = 0;
  record_metrics(Layer::R);

  auto alr_iteration = [&](std::size_t batch_size, bool clerical) {
    ++iteration_;
    const auto n = static_cast<std::size_t>(
        std::ceil(static_cast<double>(batch_size) * config_.oversample_factor));
    const auto batch = record_.select_batch(config_.p_threshold, config_.buckets, n, select_rng_);
    if (!batch.empty()) review_at_attribute_layer(batch);
    attribute_.ensure_model();
    attribute_.classify_all();
    if (clerical) {
      for (std::size_t k = 0; k < config_.clerical_batches_per_iteration; ++k) {
        if (clerical_used_ >= config_.clerical_budget) break;
        clerical_batch();
      }
    }
    report_upwards();
    record_metrics(clerical ? Layer::C : Layer::A);
  };

  if (!record_.pairs().empty()) {
    for (std::size_t i = 0; i < config_.warmup_batches; ++i) {
      alr_iteration(config_.warmup_batch_size, clerical_used_ < config_.clerical_budget);
    }
    attribute_.freeze();
    for (std::size_t i = 0; i < config_.post_warmup_batches; ++i) {
      alr_iteration(config_.post_warmup_batch_size, false);
    }
  }

  RunResult r;
  r.metrics = metrics_;
  r.ledger = ledger_;
  r.pairs = record_.pairs();
  for (const auto& [id, p] : attribute_.pairs()) r.attribute_pairs.push_back(p);
  r.layer_a_reviews = layer_a_reviews_;
  r.clerical_labels = clerical_used_;
  r.threshold_trajectory = thresholds_;
  r.pair_keys = issued_keys_;
  r.clerical_selections = clerical_selections_;
  r.privacy = privacy_summary();
  r.model = model_snapshot(record_.model(), attribute_.forest());
  return r;
}

std::vector<std::string> audit_ledger(
    std::span<const DisclosureLedgerEntry> ledger,
    std::span<const std::pair<PairId, std::vector<Attr>>> selections,
    const PerSource<const DisclosurePolicy*>& policies) {
  std::map<PairId, std::vector<Attr>> selected;
  for (const auto& [id, attrs] : selections) {
    auto& s = selected[id];
    s.insert(s.end(), attrs.begin(), attrs.end());
  }
  std::vector<std::string> violations;
  auto where = [](const DisclosureLedgerEntry& e) {
    return std::string(source_name(e.source)) + ":" + e.record_id + " pair " +
           std::to_string(e.pair_id);
  };
  for (const auto& e : ledger) {
    if (const DisclosurePolicy* pol = policies[idx(e.source)]) {
      const auto& rp = pol->lookup(e.record_id);
      if (rp.max_layer < Layer::C) {
        violations.push_back(where(e) + ": record capped at " + std::string(layer_name(rp.max_layer)));
      }
      for (Attr a : e.disclosed) {
        if (std::find(rp.deny_clerical.begin(), rp.deny_clerical.end(), a) != rp.deny_clerical.end()) {
          violations.push_back(where(e) + ": denied attribute " + std::string(attr_name(a)));
        }
      }
    }
    if (e.layer != Layer::C) continue;
    auto it = selected.find(e.pair_id);
    for (Attr a : e.disclosed) {
      if (it == selected.end() ||
          std::find(it->second.begin(), it->second.end(), a) == it->second.end()) {
        violations.push_back(where(e) + ": attribute " + std::string(attr_name(a)) +
                             " outside the selection");
      }
    }
    for (Attr a : e.disclosed) {
      if (std::find(e.requested.begin(), e.requested.end(), a) == e.requested.end()) {
        violations.push_back(where(e) + ": attribute " + std::string(attr_name(a)) + " not requested");
      }
    }
  }
  return violations;
}

}  // namespace pprl
