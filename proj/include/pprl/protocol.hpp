#pragma once

// Linkage-unit orchestration of the three-layer protocol: initial record-level
// linkage, the nested active-learning loops, wishlists, owner responses under
// disclosure policies, back-propagation of revised labels and reclassification.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "pprl/encoding.hpp"
#include "pprl/matching.hpp"
#include "pprl/models.hpp"
#include "pprl/privacy.hpp"
#include "pprl/review.hpp"

namespace pprl {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProtocolConfig {
  double p_threshold = 0.8;
  std::size_t buckets = 10;
  std::size_t warmup_batches = 5;
  std::size_t warmup_batch_size = 100;
  std::size_t clerical_batches_per_iteration = 2;
  std::size_t clerical_budget = 100;
  std::size_t post_warmup_batches = 4;
  std::size_t post_warmup_batch_size = 1000;
  double oracle_err = 0.0;
  double oversample_factor = 1.0;
  // Probability that a pair request is answered by both owners when policy
  // permits; each owner answers independently with sqrt(response_rate).
  double response_rate = 1.0;
  double initial_threshold = 0.8;
  AttributeSelectionStrategy selection;
  ForestParams forest;
  bool secure_pair_keys = false;

  std::size_t clerical_batch_size() const noexcept {
    return clerical_budget / 10 > 0 ? clerical_budget / 10 : 1;
  }
  void validate() const;
};

nlohmann::json to_json(const ProtocolConfig& c);
ProtocolConfig protocol_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Disclosure policy and owner side

struct RecordPolicy {
  Layer max_layer = Layer::C;
  std::vector<Attr> deny_clerical;
};

/// Per-record cap on the deepest layer that may receive information.
class DisclosurePolicy {
 public:
  void set(const std::string& record_id, RecordPolicy policy);
  const RecordPolicy& lookup(const std::string& record_id) const;
  bool permits(const std::string& record_id, Layer layer) const;
  std::size_t size() const noexcept { return records_.size(); }
  const std::unordered_map<std::string, RecordPolicy>& records() const noexcept {
    return records_;
  }

  nlohmann::json to_json() const;
  static DisclosurePolicy from_json(const nlohmann::json& j);

 private:
  std::unordered_map<std::string, RecordPolicy> records_;
};

struct WishlistRequest {
  std::string record_id;
  PairId pair_id = 0;
  Layer layer = Layer::A;
  Bytes pair_key;              // layer A only
  std::vector<Attr> attributes;  // layer C only
};

struct Wishlist {
  PerSource<std::vector<WishlistRequest>> queues;
  std::size_t size(Source s) const { return queues[idx(s)].size(); }
};

struct OwnerResponse {
  PairId pair_id = 0;
  std::string record_id;
  bool refused = false;
  std::optional<KeyedAttributeEncoding> encoding;     // layer A
  PerAttr<std::optional<std::string>> plaintext;      // layer C
  std::vector<Attr> disclosed;                        // layer C
};

/// A data owner: holds plaintext, encodes locally and answers wishlists
/// within its disclosure policy.
class DataOwner {
 public:
  DataOwner(Source source, std::vector<PlainRecord> records, EncodingParams params,
            DisclosurePolicy policy = {}, double response_probability = 1.0,
            std::uint64_t seed = 0);

  Source source() const noexcept { return source_; }
  std::span<const PlainRecord> records() const noexcept { return records_; }
  const PlainRecord& record(const std::string& id) const;
  const DisclosurePolicy& policy() const noexcept { return policy_; }
  const EncodingParams& params() const noexcept { return params_; }
  const FrequencyTable& frequencies() const noexcept { return freq_; }

  /// Record-level encodings with blocking keys, in record order.
  std::vector<EncodedRecord> encode_all() const;

  std::vector<OwnerResponse> respond(std::span<const WishlistRequest> requests);

 private:
  Source source_;
  std::vector<PlainRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  EncodingParams params_;
  DisclosurePolicy policy_;
  FrequencyTable freq_;
  std::bernoulli_distribution respond_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Query strategy

/// Width of one uncertainty bucket, (p_t - 0.5) / x.
double bucket_width(double p_threshold, std::size_t buckets) noexcept;
/// floor((p - 0.5) / width) clamped to [0, x-1].
std::size_t bucket_index(double p, double p_threshold, std::size_t buckets) noexcept;

struct PoolEntry {
  PairId pair_id = 0;
  double p = 0.5;
};

/// Bucket-based uncertainty sampling over entries with p < p_t: round-robin
/// over buckets by ascending lower bound, one uniform draw per non-empty bucket
/// per round. Returns pair ids in selection order.
std::vector<PairId> select_uncertain_batch(std::span<const PoolEntry> pool, double p_threshold,
                                           std::size_t buckets, std::size_t batch_size,
                                           std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Layers

struct LabelReport {
  PairId pair_id = 0;
  Prediction prediction;
  Origin origin = Origin::A;
};

/// Layer R. Its inputs are restricted to record-level encodings and (g, p)
/// reports from the layer below.
class RecordLayer {
 public:
  explicit RecordLayer(ThresholdModel model) : model_(model) {}

  /// Blocking, record-level Dice and initial classification.
  void link(std::span<const EncodedRecord> enc_a, std::span<const EncodedRecord> enc_b);

  std::vector<PairId> select_batch(double p_threshold, std::size_t buckets, std::size_t n,
                                   std::mt19937_64& rng) const;

  /// Upserts the reports into the M_R store, runs one threshold update and
  /// reclassifies every non-reviewed pair. Returns the pairs whose prediction
  /// changed by reclassification.
  std::vector<PairId> receive(std::span<const LabelReport> reports);

  void exclude(PairId id);
  bool excluded(PairId id) const { return excluded_.contains(id); }

  const std::vector<CandidatePair>& pairs() const noexcept { return pairs_; }
  const CandidatePair& pair(PairId id) const;
  const ThresholdModel& model() const noexcept { return model_; }
  std::vector<LabeledInstance> labeled() const;

 private:
  std::vector<PairId> reclassify();

  ThresholdModel model_;
  std::vector<CandidatePair> pairs_;
  std::map<PairId, LabeledInstance> store_;
  std::set<PairId> excluded_;
};

/// Layer A: pairs with keyed attribute-level similarities and the evolving forest.
class AttributeLayer {
 public:
  AttributeLayer(ForestParams params, std::uint64_t seed) : params_(params), seed_(seed) {}

  /// Adds a compared pair together with its layer-R prediction as prelabel.
  void add(const CandidatePair& pair, const Prediction& prelabel);

  /// Bootstraps M_A from the current store if it does not exist yet.
  void ensure_model();
  /// Classifies every pair without a clerical label; returns changed pairs.
  std::vector<PairId> classify_all();

  std::vector<PairId> select_batch(double p_threshold, std::size_t buckets, std::size_t n,
                                   std::mt19937_64& rng) const;

  /// Applies clerical labels: upsert (origin C), one model update unless
  /// frozen, then reclassification. Returns pairs whose prediction changed.
  std::vector<PairId> receive_clerical(std::span<const std::pair<PairId, MatchLabel>> labels);

  void exclude_from_review(PairId id) { no_review_.insert(id); }
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  bool contains(PairId id) const { return pairs_.contains(id); }
  const CandidatePair& pair(PairId id) const;
  const std::map<PairId, CandidatePair>& pairs() const noexcept { return pairs_; }
  const EvolvingForest& forest() const noexcept { return forest_; }
  std::vector<LabeledInstance> labeled() const;

 private:
  ForestParams params_;
  std::uint64_t seed_;
  std::map<PairId, CandidatePair> pairs_;
  std::map<PairId, LabeledInstance> store_;
  std::set<PairId> no_review_;
  EvolvingForest forest_;
  bool model_ready_ = false;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Run

struct MetricsRow {
  std::size_t iteration = 0;
  Layer layer = Layer::R;
  std::size_t reviews_used = 0;   // cumulative layer-A reviews
  std::size_t clerical_used = 0;  // cumulative clerical labels
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct QualityCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Scores the current top-layer predictions; supplied by the harness.
using Evaluator = std::function<QualityCounts(std::span<const CandidatePair>,
                                              std::span<const EncodedRecord>,
                                              std::span<const EncodedRecord>)>;

struct LayerPrivacy {
  PerAttr<EncodingPrivacy> kabf;
  double kapr = 0.0;
  std::size_t clerical_records = 0;
  PerAttr<std::optional<double>> availability;
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  std::vector<DisclosureLedgerEntry> ledger;
  std::vector<CandidatePair> pairs;            // final top-layer state
  std::vector<CandidatePair> attribute_pairs;  // layer-A state, with attribute similarities
  std::size_t layer_a_reviews = 0;
  std::size_t clerical_labels = 0;
  std::vector<double> threshold_trajectory;
  std::vector<Bytes> pair_keys;
  std::vector<std::pair<PairId, std::vector<Attr>>> clerical_selections;
  LayerPrivacy privacy;
  nlohmann::json model;
};

class LinkageProtocol {
 public:
  LinkageProtocol(ProtocolConfig config, DataOwner& owner_a, DataOwner& owner_b,
                  ClericalOracle& oracle, std::uint64_t seed, Evaluator evaluator = {});

  /// Encodes at the owners, blocks and classifies every candidate pair at layer R.
  void run_initial_linkage();
  /// Same, reusing encodings the owners produced earlier with encode_all().
  void run_initial_linkage(std::vector<EncodedRecord> enc_a, std::vector<EncodedRecord> enc_b);
  /// Runs the complete schedule (initial linkage included when not yet done).
  RunResult run();

  Wishlist issue_wishlist(std::span<const PairId> batch, Layer layer);
  /// Applies revised predictions from layer A or C. See RecordLayer::receive
  /// and AttributeLayer::receive_clerical.
  void backpropagate(std::span<const LabelReport> revised, Layer layer);

  const RecordLayer& record_layer() const noexcept { return record_; }
  const AttributeLayer& attribute_layer() const noexcept { return attribute_; }
  const std::vector<DisclosureLedgerEntry>& ledger() const noexcept { return ledger_; }
  std::size_t clerical_used() const noexcept { return clerical_used_; }
  std::size_t layer_a_reviews() const noexcept { return layer_a_reviews_; }

 private:
  std::vector<PairId> review_at_attribute_layer(std::span<const PairId> batch);
  void clerical_batch();
  void report_upwards();
  void record_metrics(Layer layer);
  LayerPrivacy privacy_summary() const;

  ProtocolConfig config_;
  DataOwner& owner_a_;
  DataOwner& owner_b_;
  ClericalOracle& oracle_;
  Evaluator evaluator_;

  std::mt19937_64 select_rng_;
  std::mt19937_64 key_rng_;

  std::vector<EncodedRecord> enc_a_;
  std::vector<EncodedRecord> enc_b_;
  RecordLayer record_;
  AttributeLayer attribute_;
  bool linked_ = false;

  std::map<PairId, Prediction> reported_;  // last (g,p) reported to layer R per pair
  std::map<PairId, Bytes> pair_keys_;
  std::vector<Bytes> issued_keys_;
  std::map<std::pair<Source, std::string>, PerAttr<std::optional<std::string>>> clerical_pool_;
  std::vector<std::pair<PairId, std::vector<Attr>>> clerical_selections_;
  PerAttr<std::vector<BitVector>> received_kabf_;
  std::vector<DisclosureLedgerEntry> ledger_;
  std::vector<MetricsRow> metrics_;
  std::vector<double> thresholds_;
  std::size_t iteration_ = 0;
  std::size_t clerical_used_ = 0;
  std::size_t layer_a_reviews_ = 0;
};

/// Violations of the need-to-know rules: layer-C attributes outside the
/// selection made for the pair, or entries for records whose policy caps
/// them above the entry's layer. Empty when the ledger is clean.
std::vector<std::string> audit_ledger(
    std::span<const DisclosureLedgerEntry> ledger,
    std::span<const std::pair<PairId, std::vector<Attr>>> selections,
    const PerSource<const DisclosurePolicy*>& policies);

}  // namespace pprl
