#pragma once

// The two evolving classifiers: the record-level threshold model and the
// attribute-level evolving random forest.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "pprl/matching.hpp"

namespace pprl {

/// Which layer produced a training label.
enum class Origin : std::uint8_t { R, A, C };

std::string_view origin_name(Origin o) noexcept;

struct LabeledInstance {
  PairId pair_id = 0;
  std::vector<double> features;
  MatchLabel label = MatchLabel::NonMatch;
  double weight = 1.0;
  Origin origin = Origin::A;
};

/// Instance weight from the labelling prediction; clerical labels count double.
inline double instance_weight(double p, Origin origin) noexcept {
  return origin == Origin::C ? 2.0 * p : p;
}

// ---------------------------------------------------------------------------
// Threshold model

struct ThresholdModel {
  double t = 0.8;
  double t0 = 0.8;
  double max_shift = 0.10;
  double step_shift = 0.02;
  double grid_step = 0.01;

  static ThresholdModel starting_at(double t0) {
    ThresholdModel m;
    m.t = m.t0 = t0;
    return m;
  }
};

Prediction mr_classify(double sim, const ThresholdModel& model);

/// Candidate thresholds t0 + k*grid_step, |k*grid_step| <= max_shift.
std::vector<double> threshold_grid(const ThresholdModel& model);

/// Weighted accuracy of thresholding features[0] at `threshold`.
double weighted_accuracy(std::span<const LabeledInstance> labeled, double threshold);

/// Moves t towards the weighted-accuracy optimum on the grid by at most
/// step_shift. Ties prefer the candidate closest to the current t, then the
/// smaller one. An empty label set leaves the model unchanged.
ThresholdModel mr_update(const ThresholdModel& model, std::span<const LabeledInstance> labeled);

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  std::size_t max_trees = 100;
  std::size_t init_trees = 10;
  std::size_t add_trees = 10;
  std::size_t max_depth = 6;
  double bag_fraction = 0.7;
  double min_leaf_weight = 1.0;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(F))
};

/// Binary CART tree with weighted Gini splits.
class DecisionTree {
 public:
  struct Node {
    // Internal node: feature >= 0; samples with x[feature] < threshold go left.
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double weight_nonmatch = 0.0;
    double weight_match = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
  };

  /// Trains on instances scaled by per-sample weights (bag multiplicities);
  /// zero-weight samples are ignored.
  static DecisionTree train(std::span<const LabeledInstance> instances,
                            std::span<const double> sample_weights, const ForestParams& params,
                            std::mt19937_64& rng);

  MatchLabel vote(std::span<const double> x) const;
  std::size_t depth() const;
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  std::vector<Node> nodes_;
};

/// Gini impurity of a node holding the given class weights.
double gini_impurity(double weight_nonmatch, double weight_match) noexcept;

/// Random forest that grows by batches of new trees and evicts the oldest.
class EvolvingForest {
 public:
  EvolvingForest() = default;

  /// init_trees trees from weighted bootstrap bags. Single-class input gives a
  /// degenerate forest predicting that class with p = 0.5.
  static EvolvingForest bootstrap(std::span<const LabeledInstance> labeled,
                                  const ForestParams& params, std::uint64_t seed);

  /// Trains add_trees trees on all labeled instances, appends them and evicts
  /// the oldest beyond max_trees.
  void update(std::span<const LabeledInstance> labeled);

  Prediction classify(std::span<const double> features) const;

  std::size_t tree_count() const noexcept { return trees_.size(); }
  bool degenerate() const noexcept { return degenerate_; }
  bool empty() const noexcept { return trees_.empty() && !degenerate_; }
  const std::vector<std::uint64_t>& tree_ages() const noexcept { return ages_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }

  nlohmann::json to_json() const;

 private:
  void grow(std::span<const LabeledInstance> labeled, std::size_t count);

  ForestParams params_;
  std::vector<DecisionTree> trees_;
  std::vector<std::uint64_t> ages_;  // insertion sequence number per tree
  std::uint64_t next_age_ = 0;
  bool degenerate_ = false;
  MatchLabel degenerate_class_ = MatchLabel::NonMatch;
  std::mt19937_64 rng_;
};

/// Attribute-level feature vector: 7 similarities (absent = -1) followed by
/// 7 frequency features.
std::vector<double> attribute_features(const CandidatePair& pair);

inline constexpr double kAbsentSimilarity = -1.0;

nlohmann::json model_snapshot(const ThresholdModel& mr, const EvolvingForest& ma);

}  // namespace pprl
