#include "pprl/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace pprl {

std::string_view origin_name(Origin o) noexcept {
  switch (o) {
    case Origin::R: return "R";
    case Origin::A: return "A";
    case Origin::C: return "C";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Threshold model

Prediction mr_classify(double sim, const ThresholdModel& model) {
  const bool match = sim >= model.t;
  const double d = match ? 0.1 : 0.05;
  const double p = 0.5 * (1.0 + std::min(1.0, std::abs(sim - model.t) / d));
  return {match ? MatchLabel::Match : MatchLabel::NonMatch, p};
}

std::vector<double> threshold_grid(const ThresholdModel& model) {
  const auto k_max = static_cast<long>(std::llround(model.max_shift / model.grid_step));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(2 * k_max + 1));
  for (long k = -k_max; k <= k_max; ++k) {
    grid.push_back(model.t0 + static_cast<double>(k) * model.grid_step);
  }
  return grid;
}

double weighted_accuracy(std::span<const LabeledInstance> labeled, double threshold) {
  double correct = 0.0;
  double total = 0.0;
  for (const auto& inst : labeled) {
    const bool predicted = inst.features.at(0) >= threshold;
    if (predicted == (inst.label == MatchLabel::Match)) correct += inst.weight;
    total += inst.weight;
  }
  return total > 0.0 ? correct / total : 0.0;
}

ThresholdModel mr_update(const ThresholdModel& model, std::span<const LabeledInstance> labeled) {
  if (labeled.empty()) return model;
  constexpr double kAccTol = 1e-12;
  constexpr double kDistTol = 1e-9;

  const auto grid = threshold_grid(model);
  double best = -1.0;
  double best_c = model.t;
  for (double c : grid) {
    const double acc = weighted_accuracy(labeled, c);
    if (acc > best + kAccTol) {
      best = acc;
      best_c = c;
    } else if (std::abs(acc - best) <= kAccTol) {
      // grid is ascending, so on equal distance the earlier (smaller) one stays
      if (std::abs(c - model.t) < std::abs(best_c - model.t) - kDistTol) best_c = c;
    }
  }

  ThresholdModel next = model;
  const double shift = std::clamp(best_c - model.t, -model.step_shift, model.step_shift);
  double t = std::clamp(model.t + shift, model.t0 - model.max_shift, model.t0 + model.max_shift);
  const double k = std::round((t - model.t0) / model.grid_step);
  const double snapped = model.t0 + k * model.grid_step;
  if (std::abs(snapped - t) < kDistTol) t = snapped;
  next.t = t;
  return next;
}

// ---------------------------------------------------------------------------
// Decision tree

double gini_impurity(double weight_nonmatch, double weight_match) noexcept {
  const double total = weight_nonmatch + weight_match;
  if (total <= 0.0) return 0.0;
  const double pn = weight_nonmatch / total;
  const double pm = weight_match / total;
  return 1.0 - pn * pn - pm * pm;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(std::span<const LabeledInstance> inst, std::span<const double> weights,
              const ForestParams& params, std::mt19937_64& rng)
      : inst_(inst), weights_(weights), params_(params), rng_(rng) {
    n_features_ = inst.empty() ? 0 : inst.front().features.size();
    k_ = params.features_per_split != 0
             ? std::min(params.features_per_split, n_features_)
             : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features_))));
  }

  std::vector<DecisionTree::Node> build() {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < inst_.size(); ++i) {
      if (weights_[i] > 0.0) rows.push_back(i);
    }
    grow(rows, 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  std::int32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    double wn = 0.0;
    double wm = 0.0;
    for (auto r : rows) (inst_[r].label == MatchLabel::Match ? wm : wn) += weights_[r];
    nodes_[id].weight_nonmatch = wn;
    nodes_[id].weight_match = wm;

    if (depth >= params_.max_depth || wn == 0.0 || wm == 0.0 ||
        wn + wm < 2.0 * params_.min_leaf_weight) {
      return id;
    }
    const double parent = (wn + wm) * gini_impurity(wn, wm);
    const Split split = best_split(rows, parent);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : rows) {
      (inst_[r].features[static_cast<std::size_t>(split.feature)] < split.threshold ? left : right)
          .push_back(r);
    }
    nodes_[id].feature = split.feature;
    nodes_[id].threshold = split.threshold;
    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  // Features are tried in random order; the first k are always evaluated and
  // further ones only until some split reduces impurity.
  Split best_split(const std::vector<std::size_t>& rows, double parent) {
    std::vector<std::size_t> order(n_features_);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_));

    Split best;
    best.score = parent - kGainTol;
    for (std::size_t n = 0; n < order.size(); ++n) {
      if (n >= k_ && best.feature >= 0) break;
      evaluate_feature(rows, order[n], best);
    }
    return best;
  }

  void evaluate_feature(const std::vector<std::size_t>& rows, std::size_t f, Split& best) {
    std::vector<std::size_t> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
      return inst_[a].features[f] < inst_[b].features[f];
    });
    double tn = 0.0;
    double tm = 0.0;
    for (auto r : sorted) (inst_[r].label == MatchLabel::Match ? tm : tn) += weights_[r];
    double ln = 0.0;
    double lm = 0.0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const auto r = sorted[i];
      (inst_[r].label == MatchLabel::Match ? lm : ln) += weights_[r];
      const double x = inst_[r].features[f];
      const double x_next = inst_[sorted[i + 1]].features[f];
      if (!(x < x_next)) continue;
      const double wl = ln + lm;
      const double wr = (tn - ln) + (tm - lm);
      if (wl < params_.min_leaf_weight || wr < params_.min_leaf_weight) continue;
      const double score = wl * gini_impurity(ln, lm) + wr * gini_impurity(tn - ln, tm - lm);
      if (score < best.score - kScoreTol) {
        best.feature = static_cast<int>(f);
        best.threshold = 0.5 * (x + x_next);
        best.score = score;
      }
    }
  }

  static constexpr double kGainTol = 1e-12;
  static constexpr double kScoreTol = 1e-12;

  std::span<const LabeledInstance> inst_;
  std::span<const double> weights_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
  std::size_t n_features_ = 0;
  std::size_t k_ = 0;
  std::vector<DecisionTree::Node> nodes_;
};

}  // namespace

DecisionTree DecisionTree::train(std::span<const LabeledInstance> instances,
                                 std::span<const double> sample_weights,
                                 const ForestParams& params, std::mt19937_64& rng) {
  if (instances.size() != sample_weights.size()) {
    throw std::invalid_argument("one sample weight per instance required");
  }
  DecisionTree tree;
  tree.nodes_ = TreeBuilder(instances, sample_weights, params, rng).build();
  return tree;
}

MatchLabel DecisionTree::vote(std::span<const double> x) const {
  if (nodes_.empty()) throw std::logic_error("empty decision tree");
  std::size_t n = 0;
  while (!nodes_[n].is_leaf()) {
    const auto& node = nodes_[n];
    n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] < node.threshold
                                     ? node.left
                                     : node.right);
  }
  return nodes_[n].weight_match > nodes_[n].weight_nonmatch ? MatchLabel::Match
                                                            : MatchLabel::NonMatch;
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t deepest = 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [n, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

nlohmann::json DecisionTree::to_json() const {
  std::function<nlohmann::json(std::size_t)> node_json = [&](std::size_t n) {
    const auto& node = nodes_[n];
    nlohmann::json j;
    if (node.is_leaf()) {
      j["leaf"] = label_name(node.weight_match > node.weight_nonmatch ? MatchLabel::Match
                                                                      : MatchLabel::NonMatch);
      j["weight_match"] = node.weight_match;
      j["weight_nonmatch"] = node.weight_nonmatch;
    } else {
      j["feature"] = node.feature;
      j["threshold"] = node.threshold;
      j["left"] = node_json(static_cast<std::size_t>(node.left));
      j["right"] = node_json(static_cast<std::size_t>(node.right));
    }
    return j;
  };
  return nodes_.empty() ? nlohmann::json{} : node_json(0);
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree tree;
  std::function<std::int32_t(const nlohmann::json&)> add = [&](const nlohmann::json& jn) {
    const auto id = static_cast<std::int32_t>(tree.nodes_.size());
    tree.nodes_.emplace_back();
    if (jn.contains("leaf")) {
      tree.nodes_[static_cast<std::size_t>(id)].weight_match = jn.at("weight_match").get<double>();
      tree.nodes_[static_cast<std::size_t>(id)].weight_nonmatch =
          jn.at("weight_nonmatch").get<double>();
      return id;
    }
    const int feature = jn.at("feature").get<int>();
    const double threshold = jn.at("threshold").get<double>();
    const auto l = add(jn.at("left"));
    const auto r = add(jn.at("right"));
    auto& node = tree.nodes_[static_cast<std::size_t>(id)];
    node.feature = feature;
    node.threshold = threshold;
    node.left = l;
    node.right = r;
    return id;
  };
  if (!j.is_null()) add(j);
  return tree;
}

// ---------------------------------------------------------------------------
// Evolving forest

namespace {

struct ClassPresence {
  bool match = false;
  bool nonmatch = false;
};

ClassPresence classes_of(std::span<const LabeledInstance> labeled) {
  ClassPresence c;
  for (const auto& inst : labeled) {
    if (inst.weight <= 0.0) continue;
    (inst.label == MatchLabel::Match ? c.match : c.nonmatch) = true;
  }
  return c;
}

}  // namespace

EvolvingForest EvolvingForest::bootstrap(std::span<const LabeledInstance> labeled,
                                         const ForestParams& params, std::uint64_t seed) {
  EvolvingForest forest;
  forest.params_ = params;
  forest.rng_.seed(seed);
  const auto classes = classes_of(labeled);
  if (!(classes.match && classes.nonmatch)) {
    forest.degenerate_ = true;
    forest.degenerate_class_ = classes.match ? MatchLabel::Match : MatchLabel::NonMatch;
    return forest;
  }
  forest.grow(labeled, params.init_trees);
  return forest;
}

void EvolvingForest::update(std::span<const LabeledInstance> labeled) {
  const auto classes = classes_of(labeled);
  if (trees_.empty() && !(classes.match && classes.nonmatch)) {
    degenerate_ = true;
    degenerate_class_ = classes.match ? MatchLabel::Match : MatchLabel::NonMatch;
    return;
  }
  const bool was_degenerate = degenerate_;
  degenerate_ = false;
  grow(labeled, was_degenerate ? params_.init_trees : params_.add_trees);
}

void EvolvingForest::grow(std::span<const LabeledInstance> labeled, std::size_t count) {
  std::vector<double> w(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) w[i] = std::max(0.0, labeled[i].weight);
  const auto bag = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params_.bag_fraction *
                                               static_cast<double>(labeled.size()))));
  std::vector<double> multiplicity(labeled.size());
  for (std::size_t t = 0; t < count; ++t) {
    std::discrete_distribution<std::size_t> draw(w.begin(), w.end());
    std::fill(multiplicity.begin(), multiplicity.end(), 0.0);
    for (std::size_t s = 0; s < bag; ++s) multiplicity[draw(rng_)] += 1.0;
    trees_.push_back(DecisionTree::train(labeled, multiplicity, params_, rng_));
    ages_.push_back(next_age_++);
  }
  while (trees_.size() > params_.max_trees) {
    trees_.erase(trees_.begin());
    ages_.erase(ages_.begin());
  }
}

Prediction EvolvingForest::classify(std::span<const double> features) const {
  if (degenerate_) return {degenerate_class_, 0.5};
  if (trees_.empty()) throw std::logic_error("classify on an empty forest");
  std::size_t match = 0;
  for (const auto& tree : trees_) {
    if (tree.vote(features) == MatchLabel::Match) ++match;
  }
  const std::size_t nonmatch = trees_.size() - match;
  const double n = static_cast<double>(trees_.size());
  if (match > nonmatch) return {MatchLabel::Match, static_cast<double>(match) / n};
  return {MatchLabel::NonMatch, static_cast<double>(nonmatch) / n};
}

nlohmann::json EvolvingForest::to_json() const {
  nlohmann::json j;
  j["max_trees"] = params_.max_trees;
  j["init_trees"] = params_.init_trees;
  j["add_trees"] = params_.add_trees;
  j["max_depth"] = params_.max_depth;
  j["bag_fraction"] = params_.bag_fraction;
  j["degenerate"] = degenerate_;
  if (degenerate_) j["degenerate_class"] = label_name(degenerate_class_);
  j["trees"] = nlohmann::json::array();
  for (std::size_t i = 0; i < trees_.size(); ++i) {
    j["trees"].push_back({{"age", ages_[i]}, {"root", trees_[i].to_json()}});
  }
  return j;
}

std::vector<double> attribute_features(const CandidatePair& pair) {
  std::vector<double> x(2 * kAttrCount, kAbsentSimilarity);
  for (Attr a : kAllAttrs) {
    if (pair.attr_sims && (*pair.attr_sims)[idx(a)]) x[idx(a)] = *(*pair.attr_sims)[idx(a)];
    x[kAttrCount + idx(a)] = static_cast<double>(pair.freq_features[idx(a)]);
  }
  return x;
}

nlohmann::json model_snapshot(const ThresholdModel& mr, const EvolvingForest& ma) {
  nlohmann::json j;
  j["version"] = 1;
  j["threshold_model"] = {{"t", mr.t},
                          {"t0", mr.t0},
                          {"max_shift", mr.max_shift},
                          {"step_shift", mr.step_shift},
                          {"grid_step", mr.grid_step}};
  j["forest"] = ma.to_json();
  return j;
}

}  // namespace pprl
