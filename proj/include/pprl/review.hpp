#pragma once

// Clerical layer: attribute selection for disclosure, masked displays, the
// simulated oracle and the review session consumed by the human UI.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "json.hpp"

#include "pprl/attributes.hpp"
#include "pprl/matching.hpp"

namespace pprl {

enum class SelectionMode : std::uint8_t { NoRestrictions, NoEqual, NoEqualNoDissimilar };

std::string_view selection_mode_name(SelectionMode m) noexcept;
std::optional<SelectionMode> selection_mode_from_name(std::string_view name) noexcept;

inline constexpr double kDissimilarBound = 0.4;

struct AttributeSelectionStrategy {
  SelectionMode mode = SelectionMode::NoEqualNoDissimilar;
  double dissimilar_bound = kDissimilarBound;
};

/// Attributes whose plaintext the clerical layer requests for a pair.
std::vector<Attr> select_attributes(const CandidatePair& pair,
                                    const AttributeSelectionStrategy& strategy);

enum class FreqTag : std::uint8_t { None, Freq, Rare };

struct MaskAgree {
  FreqTag freq = FreqTag::None;
  friend bool operator==(const MaskAgree&, const MaskAgree&) = default;
};
struct MaskDisagree {
  friend bool operator==(const MaskDisagree&, const MaskDisagree&) = default;
};
struct MaskPartial {
  std::string a;
  std::string b;
  friend bool operator==(const MaskPartial&, const MaskPartial&) = default;
};
struct MaskWithheld {
  friend bool operator==(const MaskWithheld&, const MaskWithheld&) = default;
};

using MaskEntry = std::variant<MaskAgree, MaskDisagree, MaskPartial, MaskWithheld>;

FreqTag freq_tag(FreqLabel label) noexcept;

/// Masked rendering of one attribute pair. Characters on the longest common
/// subsequence show as '*'; other letters are revealed, other digits of a
/// numeric value become per-pair placeholders from "$%@", separators stay.
MaskEntry build_mask(std::string_view value_a, std::string_view value_b, double sim,
                     FreqLabel freq_label, double dissimilar_bound = kDissimilarBound);

/// Index pairs (i, j) of one longest common subsequence of a and b.
std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::string_view a,
                                                               std::string_view b);

struct MaskedPairView {
  PairId pair_id = 0;
  PerAttr<MaskEntry> entries;
};

/// Builds the view for a pair from its attribute similarities and whatever
/// plaintext both owners disclosed. Without disclosed values an attribute is
/// Agree/Disagree when the similarity alone decides it, otherwise Withheld.
MaskedPairView build_view(const CandidatePair& pair,
                          const PerAttr<std::optional<std::string>>& disclosed_a,
                          const PerAttr<std::optional<std::string>>& disclosed_b,
                          double dissimilar_bound = kDissimilarBound);

nlohmann::json to_json(const MaskEntry& e);
nlohmann::json to_json(const MaskedPairView& v);

enum class TaskStatus : std::uint8_t { Pending, Labeled };

struct ReviewTask {
  PairId pair_id = 0;
  MaskedPairView view;
  TaskStatus status = TaskStatus::Pending;
  std::optional<MatchLabel> submitted_label;
  std::string reviewer_id;
};

nlohmann::json to_json(const ReviewTask& t);

/// Source of clerical labels for a batch of tasks, returned in task order.
class ClericalOracle {
 public:
  virtual ~ClericalOracle() = default;
  virtual std::vector<MatchLabel> review(std::span<const ReviewTask> tasks) = 0;
};

/// Flips the true label with probability err, drawing from its own seeded stream.
class SimulatedOracle : public ClericalOracle {
 public:
  using TruthFn = std::function<bool(PairId)>;

  SimulatedOracle(TruthFn truth, double err, std::uint64_t seed);

  MatchLabel label(bool is_true_match);
  std::vector<MatchLabel> review(std::span<const ReviewTask> tasks) override;

 private:
  TruthFn truth_;
  std::bernoulli_distribution flip_;
  std::mt19937_64 rng_;
};

/// Wraps another oracle and records every label it returns.
class RecordingOracle : public ClericalOracle {
 public:
  explicit RecordingOracle(ClericalOracle& inner) : inner_(inner) {}
  std::vector<MatchLabel> review(std::span<const ReviewTask> tasks) override;
  const std::vector<std::pair<PairId, MatchLabel>>& log() const noexcept { return log_; }

 private:
  ClericalOracle& inner_;
  std::vector<std::pair<PairId, MatchLabel>> log_;
};

enum class SubmitResult : std::uint8_t { Accepted, Conflict };

/// Thread-safe bridge between the protocol thread and a human reviewer.
/// The protocol posts a batch and blocks until every task is labeled.
class ReviewSession : public ClericalOracle {
 public:
  struct Info {
    std::string run_id;
    std::size_t pending_count = 0;
    std::size_t budget_remaining = 0;
    bool finished = false;
  };

  ReviewSession(std::string run_id, std::size_t budget);

  std::vector<MatchLabel> review(std::span<const ReviewTask> tasks) override;

  /// First pending task in query-strategy order.
  std::optional<ReviewTask> next_task() const;
  std::vector<ReviewTask> pending_tasks() const;
  SubmitResult submit(PairId pair_id, MatchLabel label, std::string reviewer_id = {});
  Info info() const;

  /// Wakes the protocol thread; pending batches return NonMatch for the rest.
  void close();
  void mark_finished();

  /// Blocks until at least one task is pending or the session is finished.
  bool wait_for_pending(std::chrono::milliseconds timeout) const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::string run_id_;
  std::size_t budget_remaining_;
  std::vector<ReviewTask> batch_;
  std::map<PairId, ReviewTask> history_;
  bool closed_ = false;
  bool finished_ = false;
};

}  // namespace pprl
