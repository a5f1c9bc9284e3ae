#include "pprl/review.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace pprl {

namespace {

constexpr std::array<std::string_view, 3> kModeNames{"no_restrictions", "no_equal",
                                                     "no_equal_no_dissimilar"};
constexpr std::string_view kPlaceholders = "$%@";

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_separator(char c) { return !is_digit(c) && !is_alpha(c); }

bool is_numeric(std::string_view v) {
  bool digit = false;
  for (char c : v) {
    if (is_alpha(c)) return false;
    digit = digit || is_digit(c);
  }
  return digit;
}

std::string_view freq_tag_name(FreqTag t) {
  switch (t) {
    case FreqTag::Freq: return "freq";
    case FreqTag::Rare: return "rare";
    case FreqTag::None: break;
  }
  return "none";
}

}  // namespace

std::string_view selection_mode_name(SelectionMode m) noexcept {
  return kModeNames[static_cast<std::size_t>(m)];
}

std::optional<SelectionMode> selection_mode_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == name) return static_cast<SelectionMode>(i);
  }
  return std::nullopt;
}

std::vector<Attr> select_attributes(const CandidatePair& pair,
                                    const AttributeSelectionStrategy& strategy) {
  std::vector<Attr> out;
  if (!pair.attr_sims) return out;
  for (Attr a : kAllAttrs) {
    const auto& sim = (*pair.attr_sims)[idx(a)];
    if (!sim) continue;
    switch (strategy.mode) {
      case SelectionMode::NoRestrictions:
        out.push_back(a);
        break;
      case SelectionMode::NoEqual:
        if (*sim < 1.0) out.push_back(a);
        break;
      case SelectionMode::NoEqualNoDissimilar:
        if (*sim < 1.0 && *sim >= strategy.dissimilar_bound) out.push_back(a);
        break;
    }
  }
  return out;
}

FreqTag freq_tag(FreqLabel label) noexcept {
  if (label == 1) return FreqTag::Freq;
  if (label == 3) return FreqTag::Rare;
  return FreqTag::None;
}

std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::string_view a,
                                                               std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  // len[i][j] = LCS length of a[i..] and b[j..]
  std::vector<std::uint32_t> len((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return len[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      at(i, j) = a[i] == b[j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      out.emplace_back(i++, j++);
    } else if (at(i + 1, j) >= at(i, j + 1)) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

namespace {

MaskPartial partial_mask(std::string_view a, std::string_view b) {
  const auto lcs = lcs_alignment(a, b);
  const bool numeric = is_numeric(a) && is_numeric(b);
  std::string da(a.size(), '*'), db(b.size(), '*');
  std::array<char, 10> symbol{};
  std::size_t next_symbol = 0;
  auto render = [&](char c) -> char {
    if (is_separator(c)) return c;
    if (!numeric || !is_digit(c)) return c;
    char& s = symbol[static_cast<std::size_t>(c - '0')];
    if (s == 0) s = kPlaceholders[next_symbol++ % kPlaceholders.size()];
    return s;
  };
  // Walk the alignment: between two LCS anchors the unmatched characters of a
  // come before those of b.
  std::size_t i = 0, j = 0;
  auto flush = [&](std::size_t i_end, std::size_t j_end) {
    for (; i < i_end; ++i) da[i] = render(a[i]);
    for (; j < j_end; ++j) db[j] = render(b[j]);
  };
  for (const auto& [li, lj] : lcs) {
    flush(li, lj);
    if (is_separator(a[li])) {
      da[li] = a[li];
      db[lj] = b[lj];
    }
    i = li + 1;
    j = lj + 1;
  }
  flush(a.size(), b.size());
  return MaskPartial{std::move(da), std::move(db)};
}

}  // namespace

MaskEntry build_mask(std::string_view value_a, std::string_view value_b, double sim,
                     FreqLabel freq_label, double dissimilar_bound) {
  if (value_a.empty() || value_b.empty()) return MaskWithheld{};
  if (sim >= 1.0) return MaskAgree{freq_tag(freq_label)};
  if (sim < dissimilar_bound) return MaskDisagree{};
  return partial_mask(value_a, value_b);
}

MaskedPairView build_view(const CandidatePair& pair,
                          const PerAttr<std::optional<std::string>>& disclosed_a,
                          const PerAttr<std::optional<std::string>>& disclosed_b,
                          double dissimilar_bound) {
  MaskedPairView view;
  view.pair_id = pair.pair_id;
  for (Attr attr : kAllAttrs) {
    const std::size_t k = idx(attr);
    auto& entry = view.entries[k];
    entry = MaskWithheld{};
    if (!pair.attr_sims || !(*pair.attr_sims)[k]) continue;
    const double sim = *(*pair.attr_sims)[k];
    const FreqLabel freq = pair.freq_features[k];
    if (disclosed_a[k] && disclosed_b[k]) {
      entry = build_mask(*disclosed_a[k], *disclosed_b[k], sim, freq, dissimilar_bound);
    } else if (sim >= 1.0) {
      entry = MaskAgree{freq_tag(freq)};
    } else if (sim < dissimilar_bound) {
      entry = MaskDisagree{};
    }
  }
  return view;
}

nlohmann::json to_json(const MaskEntry& e) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MaskAgree>) {
          return {{"kind", "agree"}, {"freq", freq_tag_name(m.freq)}};
        } else if constexpr (std::is_same_v<T, MaskDisagree>) {
          return {{"kind", "disagree"}};
        } else if constexpr (std::is_same_v<T, MaskPartial>) {
          return {{"kind", "partial"}, {"a", m.a}, {"b", m.b}};
        } else {
          return {{"kind", "withheld"}};
        }
      },
      e);
}

nlohmann::json to_json(const MaskedPairView& v) {
  nlohmann::json attrs = nlohmann::json::object();
  for (Attr a : kAllAttrs) attrs[std::string(attr_name(a))] = to_json(v.entries[idx(a)]);
  return {{"pair_id", v.pair_id}, {"attributes", std::move(attrs)}};
}

nlohmann::json to_json(const ReviewTask& t) {
  nlohmann::json j = to_json(t.view);
  j["status"] = t.status == TaskStatus::Pending ? "pending" : "labeled";
  j["submitted_label"] = t.submitted_label
                             ? nlohmann::json(t.submitted_label == MatchLabel::Match ? "match"
                                                                                     : "nonmatch")
                             : nlohmann::json(nullptr);
  j["reviewer_id"] = t.reviewer_id;
  return j;
}

// ---------------------------------------------------------------------------

SimulatedOracle::SimulatedOracle(TruthFn truth, double err, std::uint64_t seed)
    : truth_(std::move(truth)), flip_(err), rng_(seed) {
  if (!(err >= 0.0 && err <= 1.0)) throw std::invalid_argument("oracle error rate outside [0, 1]");
}

MatchLabel SimulatedOracle::label(bool is_true_match) {
  const bool flipped = flip_(rng_);
  return (is_true_match != flipped) ? MatchLabel::Match : MatchLabel::NonMatch;
}

std::vector<MatchLabel> SimulatedOracle::review(std::span<const ReviewTask> tasks) {
  if (!truth_) throw std::logic_error("simulated oracle without ground truth");
  std::vector<MatchLabel> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(label(truth_(t.pair_id)));
  return out;
}

std::vector<MatchLabel> RecordingOracle::review(std::span<const ReviewTask> tasks) {
  auto labels = inner_.review(tasks);
  for (std::size_t i = 0; i < tasks.size() && i < labels.size(); ++i) {
    log_.emplace_back(tasks[i].pair_id, labels[i]);
  }
  return labels;
}

// ---------------------------------------------------------------------------

ReviewSession::ReviewSession(std::string run_id, std::size_t budget)
    : run_id_(std::move(run_id)), budget_remaining_(budget) {}

std::vector<MatchLabel> ReviewSession::review(std::span<const ReviewTask> tasks) {
  std::unique_lock lock(mu_);
  batch_.assign(tasks.begin(), tasks.end());
  for (auto& t : batch_) {
    t.status = TaskStatus::Pending;
    t.submitted_label.reset();
  }
  cv_.notify_all();
  cv_.wait(lock, [&] {
    return closed_ || std::all_of(batch_.begin(), batch_.end(), [](const ReviewTask& t) {
             return t.status == TaskStatus::Labeled;
           });
  });
  std::vector<MatchLabel> out;
  out.reserve(batch_.size());
  for (auto& t : batch_) {
    out.push_back(t.submitted_label.value_or(MatchLabel::NonMatch));
    history_[t.pair_id] = t;
  }
  batch_.clear();
  cv_.notify_all();
  return out;
}

std::optional<ReviewTask> ReviewSession::next_task() const {
  std::lock_guard lock(mu_);
  for (const auto& t : batch_) {
    if (t.status == TaskStatus::Pending) return t;
  }
  return std::nullopt;
}

std::vector<ReviewTask> ReviewSession::pending_tasks() const {
  std::lock_guard lock(mu_);
  std::vector<ReviewTask> out;
  for (const auto& t : batch_) {
    if (t.status == TaskStatus::Pending) out.push_back(t);
  }
  return out;
}

SubmitResult ReviewSession::submit(PairId pair_id, MatchLabel label, std::string reviewer_id) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(batch_.begin(), batch_.end(),
                         [&](const ReviewTask& t) { return t.pair_id == pair_id; });
  if (it == batch_.end() || it->status != TaskStatus::Pending || closed_) {
    return SubmitResult::Conflict;
  }
  it->status = TaskStatus::Labeled;
  it->submitted_label = label;
  it->reviewer_id = std::move(reviewer_id);
  if (budget_remaining_ > 0) --budget_remaining_;
  cv_.notify_all();
  return SubmitResult::Accepted;
}

ReviewSession::Info ReviewSession::info() const {
  std::lock_guard lock(mu_);
  Info i;
  i.run_id = run_id_;
  i.pending_count = static_cast<std::size_t>(std::count_if(
      batch_.begin(), batch_.end(), [](const ReviewTask& t) { return t.status == TaskStatus::Pending; }));
  i.budget_remaining = budget_remaining_;
  i.finished = finished_;
  return i;
}

void ReviewSession::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

void ReviewSession::mark_finished() {
  std::lock_guard lock(mu_);
  finished_ = true;
  cv_.notify_all();
}

bool ReviewSession::wait_for_pending(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] {
    return finished_ || closed_ ||
           std::any_of(batch_.begin(), batch_.end(),
                       [](const ReviewTask& t) { return t.status == TaskStatus::Pending; });
  });
}

}  // namespace pprl
