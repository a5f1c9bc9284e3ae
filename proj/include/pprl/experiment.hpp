#pragma once

// Experiment harness: run configuration, single linkage runs, the ABF
// weighted-mean baseline, privacy reports and the experiment matrix.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pprl/dataset.hpp"
#include "pprl/evaluation.hpp"
#include "pprl/protocol.hpp"

namespace pprl {

/// Everything `link` needs. Loaded from a JSON document.
struct RunConfig {
  // Either CSV inputs or a generator spec.
  std::optional<std::filesystem::path> dataset_a;
  std::optional<std::filesystem::path> dataset_b;
  std::optional<std::filesystem::path> truth;
  std::optional<DatasetSpec> generate;

  EncodingParams encoding;
  ProtocolConfig protocol;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> policy_file;
  // Share of records per owner capped at layer R and at layer A (synthetic policies).
  double capped_r_share = 0.0;
  double capped_a_share = 0.0;
  // Initial threshold relative to the ground-truth optimum instead of absolute.
  std::optional<double> threshold_offset;
  bool dump_candidates = false;
};

/// Encoding parameters; the owner key is read from "owner_key" (text) or
/// "owner_key_hex" and is never written back.
EncodingParams encoding_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EncodingParams& p);

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetSpec& s);

RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

/// Loaded or generated dataset.
LinkageDataset load_dataset(const RunConfig& config);

/// Policies capping a random share of each owner's records at R and at A.
PerSource<DisclosurePolicy> synthetic_policies(const LinkageDataset& data, double capped_r,
                                               double capped_a, std::uint64_t seed);
PerSource<DisclosurePolicy> load_policies(const std::filesystem::path& path);

struct BaselineScores {
  double t_opt = 0.0;
  Quality at_topt;
  double abf_threshold = 0.0;
  Quality abf;
};

/// Layer-R candidates and record similarities computed once per dataset.
struct LinkageSetup {
  const LinkageDataset* data = nullptr;
  EncodingParams encoding;
  std::vector<EncodedRecord> enc_a;
  std::vector<EncodedRecord> enc_b;
  std::vector<CandidatePair> candidates;
  TruthIndex truth;
  ThresholdScore topt;
};

LinkageSetup prepare_setup(const LinkageDataset& data, const EncodingParams& params);

/// Optimal-threshold F1 of the conventional attribute-level weighted-mean
/// linkage over the same candidates.
ThresholdScore abf_baseline(const LinkageSetup& setup);

struct LinkOutcome {
  RunResult result;
  double initial_threshold = 0.0;
};

/// One protocol run with the simulated oracle (or the given oracle).
LinkOutcome run_link(const LinkageSetup& setup, const ProtocolConfig& config, std::uint64_t seed,
                     const PerSource<DisclosurePolicy>& policies = {},
                     ClericalOracle* oracle = nullptr);

/// Metrics CSV: iteration,layer,reviews_used,precision,recall,f1,threshold.
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_ledger_jsonl(std::ostream& out, std::span<const DisclosureLedgerEntry> ledger);
void write_candidates_jsonl(std::ostream& out, std::span<const CandidatePair> pairs,
                            const LinkageDataset& data);

/// Comparison of ABF and KABF per attribute, plus the clerical
/// layer measures of the run.
struct PrivacyReport {
  PerAttr<EncodingPrivacy> abf;
  PerAttr<EncodingPrivacy> kabf;
  EncodingPrivacy clk;
  double kapr = 0.0;
  std::size_t clerical_records = 0;
  PerAttr<std::optional<double>> availability;
};

PrivacyReport privacy_report(const LinkageSetup& setup, const RunResult& run);
nlohmann::json to_json(const PrivacyReport& r);
void write_privacy_table_csv(std::ostream& out, const PrivacyReport& r);

// ---------------------------------------------------------------------------
// Matrix

struct MatrixConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<std::size_t> budgets{100, 200, 300};
  std::vector<double> errors{0.0, 0.1, 0.2};
  double offset_span = 0.05;
  double offset_step = 0.01;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  EncodingParams encoding;
  ProtocolConfig protocol;  // budget, error and threshold are overridden per cell
};

MatrixConfig matrix_config_from_json(const nlohmann::json& j);

/// Offsets t_opt - span ... t_opt + span inclusive.
std::vector<double> threshold_offsets(double span, double step);

struct MatrixRun {
  std::size_t dataset = 0;
  std::size_t budget = 0;
  double err = 0.0;
  double offset = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> metrics;
  std::size_t clerical_labels = 0;
  std::size_t layer_a_reviews = 0;
};

struct CellSummaryRow {
  std::size_t dataset = 0;
  std::size_t budget = 0;
  double err = 0.0;
  std::size_t iteration = 0;
  std::size_t runs = 0;
  double micro_f1 = 0.0;
  double min_f1 = 0.0;
  double max_f1 = 0.0;
  double mean_threshold = 0.0;
};

struct MatrixReport {
  std::vector<std::string> dataset_names;
  std::vector<BaselineScores> baselines;
  std::vector<MatrixRun> runs;
  std::vector<CellSummaryRow> summary;
  bool partial = false;
  std::string failure;
};

/// Runs the full cross product; cells run in parallel.
MatrixReport run_experiment_matrix(const MatrixConfig& config);

/// Micro-averaged F1 and min/max per (dataset, budget, err, iteration).
std::vector<CellSummaryRow> summarize(std::span<const MatrixRun> runs);

void write_matrix_runs_csv(std::ostream& out, const MatrixReport& report);
void write_matrix_summary_csv(std::ostream& out, const MatrixReport& report);
void write_baselines_csv(std::ostream& out, const MatrixReport& report);

std::string dataset_name(const DatasetSpec& spec);

}  // namespace pprl
