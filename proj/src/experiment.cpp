#include "pprl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

#include <omp.h>

#include "pprl/kernels.hpp"

namespace pprl {

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::mt19937_64 rng(seq);
  return rng();
}

// Derived streams of one run, apart from the protocol's own.
constexpr std::uint64_t kOracleStream = 4;
constexpr std::uint64_t kOwnerStream = 5;
constexpr std::uint64_t kPolicyStream = 7;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

EncodingParams encoding_params_from_json(const nlohmann::json& j) {
  EncodingParams p;
  read_opt(j, "record_bits", p.record_bits);
  read_opt(j, "record_hashes", p.record_hashes);
  read_opt(j, "attr_bits", p.attr_bits);
  read_opt(j, "q", p.q);
  read_opt(j, "xor_fold", p.xor_fold);
  if (auto it = j.find("attr_hashes"); it != j.end()) {
    for (const auto& [name, h] : it->items()) {
      auto a = attr_from_name(name);
      if (!a) throw std::invalid_argument("unknown attribute in attr_hashes: " + name);
      p.attr_hashes[idx(*a)] = h.get<std::size_t>();
    }
  }
  if (auto it = j.find("owner_key_hex"); it != j.end()) {
    p.owner_key = from_hex(it->get<std::string>());
  } else if (auto it2 = j.find("owner_key"); it2 != j.end()) {
    const auto s = it2->get<std::string>();
    p.owner_key.assign(s.begin(), s.end());
  }
  return p;
}

nlohmann::json to_json(const EncodingParams& p) {
  nlohmann::json hashes = nlohmann::json::object();
  for (Attr a : kAllAttrs) hashes[std::string(attr_name(a))] = p.attr_hashes[idx(a)];
  return {{"record_bits", p.record_bits}, {"record_hashes", p.record_hashes},
          {"attr_bits", p.attr_bits},     {"attr_hashes", std::move(hashes)},
          {"q", p.q},                     {"xor_fold", p.xor_fold}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  read_opt(j, "n_per_source", s.n_per_source);
  read_opt(j, "overlap", s.overlap);
  read_opt(j, "seed", s.seed);
  read_opt(j, "household_rate", s.household_rate);
  if (auto it = j.find("error_class"); it != j.end()) {
    auto e = error_class_from_name(it->get<std::string>());
    if (!e) throw std::invalid_argument("unknown error class: " + it->get<std::string>());
    s.error_class = *e;
  }
  return s;
}

nlohmann::json to_json(const DatasetSpec& s) {
  return {{"n_per_source", s.n_per_source},
          {"overlap", s.overlap},
          {"error_class", error_class_name(s.error_class)},
          {"seed", s.seed},
          {"household_rate", s.household_rate}};
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  if (auto it = j.find("dataset"); it != j.end()) {
    c.dataset_a = resolve(base_dir, it->at("a").get<std::string>());
    c.dataset_b = resolve(base_dir, it->at("b").get<std::string>());
    if (it->contains("truth")) c.truth = resolve(base_dir, it->at("truth").get<std::string>());
  }
  if (auto it = j.find("generate"); it != j.end()) c.generate = dataset_spec_from_json(*it);
  if (!c.dataset_a && !c.generate) {
    throw std::invalid_argument("run config needs either \"dataset\" or \"generate\"");
  }
  if (auto it = j.find("encoding"); it != j.end()) c.encoding = encoding_params_from_json(*it);
  if (auto it = j.find("protocol"); it != j.end()) c.protocol = protocol_config_from_json(*it);
  read_opt(j, "seed", c.seed);
  if (auto it = j.find("policy_file"); it != j.end()) c.policy_file = resolve(base_dir, it->get<std::string>());
  read_opt(j, "capped_r_share", c.capped_r_share);
  read_opt(j, "capped_a_share", c.capped_a_share);
  if (auto it = j.find("threshold_offset"); it != j.end()) c.threshold_offset = it->get<double>();
  read_opt(j, "dump_candidates", c.dump_candidates);
  if (c.capped_r_share < 0.0 || c.capped_a_share < 0.0 || c.capped_r_share + c.capped_a_share > 1.0) {
    throw std::invalid_argument("capped shares must be non-negative and sum to at most 1");
  }
  c.encoding.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  if (c.dataset_a) {
    j["dataset"] = {{"a", c.dataset_a->string()}, {"b", c.dataset_b->string()}};
    if (c.truth) j["dataset"]["truth"] = c.truth->string();
  }
  if (c.generate) j["generate"] = to_json(*c.generate);
  j["encoding"] = to_json(c.encoding);
  j["protocol"] = to_json(c.protocol);
  j["seed"] = c.seed;
  if (c.policy_file) j["policy_file"] = c.policy_file->string();
  j["capped_r_share"] = c.capped_r_share;
  j["capped_a_share"] = c.capped_a_share;
  if (c.threshold_offset) j["threshold_offset"] = *c.threshold_offset;
  j["dump_candidates"] = c.dump_candidates;
  return j;
}

LinkageDataset load_dataset(const RunConfig& config) {
  if (config.generate) return generate_dataset(*config.generate);
  LinkageDataset d;
  d.a = read_records_csv(*config.dataset_a, Source::A);
  d.b = read_records_csv(*config.dataset_b, Source::B);
  if (config.truth) d.truth = read_truth_csv(*config.truth);
  return d;
}

PerSource<DisclosurePolicy> synthetic_policies(const LinkageDataset& data, double capped_r,
                                               double capped_a, std::uint64_t seed) {
  PerSource<DisclosurePolicy> out;
  for (Source s : kAllSources) {
    const auto& recs = s == Source::A ? data.a : data.b;
    std::vector<std::size_t> order(recs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(seed, kPolicyStream, idx(s)));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(recs.size());
    const auto n_r = static_cast<std::size_t>(std::llround(capped_r * n));
    const auto n_a = static_cast<std::size_t>(std::llround(capped_a * n));
    for (std::size_t k = 0; k < n_r + n_a && k < order.size(); ++k) {
      out[idx(s)].set(recs[order[k]].id, RecordPolicy{k < n_r ? Layer::R : Layer::A, {}});
    }
  }
  return out;
}

PerSource<DisclosurePolicy> load_policies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file " + path.string());
  const auto j = nlohmann::json::parse(in);
  PerSource<DisclosurePolicy> out;
  for (Source s : kAllSources) {
    if (auto it = j.find(std::string(source_name(s))); it != j.end()) {
      out[idx(s)] = DisclosurePolicy::from_json(*it);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

LinkageSetup prepare_setup(const LinkageDataset& data, const EncodingParams& params) {
  LinkageSetup s;
  s.data = &data;
  s.encoding = params;
  s.enc_a = kernels::encode_records(data.a, params);
  s.enc_b = kernels::encode_records(data.b, params);
  s.candidates = block_candidates(s.enc_a, s.enc_b);
  kernels::score_pairs(s.candidates, s.enc_a, s.enc_b);
  s.truth = TruthIndex(data.truth, data.a, data.b);
  s.topt = find_topt(s.candidates, s.truth);
  return s;
}

ThresholdScore abf_baseline(const LinkageSetup& setup) {
  PerAttr<std::vector<std::optional<BitVector>>> abf_a, abf_b;
  for (Attr attr : kAllAttrs) {
    for (const auto& r : setup.data->a) abf_a[idx(attr)].push_back(encode_abf(r, attr, setup.encoding));
    for (const auto& r : setup.data->b) abf_b[idx(attr)].push_back(encode_abf(r, attr, setup.encoding));
  }
  std::vector<double> scores(setup.candidates.size(), 0.0);
  for (std::size_t i = 0; i < setup.candidates.size(); ++i) {
    const auto& p = setup.candidates[i];
    AttrSims sims;
    bool any = false;
    for (Attr attr : kAllAttrs) {
      const auto& va = abf_a[idx(attr)][p.idx_a];
      const auto& vb = abf_b[idx(attr)][p.idx_b];
      if (va && vb) {
        sims[idx(attr)] = dice(*va, *vb);
        any = true;
      }
    }
    if (any) scores[i] = baseline_weighted_mean(sims);
  }
  const auto sweep = threshold_sweep(setup.candidates, scores, setup.truth, 0.0, 1.0, 0.005);
  ThresholdScore best = sweep.front();
  for (const auto& s : sweep) {
    if (s.quality.f1 > best.quality.f1) best = s;
  }
  return best;
}

LinkOutcome run_link(const LinkageSetup& setup, const ProtocolConfig& config, std::uint64_t seed,
                     const PerSource<DisclosurePolicy>& policies, ClericalOracle* oracle) {
  const double respond = std::sqrt(config.response_rate);
  DataOwner owner_a(Source::A, setup.data->a, setup.encoding, policies[idx(Source::A)], respond,
                    derive_seed(seed, kOwnerStream, 0));
  DataOwner owner_b(Source::B, setup.data->b, setup.encoding, policies[idx(Source::B)], respond,
                    derive_seed(seed, kOwnerStream, 1));
  SimulatedOracle simulated(
      [&setup](PairId id) {
        const auto& p = setup.candidates.at(id);
        return setup.truth.is_match(p.idx_a, p.idx_b);
      },
      config.oracle_err, derive_seed(seed, kOracleStream));
  LinkageProtocol protocol(config, owner_a, owner_b, oracle ? *oracle : simulated, seed,
                           make_evaluator(setup.truth));
  protocol.run_initial_linkage(setup.enc_a, setup.enc_b);
  LinkOutcome out;
  out.result = protocol.run();
  out.initial_threshold = config.initial_threshold;
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "iteration,layer,reviews_used,precision,recall,f1,threshold\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << layer_name(r.layer) << ',' << r.reviews_used << ','
        << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f1) << ',' << fmt(r.threshold)
        << '\n';
  }
}

void write_ledger_jsonl(std::ostream& out, std::span<const DisclosureLedgerEntry> ledger) {
  for (const auto& e : ledger) out << to_json(e).dump() << '\n';
}

void write_candidates_jsonl(std::ostream& out, std::span<const CandidatePair> pairs,
                            const LinkageDataset& data) {
  for (const auto& p : pairs) {
    nlohmann::json j{{"pair_id", p.pair_id},
                     {"id_a", data.a.at(p.idx_a).id},
                     {"id_b", data.b.at(p.idx_b).id},
                     {"record_sim", p.record_sim.value_or(0.0)},
                     {"g", label_name(p.prediction.g)},
                     {"p", p.prediction.p},
                     {"layer", layer_name(p.label_layer)}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Privacy report

PrivacyReport privacy_report(const LinkageSetup& setup, const RunResult& run) {
  PrivacyReport r;
  std::vector<PlainRecord> both(setup.data->a);
  both.insert(both.end(), setup.data->b.begin(), setup.data->b.end());
  for (Attr a : kAllAttrs) {
    const auto abf = kernels::encode_abf_column(both, a, setup.encoding);
    if (!abf.empty()) r.abf[idx(a)] = encoding_privacy(abf);
  }
  r.kabf = run.privacy.kabf;
  std::vector<BitVector> clk;
  for (const auto* enc : {&setup.enc_a, &setup.enc_b}) {
    for (const auto& e : *enc) clk.push_back(e.record_level);
  }
  if (!clk.empty()) r.clk = encoding_privacy(clk);
  r.kapr = run.privacy.kapr;
  r.clerical_records = run.privacy.clerical_records;
  r.availability = run.privacy.availability;
  return r;
}

nlohmann::json to_json(const PrivacyReport& r) {
  auto enc = [](const EncodingPrivacy& e) {
    return nlohmann::json{{"n", e.n_encodings}, {"gini", e.gini}, {"jsd", e.jsd}};
  };
  nlohmann::json attrs = nlohmann::json::object();
  for (Attr a : kAllAttrs) {
    const auto k = idx(a);
    attrs[std::string(attr_name(a))] = {
        {"abf", enc(r.abf[k])},
        {"kabf", enc(r.kabf[k])},
        {"availability", r.availability[k] ? nlohmann::json(*r.availability[k]) : nlohmann::json(nullptr)}};
  }
  return {{"attributes", std::move(attrs)},
          {"clk", enc(r.clk)},
          {"kapr", r.kapr},
          {"clerical_records", r.clerical_records}};
}

void write_privacy_table_csv(std::ostream& out, const PrivacyReport& r) {
  out << "attribute,abf_n,abf_gini,abf_jsd,kabf_n,kabf_gini,kabf_jsd\n";
  for (Attr a : kAllAttrs) {
    const auto k = idx(a);
    out << attr_name(a) << ',' << r.abf[k].n_encodings << ',' << fmt(r.abf[k].gini) << ','
        << fmt(r.abf[k].jsd) << ',' << r.kabf[k].n_encodings << ',' << fmt(r.kabf[k].gini) << ','
        << fmt(r.kabf[k].jsd) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Matrix

MatrixConfig matrix_config_from_json(const nlohmann::json& j) {
  MatrixConfig c;
  if (auto it = j.find("datasets"); it != j.end()) {
    for (const auto& d : *it) c.datasets.push_back(dataset_spec_from_json(d));
  }
  if (c.datasets.empty()) c.datasets.push_back(DatasetSpec{});
  read_opt(j, "budgets", c.budgets);
  read_opt(j, "errors", c.errors);
  read_opt(j, "offset_span", c.offset_span);
  read_opt(j, "offset_step", c.offset_step);
  read_opt(j, "repeats", c.repeats);
  read_opt(j, "seed", c.seed);
  if (auto it = j.find("encoding"); it != j.end()) c.encoding = encoding_params_from_json(*it);
  if (auto it = j.find("protocol"); it != j.end()) c.protocol = protocol_config_from_json(*it);
  if (c.budgets.empty() || c.errors.empty() || c.repeats == 0) {
    throw std::invalid_argument("matrix needs at least one budget, error rate and repeat");
  }
  if (!(c.offset_step > 0.0) || c.offset_span < 0.0) throw std::invalid_argument("bad offset range");
  c.encoding.validate();
  return c;
}

std::vector<double> threshold_offsets(double span, double step) {
  const auto n = static_cast<long long>(std::llround(2.0 * span / step));
  std::vector<double> out;
  for (long long k = 0; k <= n; ++k) {
    const double v = -span + static_cast<double>(k) * step;
    out.push_back(std::round(v * 1e9) / 1e9);
  }
  return out;
}

std::string dataset_name(const DatasetSpec& spec) {
  std::string size;
  if (std::abs(spec.overlap - 0.1) < 1e-9) {
    size = "S";
  } else if (std::abs(spec.overlap - 0.2) < 1e-9) {
    size = "M";
  } else if (std::abs(spec.overlap - 0.3) < 1e-9) {
    size = "L";
  } else {
    size = "o" + fmt(spec.overlap);
  }
  return std::string(error_class_name(spec.error_class)) + size + "-" + std::to_string(spec.n_per_source);
}

MatrixReport run_experiment_matrix(const MatrixConfig& config) {
  MatrixReport report;
  const auto offsets = threshold_offsets(config.offset_span, config.offset_step);
  for (std::size_t d = 0; d < config.datasets.size(); ++d) {
    const auto data = generate_dataset(config.datasets[d]);
    const auto setup = prepare_setup(data, config.encoding);
    report.dataset_names.push_back(dataset_name(config.datasets[d]));
    BaselineScores base;
    base.t_opt = setup.topt.threshold;
    base.at_topt = setup.topt.quality;
    const auto abf = abf_baseline(setup);
    base.abf_threshold = abf.threshold;
    base.abf = abf.quality;
    report.baselines.push_back(base);

    struct Cell {
      std::size_t budget;
      double err;
      double offset;
      std::size_t repeat;
    };
    std::vector<Cell> cells;
    for (auto b : config.budgets) {
      for (auto e : config.errors) {
        for (auto o : offsets) {
          for (std::size_t r = 0; r < config.repeats; ++r) cells.push_back({b, e, o, r});
        }
      }
    }
    std::vector<std::optional<MatrixRun>> runs(cells.size());
    std::string failure;
    const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const Cell& cell = cells[static_cast<std::size_t>(i)];
      try {
        ProtocolConfig pc = config.protocol;
        pc.clerical_budget = cell.budget;
        pc.oracle_err = cell.err;
        pc.initial_threshold = setup.topt.threshold + cell.offset;
        const std::uint64_t seed = derive_seed(config.seed, d, cell.repeat);
        auto outcome = run_link(setup, pc, seed);
        MatrixRun run;
        run.dataset = d;
        run.budget = cell.budget;
        run.err = cell.err;
        run.offset = cell.offset;
        run.repeat = cell.repeat;
        run.seed = seed;
        run.metrics = std::move(outcome.result.metrics);
        run.clerical_labels = outcome.result.clerical_labels;
        run.layer_a_reviews = outcome.result.layer_a_reviews;
        runs[static_cast<std::size_t>(i)] = std::move(run);
      } catch (const std::exception& e) {
#pragma omp critical(pprl_matrix_failure)
        if (failure.empty()) failure = e.what();
      }
    }
    for (auto& r : runs) {
      if (r) report.runs.push_back(std::move(*r));
    }
    if (!failure.empty()) {
      report.partial = true;
      report.failure = failure;
      break;
    }
  }
  report.summary = summarize(report.runs);
  return report;
}

std::vector<CellSummaryRow> summarize(std::span<const MatrixRun> runs) {
  struct Acc {
    QualityCounts counts;
    std::size_t runs = 0;
    double min_f1 = 1.0;
    double max_f1 = 0.0;
    double threshold_sum = 0.0;
  };
  std::map<std::tuple<std::size_t, std::size_t, double, std::size_t>, Acc> groups;
  for (const auto& run : runs) {
    for (const auto& row : run.metrics) {
      auto& acc = groups[{run.dataset, run.budget, run.err, row.iteration}];
      acc.counts.tp += row.tp;
      acc.counts.fp += row.fp;
      acc.counts.fn += row.fn;
      ++acc.runs;
      acc.min_f1 = std::min(acc.min_f1, row.f1);
      acc.max_f1 = std::max(acc.max_f1, row.f1);
      acc.threshold_sum += row.threshold;
    }
  }
  std::vector<CellSummaryRow> out;
  for (const auto& [key, acc] : groups) {
    CellSummaryRow row;
    std::tie(row.dataset, row.budget, row.err, row.iteration) = key;
    row.runs = acc.runs;
    row.micro_f1 = quality_from_counts(acc.counts).f1;
    row.min_f1 = acc.min_f1;
    row.max_f1 = acc.max_f1;
    row.mean_threshold = acc.threshold_sum / static_cast<double>(acc.runs);
    out.push_back(row);
  }
  return out;
}

void write_matrix_runs_csv(std::ostream& out, const MatrixReport& report) {
  out << "dataset,budget,err,offset,repeat,seed,iteration,layer,reviews_used,clerical_used,precision,"
         "recall,f1,threshold,tp,fp,fn\n";
  for (const auto& run : report.runs) {
    for (const auto& r : run.metrics) {
      out << report.dataset_names[run.dataset] << ',' << run.budget << ',' << fmt(run.err) << ','
          << fmt(run.offset) << ',' << run.repeat << ',' << run.seed << ',' << r.iteration << ','
          << layer_name(r.layer) << ',' << r.reviews_used << ',' << r.clerical_used << ','
          << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f1) << ',' << fmt(r.threshold)
          << ',' << r.tp << ',' << r.fp << ',' << r.fn << '\n';
    }
  }
}

void write_matrix_summary_csv(std::ostream& out, const MatrixReport& report) {
  out << "dataset,budget,err,iteration,runs,micro_f1,min_f1,max_f1,mean_threshold\n";
  for (const auto& s : report.summary) {
    out << report.dataset_names[s.dataset] << ',' << s.budget << ',' << fmt(s.err) << ','
        << s.iteration << ',' << s.runs << ',' << fmt(s.micro_f1) << ',' << fmt(s.min_f1) << ','
        << fmt(s.max_f1) << ',' << fmt(s.mean_threshold) << '\n';
  }
  if (report.partial) out << "# partial: " << report.failure << '\n';
}

void write_baselines_csv(std::ostream& out, const MatrixReport& report) {
  out << "dataset,t_opt,f1_at_topt,abf_threshold,abf_f1\n";
  for (std::size_t d = 0; d < report.baselines.size(); ++d) {
    const auto& b = report.baselines[d];
    out << report.dataset_names[d] << ',' << fmt(b.t_opt) << ',' << fmt(b.at_topt.f1) << ','
        << fmt(b.abf_threshold) << ',' << fmt(b.abf.f1) << '\n';
  }
}

}  // namespace pprl
