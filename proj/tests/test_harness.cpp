#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "pprl/dataset.hpp"
#include "pprl/evaluation.hpp"
#include "pprl/experiment.hpp"

using namespace pprl;
namespace fs = std::filesystem;
using pprl::test::make_record;
using pprl::test::test_params;

namespace {

std::vector<CandidatePair> scored(std::initializer_list<std::tuple<std::uint32_t, std::uint32_t, double>> rows) {
  std::vector<CandidatePair> out;
  for (const auto& [a, b, s] : rows) {
    CandidatePair p;
    p.pair_id = out.size();
    p.idx_a = a;
    p.idx_b = b;
    p.record_sim = s;
    out.push_back(p);
  }
  return out;
}

std::vector<PlainRecord> ids(Source s, int n) {
  std::vector<PlainRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(make_record((s == Source::A ? "A" : "B") + std::to_string(i), s, {"X"}));
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PPRL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("generator") {
  DatasetSpec spec;
  spec.n_per_source = 5000;
  spec.seed = 7;
  const auto data = generate_dataset(spec);
  CHECK(data.a.size() == 5000);
  CHECK(data.b.size() == 5000);
  CHECK(data.truth.size() == 1000);

  std::map<std::string, const PlainRecord*> a_by_id, b_by_id;
  for (const auto& r : data.a) a_by_id[r.id] = &r;
  for (const auto& r : data.b) b_by_id[r.id] = &r;
  CHECK(a_by_id.size() == 5000);
  CHECK(b_by_id.size() == 5000);
  std::set<std::string> seen_a, seen_b;
  for (const auto& [ia, ib] : data.truth) {
    REQUIRE(a_by_id.contains(ia));
    REQUIRE(b_by_id.contains(ib));
    CHECK(a_by_id[ia]->values != b_by_id[ib]->values);
    CHECK(differing_key_groups(*a_by_id[ia], *b_by_id[ib]) >= 1);
    seen_a.insert(ia);
    seen_b.insert(ib);
  }
  CHECK(seen_a.size() == 1000);
  CHECK(seen_b.size() == 1000);

  const auto again = generate_dataset(spec);
  CHECK(again.truth == data.truth);
  for (std::size_t i = 0; i < data.a.size(); ++i) CHECK(again.a[i].values == data.a[i].values);

  spec.seed = 8;
  CHECK(generate_dataset(spec).truth != data.truth);
}

TEST_CASE("E2 duplicates differ in at least two key groups") {
  DatasetSpec spec;
  spec.n_per_source = 2000;
  spec.error_class = ErrorClass::E2;
  const auto data = generate_dataset(spec);
  std::map<std::string, const PlainRecord*> a_by_id, b_by_id;
  for (const auto& r : data.a) a_by_id[r.id] = &r;
  for (const auto& r : data.b) b_by_id[r.id] = &r;
  CHECK(data.truth.size() == 400);
  for (const auto& [ia, ib] : data.truth) CHECK(differing_key_groups(*a_by_id[ia], *b_by_id[ib]) >= 2);
}

TEST_CASE("key group differences") {
  const auto a = make_record("A", Source::A, {"PAUL", "J", "SMITH", "1976", "DURHAM", "27701", "NC"});
  auto b = a;
  CHECK(differing_key_groups(a, b) == 0);
  b[Attr::YOB] = "1977";
  CHECK(differing_key_groups(a, b) == 0);
  b[Attr::ZIP] = "27705";
  CHECK(differing_key_groups(a, b) == 1);
  b[Attr::CITY] = "CARY";
  CHECK(differing_key_groups(a, b) == 1);
  b[Attr::MN].reset();
  CHECK(differing_key_groups(a, b) == 2);
}

TEST_CASE("generator rejects impossible specs") {
  DatasetSpec spec;
  spec.overlap = 1.5;
  CHECK_THROWS_AS(generate_dataset(spec), std::invalid_argument);
  spec.overlap = 0.2;
  spec.n_per_source = 0;
  CHECK_THROWS_AS(generate_dataset(spec), std::invalid_argument);
}

TEST_CASE("CSV round trip") {
  DatasetSpec spec;
  spec.n_per_source = 200;
  const auto data = generate_dataset(spec);
  const auto dir = fs::temp_directory_path() / "pprl_csv_test";
  fs::create_directories(dir);
  write_records_csv(dir / "a.csv", data.a);
  write_truth_csv(dir / "t.csv", data.truth);
  const auto back = read_records_csv(dir / "a.csv", Source::A);
  REQUIRE(back.size() == data.a.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == data.a[i].id);
    CHECK(back[i].values == data.a[i].values);
  }
  CHECK(read_truth_csv(dir / "t.csv") == data.truth);

  std::istringstream quoted("id,first_name,middle_name,last_name,yob,city,zip,pob\n"
                            "A1,\"o'neil, jr\",,smith,1976,durham,27701,\n");
  const auto recs = parse_records_csv(quoted, Source::A);
  REQUIRE(recs.size() == 1);
  CHECK(*recs[0][Attr::FN] == "O'NEIL, JR");
  CHECK_FALSE(recs[0].has(Attr::MN));
  CHECK_FALSE(recs[0].has(Attr::POB));

  std::istringstream bad("id,name\nA1,x\n");
  CHECK_THROWS(parse_records_csv(bad, Source::A));
  CHECK(split_csv_line("a,\"b,c\",,d") == std::vector<std::string>{"a", "b,c", "", "d"});
  fs::remove_all(dir);
}

TEST_CASE("quality measures") {
  CHECK(quality_from_counts({10, 0, 0}).f1 == 1.0);
  const auto q = quality_from_counts({10, 90, 0});
  CHECK(q.precision == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(q.recall == 1.0);
  CHECK(std::abs(q.f1 - 2.0 * 0.1 / 1.1) <= 1e-12);
  CHECK(quality_from_counts({0, 0, 10}).f1 == 0.0);
  CHECK(quality_from_counts({0, 0, 0}).precision == 0.0);
}

TEST_CASE("counting against ground truth") {
  const auto a = ids(Source::A, 4);
  const auto b = ids(Source::B, 4);
  std::set<TruthPair> truth{{"A0", "B0"}, {"A1", "B1"}, {"A3", "B3"}};
  const TruthIndex index(truth, a, b);
  CHECK(index.total() == 3);
  CHECK(index.is_match(0, 0));
  CHECK_FALSE(index.is_match(0, 1));
  // A3/B3 never became a candidate: a false negative all the same
  auto pairs = scored({{0, 0, 0.9}, {1, 1, 0.7}, {0, 1, 0.95}, {2, 2, 0.3}});
  const bool flags[] = {true, false, true, false};
  const auto c = count_quality(pairs, flags, index);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].prediction.g = flags[i] ? MatchLabel::Match : MatchLabel::NonMatch;
  }
  const auto c2 = count_quality(pairs, index);
  CHECK(c2.tp == c.tp);
  CHECK(c2.fp == c.fp);
  CHECK(c2.fn == c.fn);
  CHECK_THROWS(TruthIndex(std::set<TruthPair>{{"A9", "B0"}}, a, b));
}

TEST_CASE("threshold sweep and t_opt") {
  const auto a = ids(Source::A, 6);
  const auto b = ids(Source::B, 6);
  std::set<TruthPair> truth{{"A0", "B0"}, {"A1", "B1"}, {"A2", "B2"}};
  const TruthIndex index(truth, a, b);
  SUBCASE("separable") {
    const auto pairs = scored({{0, 0, 0.95}, {1, 1, 0.9}, {2, 2, 0.92}, {3, 3, 0.5}, {4, 4, 0.45}, {0, 5, 0.3}});
    const auto best = find_topt(pairs, index);
    CHECK(best.quality.f1 == 1.0);
    CHECK(best.threshold == doctest::Approx(0.505));
  }
  SUBCASE("sweep matches per-threshold recomputation") {
    const auto pairs = scored({{0, 0, 0.95}, {1, 1, 0.6}, {2, 2, 0.81}, {3, 3, 0.85}, {4, 4, 0.7}, {0, 5, 0.9}});
    std::vector<double> scores;
    for (const auto& p : pairs) scores.push_back(*p.record_sim);
    const auto sweep = threshold_sweep(pairs, scores, index);
    CHECK(sweep.size() == 101);
    for (const auto& row : sweep) {
      std::size_t tp = 0, fp = 0;
      for (const auto& p : pairs) {
        if (*p.record_sim < row.threshold) continue;
        (index.is_match(p.idx_a, p.idx_b) ? tp : fp) += 1;
      }
      const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
      const double rec = static_cast<double>(tp) / 3.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      CHECK(std::abs(row.quality.f1 - f1) <= 1e-12);
    }
    const auto best = find_topt(pairs, index);
    for (const auto& row : sweep) {
      CHECK(row.quality.f1 <= best.quality.f1 + 1e-12);
      if (row.threshold < best.threshold - 1e-12) CHECK(row.quality.f1 < best.quality.f1);
    }
  }
}

TEST_CASE("initial linkage is neither trivial nor hopeless") {
  DatasetSpec spec;
  spec.n_per_source = 5000;
  const auto data = generate_dataset(spec);
  const auto setup = prepare_setup(data, test_params());
  CHECK(setup.topt.quality.f1 > 0.6);
  CHECK(setup.topt.quality.f1 < 0.98);
  const auto abf = abf_baseline(setup);
  CHECK(abf.quality.f1 > 0.0);
  CHECK(abf.quality.f1 <= 1.0);
}

TEST_CASE("run config parsing") {
  const auto j = nlohmann::json::parse(R"({
    "generate": {"n_per_source": 300, "error_class": "E2", "seed": 4},
    "encoding": {"owner_key_hex": "00ff10"},
    "protocol": {"clerical_budget": 30, "selection": "no_equal"},
    "seed": 12, "threshold_offset": -0.02, "capped_r_share": 0.1
  })");
  const auto c = run_config_from_json(j);
  REQUIRE(c.generate.has_value());
  CHECK(c.generate->error_class == ErrorClass::E2);
  CHECK(c.encoding.owner_key == Bytes{0x00, 0xff, 0x10});
  CHECK(c.protocol.clerical_budget == 30);
  CHECK(c.protocol.selection.mode == SelectionMode::NoEqual);
  CHECK(c.seed == 12);
  CHECK(*c.threshold_offset == -0.02);
  CHECK(to_json(c).dump().find("00ff10") == std::string::npos);

  CHECK_THROWS(run_config_from_json(nlohmann::json{{"seed", 1}}));
  CHECK_THROWS(run_config_from_json(nlohmann::json::parse(
      R"({"generate": {}, "encoding": {"owner_key": "k"}, "capped_r_share": 0.8, "capped_a_share": 0.3})")));
}

TEST_CASE("synthetic policies") {
  DatasetSpec spec;
  spec.n_per_source = 1000;
  const auto data = generate_dataset(spec);
  const auto pol = synthetic_policies(data, 0.1, 0.05, 3);
  for (Source s : kAllSources) {
    std::size_t r = 0, a = 0;
    for (const auto& [id, rp] : pol[idx(s)].records()) {
      r += rp.max_layer == Layer::R;
      a += rp.max_layer == Layer::A;
    }
    CHECK(r == 100);
    CHECK(a == 50);
  }
  CHECK(synthetic_policies(data, 0.1, 0.05, 3)[0].to_json() == pol[0].to_json());
}

TEST_CASE("experiment matrix") {
  CHECK(threshold_offsets(0.05, 0.01).size() == 11);
  CHECK(threshold_offsets(0.05, 0.01).front() == -0.05);
  CHECK(threshold_offsets(0.05, 0.01)[5] == 0.0);

  MatrixConfig mc;
  DatasetSpec d;
  d.n_per_source = 400;
  mc.datasets = {d};
  mc.budgets = {20};
  mc.errors = {0.1};
  mc.offset_span = 0.01;
  mc.offset_step = 0.01;
  mc.repeats = 3;
  mc.encoding = test_params();
  mc.protocol.warmup_batch_size = 20;
  mc.protocol.post_warmup_batch_size = 50;
  const auto report = run_experiment_matrix(mc);
  CHECK_FALSE(report.partial);
  CHECK(report.runs.size() == 9);
  CHECK(report.dataset_names == std::vector<std::string>{"E1M-400"});

  std::set<std::uint64_t> seeds;
  for (const auto& r : report.runs) seeds.insert(r.seed);
  CHECK(seeds.size() == 3);

  // summary equals recomputation from the raw rows
  for (const auto& row : report.summary) {
    QualityCounts c;
    std::size_t n = 0;
    double lo = 1.0, hi = 0.0;
    for (const auto& r : report.runs) {
      for (const auto& m : r.metrics) {
        if (m.iteration != row.iteration) continue;
        c.tp += m.tp;
        c.fp += m.fp;
        c.fn += m.fn;
        lo = std::min(lo, m.f1);
        hi = std::max(hi, m.f1);
        ++n;
      }
    }
    CHECK(row.runs == n);
    CHECK(row.runs == 9);
    CHECK(std::abs(row.micro_f1 - quality_from_counts(c).f1) <= 1e-12);
    CHECK(row.min_f1 == lo);
    CHECK(row.max_f1 == hi);
  }
  std::ostringstream runs_csv, sum_csv, base_csv;
  write_matrix_runs_csv(runs_csv, report);
  write_matrix_summary_csv(sum_csv, report);
  write_baselines_csv(base_csv, report);
  CHECK(runs_csv.str().rfind("dataset,budget,err,offset", 0) == 0);
  const std::string summary = sum_csv.str();
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 10);
  CHECK(base_csv.str().find("E1M-400") != std::string::npos);
}

TEST_CASE("command line") {
  const auto dir = fs::temp_directory_path() / "pprl_cli_test";
  fs::remove_all(dir);
  CHECK(run_cli("--bogus-flag") != 0);
  CHECK(run_cli("") != 0);
  CHECK(run_cli("generate --errors E7") != 0);
  CHECK(run_cli("link") != 0);

  CHECK(run_cli("--out-dir " + dir.string() + " --seed 7 generate --n 300 --overlap 0.2 --errors E1") == 0);
  CHECK(fs::exists(dir / "a.csv"));
  CHECK(fs::exists(dir / "b.csv"));
  CHECK(fs::exists(dir / "truth.csv"));
  CHECK(read_truth_csv(dir / "truth.csv").size() == 60);

  std::ofstream(dir / "run.json") << R"({
    "dataset": {"a": "a.csv", "b": "b.csv", "truth": "truth.csv"},
    "encoding": {"owner_key": "cli-test"},
    "protocol": {"clerical_budget": 20, "warmup_batch_size": 20, "post_warmup_batch_size": 40},
    "dump_candidates": true,
    "seed": 3
  })";
  const auto out = dir / "out";
  CHECK(run_cli("--config " + (dir / "run.json").string() + " --out-dir " + out.string() + " link") == 0);
  for (const char* f : {"metrics.csv", "ledger.jsonl", "privacy.json", "privacy_table.csv", "model.json",
                        "candidates.jsonl", "run_config.json"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  CHECK(slurp(out / "metrics.csv").rfind("iteration,layer,reviews_used,precision,recall,f1,threshold\n", 0) == 0);
  CHECK(slurp(out / "run_config.json").find("cli-test") == std::string::npos);

  const auto env_out = dir / "env";
  const std::string env = "PPRL_OUT_DIR=" + env_out.string() + " ";
  const std::string cmd = env + PPRL_CLI_PATH + " --config " + (dir / "run.json").string() +
                          " baseline-abf > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(env_out / "baselines.csv"));
  fs::remove_all(dir);
}
