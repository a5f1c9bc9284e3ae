#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"

#include "pprl/dataset.hpp"
#include "pprl/experiment.hpp"
#include "pprl/review_server.hpp"

namespace fs = std::filesystem;
using namespace pprl;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir = ".";
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

fs::path out_dir(const Globals& g) {
  fs::path dir = g.out_dir;
  if (const char* env = std::getenv("PPRL_OUT_DIR"); env && *env && g.out_dir == ".") dir = env;
  fs::create_directories(dir);
  return dir;
}

RunConfig load_config(const Globals& g) {
  if (g.config.empty()) throw CLI::ValidationError("--config", "a run config is required");
  RunConfig c = load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  return c;
}

PerSource<DisclosurePolicy> policies_for(const RunConfig& c, const LinkageDataset& data) {
  if (c.policy_file) return load_policies(*c.policy_file);
  if (c.capped_r_share > 0.0 || c.capped_a_share > 0.0) {
    return synthetic_policies(data, c.capped_r_share, c.capped_a_share, c.seed);
  }
  return {};
}

ProtocolConfig effective_protocol(const RunConfig& c, const LinkageSetup& setup) {
  ProtocolConfig pc = c.protocol;
  if (c.threshold_offset) pc.initial_threshold = setup.topt.threshold + *c.threshold_offset;
  pc.validate();
  return pc;
}

void write_run_outputs(const fs::path& dir, const RunConfig& config, const LinkageSetup& setup,
                       const RunResult& result) {
  {
    auto out = open_out(dir / "metrics.csv");
    write_metrics_csv(out, result.metrics);
  }
  {
    auto out = open_out(dir / "ledger.jsonl");
    write_ledger_jsonl(out, result.ledger);
  }
  const auto report = privacy_report(setup, result);
  open_out(dir / "privacy.json") << to_json(report).dump(2) << '\n';
  {
    auto out = open_out(dir / "privacy_table.csv");
    write_privacy_table_csv(out, report);
  }
  open_out(dir / "model.json") << result.model.dump(2) << '\n';
  open_out(dir / "run_config.json") << to_json(config).dump(2) << '\n';
  if (config.dump_candidates) {
    auto out = open_out(dir / "candidates.jsonl");
    write_candidates_jsonl(out, result.pairs, *setup.data);
  }
}

void print_summary(const RunResult& r, double t_opt) {
  const auto& first = r.metrics.front();
  const auto& last = r.metrics.back();
  std::cout << "t_opt " << t_opt << "  pairs " << r.pairs.size() << "  layer-A reviews "
            << r.layer_a_reviews << "  clerical labels " << r.clerical_labels << '\n'
            << "F1 " << first.f1 << " -> " << last.f1 << "  threshold " << first.threshold << " -> "
            << last.threshold << "  KAPR " << r.privacy.kapr << '\n';
}

int cmd_generate(const Globals& g, DatasetSpec spec, const std::string& error_class) {
  auto ec = error_class_from_name(error_class);
  if (!ec) throw CLI::ValidationError("--errors", "expected E1 or E2");
  spec.error_class = *ec;
  if (g.seed) spec.seed = *g.seed;
  const auto data = generate_dataset(spec);
  const auto dir = out_dir(g);
  write_records_csv(dir / "a.csv", data.a);
  write_records_csv(dir / "b.csv", data.b);
  write_truth_csv(dir / "truth.csv", data.truth);
  std::cout << "wrote " << data.a.size() << " + " << data.b.size() << " records, "
            << data.truth.size() << " true pairs to " << dir.string() << '\n';
  return 0;
}

int cmd_link(const Globals& g) {
  const auto config = load_config(g);
  const auto data = load_dataset(config);
  const auto setup = prepare_setup(data, config.encoding);
  const auto outcome = run_link(setup, effective_protocol(config, setup), config.seed, policies_for(config, data));
  write_run_outputs(out_dir(g), config, setup, outcome.result);
  print_summary(outcome.result, setup.topt.threshold);
  return 0;
}

int cmd_privacy_report(const Globals& g) {
  const auto config = load_config(g);
  const auto data = load_dataset(config);
  const auto setup = prepare_setup(data, config.encoding);
  const auto outcome = run_link(setup, effective_protocol(config, setup), config.seed, policies_for(config, data));
  const auto report = privacy_report(setup, outcome.result);
  const auto dir = out_dir(g);
  open_out(dir / "privacy.json") << to_json(report).dump(2) << '\n';
  {
    auto out = open_out(dir / "privacy_table.csv");
    write_privacy_table_csv(out, report);
  }
  write_privacy_table_csv(std::cout, report);
  std::cout << "KAPR " << report.kapr << " over " << report.clerical_records << " records\n";
  return 0;
}

int cmd_baseline(const Globals& g) {
  const auto config = load_config(g);
  const auto data = load_dataset(config);
  const auto setup = prepare_setup(data, config.encoding);
  const auto abf = abf_baseline(setup);
  MatrixReport report;
  report.dataset_names.push_back(config.generate ? dataset_name(*config.generate) : "input");
  report.baselines.push_back({setup.topt.threshold, setup.topt.quality, abf.threshold, abf.quality});
  auto out = open_out(out_dir(g) / "baselines.csv");
  write_baselines_csv(out, report);
  write_baselines_csv(std::cout, report);
  return 0;
}

int cmd_matrix(const Globals& g) {
  if (g.config.empty()) throw CLI::ValidationError("--config", "a matrix config is required");
  std::ifstream in(g.config);
  if (!in) throw std::runtime_error("cannot open " + g.config);
  MatrixConfig mc = matrix_config_from_json(nlohmann::json::parse(in));
  if (g.seed) mc.seed = *g.seed;
  const auto report = run_experiment_matrix(mc);
  const auto dir = out_dir(g);
  {
    auto out = open_out(dir / "matrix_runs.csv");
    write_matrix_runs_csv(out, report);
  }
  {
    auto out = open_out(dir / "matrix_summary.csv");
    write_matrix_summary_csv(out, report);
  }
  {
    auto out = open_out(dir / "baselines.csv");
    write_baselines_csv(out, report);
  }
  std::cout << report.runs.size() << " runs written to " << dir.string() << '\n';
  if (report.partial) {
    std::cerr << "matrix aborted: " << report.failure << '\n';
    return 2;
  }
  return 0;
}

int cmd_serve(const Globals& g, std::string host, int port, const std::string& assets, bool linger) {
  if (const char* env = std::getenv("PPRL_PORT"); env && *env) port = std::stoi(env);
  const auto config = load_config(g);
  const auto data = load_dataset(config);
  const auto setup = prepare_setup(data, config.encoding);
  const auto pc = effective_protocol(config, setup);

  ReviewSession session("run-" + std::to_string(config.seed), pc.clerical_budget);
  std::optional<fs::path> asset_dir;
  if (!assets.empty()) asset_dir = fs::path(assets);
  ReviewServer server(session, asset_dir);
  const int bound = server.bind(host, port);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "review API on http://" << host << ':' << bound << "/api/session" << std::endl;
  std::thread http([&] { server.listen(); });

  std::optional<LinkOutcome> outcome;
  std::string error;
  std::thread worker([&] {
    try {
      outcome = run_link(setup, pc, config.seed, policies_for(config, data), &session);
    } catch (const std::exception& e) {
      error = e.what();
    }
    session.mark_finished();
  });
  worker.join();
  if (outcome) {
    write_run_outputs(out_dir(g), config, setup, outcome->result);
    print_summary(outcome->result, setup.topt.threshold);
  }
  if (linger && error.empty()) {
    std::cout << "run finished; serving until interrupted" << std::endl;
    http.join();
  } else {
    server.stop();
    http.join();
  }
  if (!error.empty()) {
    std::cerr << "error: " << error << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-layer privacy-preserving record linkage"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed overriding the config / generator seed");
  app.add_option("--config", g.config, "Run or matrix config (JSON)");
  app.add_option("--out-dir", g.out_dir, "Output directory (env PPRL_OUT_DIR)");

  DatasetSpec spec;
  std::string error_class = "E1";
  auto* gen = app.add_subcommand("generate", "Write a synthetic two-source dataset");
  gen->add_option("--n", spec.n_per_source, "Records per source")->check(CLI::PositiveNumber);
  gen->add_option("--overlap", spec.overlap, "Share of A duplicated in B")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--errors", error_class, "E1 or E2");
  gen->add_option("--household-rate", spec.household_rate, "Share of multi-person households");

  auto* link = app.add_subcommand("link", "Run the protocol once");
  auto* matrix = app.add_subcommand("matrix", "Run the experiment matrix");
  auto* privacy = app.add_subcommand("privacy-report", "Run once and report encoding and clerical privacy");
  auto* baseline = app.add_subcommand("baseline-abf", "Optimal-threshold F1 of CLK and the ABF weighted mean");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string assets;
  bool linger = false;
  auto* serve = app.add_subcommand("serve", "Run the protocol with a human reviewer over HTTP");
  serve->add_option("--host", host);
  serve->add_option("--port", port, "Port (env PPRL_PORT)");
  serve->add_option("--assets", assets, "Directory with review UI assets");
  serve->add_flag("--linger", linger, "Keep serving after the run finished");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_generate(g, spec, error_class);
    if (*link) return cmd_link(g);
    if (*matrix) return cmd_matrix(g);
    if (*privacy) return cmd_privacy_report(g);
    if (*baseline) return cmd_baseline(g);
    if (*serve) return cmd_serve(g, host, port, assets, linger);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
