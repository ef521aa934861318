// fedkd: run hierarchical federated distillation experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedkd/config.hpp"
#include "fedkd/error.hpp"
#include "fedkd/orchestrator.hpp"
#include "fedkd/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<double> alpha;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::string> subsample;
};

void add_common(CLI::App* cmd, Overrides& o, bool scenario_flags) {
  cmd->add_option("--config", o.config_path, "JSON config file; defaults apply when omitted");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--rounds", o.rounds, "Federated rounds");
  if (scenario_flags) {
    cmd->add_option("--alpha", o.alpha, "Distillation weight in [0, 1]");
    cmd->add_option("--mode", o.mode, "Topology")->check(CLI::IsMember({"hier", "central"}));
  }
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--subsample", o.subsample, "Cap on CSV rows (stratified), or 'none'");
}

// Overrides go through the same validation as the file itself.
fedkd::RunConfig resolve(const Overrides& o) {
  fedkd::RunConfig base = o.config_path.empty() ? fedkd::parse_config("") : fedkd::load_config(o.config_path);
  json j = fedkd::config_to_json(base);
  const bool topology_changed = o.mode.has_value();
  if (o.seed) j["seed"] = *o.seed;
  if (o.rounds) j["rounds"] = *o.rounds;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.mode) j["mode"] = *o.mode;
  if (o.out) j["output"]["dir"] = *o.out;
  if (o.subsample) {
    if (*o.subsample == "none") {
      j["data"]["subsample"] = "none";
    } else {
      try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(*o.subsample, &used);
        if (used != o.subsample->size()) throw std::invalid_argument("trailing");
        j["data"]["subsample"] = n;
      } catch (const std::exception&) {
        throw fedkd::ConfigError("--subsample: expected a positive integer or 'none'");
      }
    }
  }
  if (topology_changed && j["mode"] == "central") j.erase("cluster_assignment");
  return fedkd::parse_config(j.dump());
}

void log_round(const fedkd::ExperimentConfig& cfg, const fedkd::RoundReport& r) {
  std::fprintf(stderr, "[%s] round %u/%zu  loss %.4f", fedkd::scenario_label(cfg.topology.mode, cfg.distill.alpha).c_str(),
               r.round, cfg.rounds, r.mean_train_loss);
  if (r.metrics) std::fprintf(stderr, "  acc %.2f%%", 100.0 * r.metrics->accuracy);
  std::fprintf(stderr, "  C->S %.3f ms  cloud bytes %zu\n", 1e3 * r.comm.c_to_s_avg, r.comm.cloud_bytes_up);
}

int cmd_run(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto data = fedkd::load_data(cfg);
  const auto report = fedkd::run_experiment(
      cfg.experiment, data, [&](const fedkd::RoundReport& r) { log_round(cfg.experiment, r); });
  const auto files = fedkd::write_report_files(cfg.out_dir, report, cfg);
  if (cfg.wants("text")) std::cout << fedkd::render_text(report);
  for (const auto& f : files) std::cerr << "wrote " << f.string() << "\n";
  return kOk;
}

int cmd_matrix(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto data = fedkd::load_data(cfg);
  const auto reports = fedkd::run_scenario_matrix(cfg.experiment, data, log_round);
  fs::create_directories(cfg.out_dir);
  json all = json::array();
  for (const auto& r : reports) {
    fedkd::write_report_files(cfg.out_dir / fedkd::scenario_slug(r), r, cfg);
    all.push_back(fedkd::report_to_json(r, cfg));
  }
  const std::string comparison = fedkd::comparison_table(reports);
  const std::string kd = fedkd::kd_impact_table(reports);
  fedkd::write_text_file(cfg.out_dir / "comparison.txt", comparison);
  fedkd::write_text_file(cfg.out_dir / "kd_impact.txt", kd);
  if (cfg.wants("json")) fedkd::write_text_file(cfg.out_dir / "matrix.json", all.dump(2) + "\n");
  std::cout << "Transmission and aggregation by scenario\n" << comparison << "\nImpact of KD\n" << kd;
  return kOk;
}

int cmd_prepare(const Overrides& o) {
  const auto cfg = resolve(o);
  if (cfg.source != fedkd::DataSource::Csv) throw fedkd::ConfigError("prepare-data needs a data.csv source");
  const auto [train, test] = fedkd::load_csv_split(cfg);
  fs::create_directories(cfg.out_dir);
  fedkd::write_dataset_cache(fedkd::cache_train_path(cfg.out_dir), train);
  fedkd::write_dataset_cache(fedkd::cache_test_path(cfg.out_dir), test);
  json features = json::array();
  for (const auto& f : train.stats.features) {
    features.push_back({{"name", f.name}, {"categorical", f.categorical}, {"padding", f.padding},
                        {"constant", f.constant}, {"categories", f.categories}, {"mean", f.mean},
                        {"stddev", f.stddev}, {"min", f.min}, {"max", f.max}});
  }
  const json stats = {{"train_rows", train.rows()}, {"test_rows", test.rows()},
                      {"input_length", train.input_length}, {"features", features},
                      {"warnings", train.warnings}};
  fedkd::write_text_file(cfg.out_dir / "stats.json", stats.dump(2) + "\n");
  std::cout << "cached " << train.rows() << " train and " << test.rows() << " test rows in "
            << cfg.out_dir.string() << "\n";
  return kOk;
}

int cmd_synth(const Overrides& o) {
  const auto cfg = resolve(o);
  fedkd::SynthSpec spec = cfg.synth;
  spec.seed = cfg.synth_seed.value_or(cfg.experiment.seed);
  const auto full = fedkd::synth_generate(spec);
  const auto [train_idx, test_idx] = fedkd::stratified_split(full.labels, cfg.test_fraction, cfg.experiment.seed);
  fs::create_directories(cfg.out_dir);
  fedkd::write_dataset_cache(fedkd::cache_train_path(cfg.out_dir), full.select(train_idx));
  fedkd::write_dataset_cache(fedkd::cache_test_path(cfg.out_dir), full.select(test_idx));
  std::cout << "generated " << full.rows() << " rows (" << train_idx.size() << " train, " << test_idx.size()
            << " test) in " << cfg.out_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated learning with knowledge distillation"};
  app.require_subcommand(1);
  Overrides run_o, matrix_o, prep_o, synth_o;
  auto* run = app.add_subcommand("run", "Run one experiment and write its report");
  add_common(run, run_o, true);
  auto* matrix = app.add_subcommand("matrix", "Run {centralised, hierarchical} x {alpha 0, 0.5}");
  add_common(matrix, matrix_o, false);
  auto* prep = app.add_subcommand("prepare-data", "Ingest and preprocess a CSV into a cached dataset");
  add_common(prep, prep_o, false);
  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset into a cache directory");
  add_common(synth, synth_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*matrix) return cmd_matrix(matrix_o);
    if (*prep) return cmd_prepare(prep_o);
    if (*synth) return cmd_synth(synth_o);
  } catch (const fedkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const fedkd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fedkd::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
