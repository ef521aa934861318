#pragma once

// Run configuration: experiment settings, data source and output options,
// loaded from a JSON file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedkd/data.hpp"
#include "fedkd/orchestrator.hpp"

namespace fedkd {

enum class DataSource { Synth, Csv, Cache };

std::string to_string(DataSource source);

struct CsvSource {
  std::filesystem::path path;
  CsvSchema schema;
  std::vector<std::string> drop_columns = default_drop_columns();
};

inline constexpr std::size_t kDefaultSubsample = 200000;

struct RunConfig {
  ExperimentConfig experiment;
  DataSource source = DataSource::Synth;
  SynthSpec synth;
  std::optional<std::uint64_t> synth_seed;  // defaults to experiment.seed
  CsvSource csv;
  std::filesystem::path cache_dir;
  double test_fraction = 0.2;
  std::optional<std::size_t> subsample = kDefaultSubsample;  // CSV rows, stratified
  std::filesystem::path out_dir = "out";
  std::vector<std::string> formats = {"json", "text", "csv"};

  bool wants(std::string_view format) const;
  std::vector<std::string> problems() const;
};

// Parses and validates; an empty or whitespace-only document is {}. Throws
// ConfigError listing every problem (unknown keys included).
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Round-trips through parse_config.
nlohmann::json config_to_json(const RunConfig& config);

// Synthetic generation, CSV ingest + preprocessing, or the FKDD cache.
// Throws DataError for unreadable or unusable input.
PreparedData load_data(const RunConfig& config);

// CSV ingest and preprocessing into {train, test}: stratified subsample,
// stratified split, pipeline fitted on train and applied to test.
std::pair<LabeledDataset, LabeledDataset> load_csv_split(const RunConfig& config);

std::filesystem::path cache_train_path(const std::filesystem::path& dir);
std::filesystem::path cache_test_path(const std::filesystem::path& dir);

}  // namespace fedkd
