#pragma once

// Dataset ingestion, preprocessing, sharding and the synthetic generator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedkd/nn.hpp"

namespace fedkd {

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Normal", "DDoS", "MITM", "Injection", "Malware", "Information Gathering"};

// Maps a family name or an Edge-IIoTset Attack_type value to a class index.
std::optional<std::uint8_t> class_from_label(std::string_view label);

enum class ColumnType { Numeric, Categorical };

struct CsvSchema {
  std::string label_column = "Attack_type";
  // Forced categorical; other columns are numeric iff every present cell parses.
  std::vector<std::string> categorical_columns;
  double max_bad_row_fraction = 0.01;
};

inline constexpr std::uint32_t kMissingCategory = 0xFFFFFFFFu;

struct RawColumn {
  std::string name;
  ColumnType type = ColumnType::Numeric;
  std::vector<double> numeric;           // NaN marks a missing cell
  std::vector<std::uint32_t> codes;      // index into `categories`, or kMissingCategory
  std::vector<std::string> categories;   // first-seen order
};

struct RawDataset {
  std::vector<RawColumn> columns;  // label column excluded
  std::vector<std::uint8_t> labels;
  std::map<std::string, std::size_t> label_census;  // raw label string -> rows
  std::size_t bad_rows = 0;
  std::vector<std::string> warnings;

  std::size_t rows() const noexcept { return labels.size(); }
  RawDataset select(std::span<const std::size_t> rows) const;
};

// Two passes: infer column types, then fill typed columns. Rows with the wrong
// cell count or an unknown label are skipped; more than max_bad_row_fraction
// of them is a DataError, as is a missing label column.
RawDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

// Splits one CSV record, honouring double quotes.
std::vector<std::string> split_csv_line(std::string_view line);

// Flow-identity and label-leaking columns of Edge-IIoTset.
std::vector<std::string> default_drop_columns();

struct FeaturePolicy {
  std::vector<std::string> drop_columns = default_drop_columns();
  std::size_t input_length = 30;
};

struct FeatureStats {
  std::string name;
  bool categorical = false;
  bool padding = false;
  bool constant = false;
  std::vector<std::string> categories;  // sorted; code = position
  double mean = 0.0;                    // standardization (numeric only)
  double stddev = 1.0;
  double min = 0.0;                     // min-max of the standardized/encoded value
  double max = 1.0;
};

struct NormalizationStats {
  std::vector<FeatureStats> features;
};

struct LabeledDataset {
  std::size_t input_length = 0;
  std::vector<float> features;  // row-major [rows, input_length]
  std::vector<std::uint8_t> labels;
  std::vector<std::string> feature_names;
  NormalizationStats stats;
  std::vector<std::string> warnings;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const float> row(std::size_t r) const noexcept {
    return {features.data() + r * input_length, input_length};
  }
  LabeledDataset select(std::span<const std::size_t> rows) const;
  InputBatch batch(std::span<const std::size_t> rows) const;
  InputBatch all() const;
};

// Population mean/stddev standardization in place; returns {mean, stddev}.
// A zero-variance column is left untouched and reports stddev 0.
std::pair<double, double> standardize_column(std::span<double> values);

// Fits the five-step pipeline on `raw`. Throws DataError if every row is dropped.
LabeledDataset preprocess(const RawDataset& raw, const FeaturePolicy& policy = {});

// Applies fitted stats to new rows (test split); values are clamped to [0, 1].
LabeledDataset apply_stats(const RawDataset& raw, const NormalizationStats& stats);

// Concatenates datasets with equal input_length.
LabeledDataset concat(std::span<const LabeledDataset* const> parts);

enum class ShardRole { Client, Public };

struct Shard {
  std::uint32_t shard_id = 0;  // 1-based
  ShardRole role = ShardRole::Client;
  LabeledDataset data;
};

// Shuffles row order by seed and cuts num_shards near-equal contiguous pieces
// (the first `rows % num_shards` get one extra row). The first
// `client_shards` are Client, the rest Public.
std::vector<Shard> shard(const LabeledDataset& dataset, std::size_t num_shards = 12,
                         std::uint64_t seed = 0, std::size_t client_shards = 9);

// Per-class shuffled hold-out; returns {train, test} row indices, each sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const std::uint8_t> labels, double test_fraction, std::uint64_t seed);

// At most `cap` rows keeping class proportions (largest-remainder rounding).
std::vector<std::size_t> stratified_subsample(std::span<const std::uint8_t> labels,
                                              std::size_t cap, std::uint64_t seed);

struct SynthSpec {
  std::size_t num_classes = kNumClasses;
  std::size_t samples_per_class = 2000;
  std::size_t input_length = 30;
  // Class means sit at distance separation * sqrt(2) from the origin along
  // orthonormal random directions, so any two are 2 * separation apart in
  // units of the per-feature noise.
  double class_separation = 3.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Balanced classes, rows ordered class by class, then min-max rescaled.
LabeledDataset synth_generate(const SynthSpec& spec);

// FKDD cache: magic, version u32, rows u32, cols u32, float32 features, u8 labels.
void write_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_cache(const std::filesystem::path& path);

// FNV-1a over input_length, features and labels.
std::uint64_t content_hash(const LabeledDataset& data);

}  // namespace fedkd
