#pragma once

// Report emission: JSON, aligned text tables and CSV files.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedkd/config.hpp"
#include "fedkd/orchestrator.hpp"

namespace fedkd {

// `run` supplies the data source and output settings for the config echo;
// the experiment part comes from the report.
nlohmann::json report_to_json(const ExperimentReport& report, const RunConfig& run);

// Problems found, empty when the document matches the report schema.
std::vector<std::string> validate_report(const nlohmann::json& doc);

// Copy without any "wall" member at any depth.
nlohmann::json strip_wall(const nlohmann::json& doc);

std::string render_text(const ExperimentReport& report);
std::string rounds_csv(const ExperimentReport& report);
std::string trace_csv(const ExperimentReport& report);

// Transmission, aggregation, bytes and buffer per scenario.
std::string comparison_table(std::span<const ExperimentReport> reports);
// Final accuracy and convergence per mode and alpha.
std::string kd_impact_table(std::span<const ExperimentReport> reports);

// Directory-safe scenario name, e.g. "hierarchical_alpha0.5".
std::string scenario_slug(const ExperimentReport& report);

// Writes the formats requested by `run` into `dir`. Files are written under a
// ".partial" name and renamed once complete. Returns the paths written.
std::vector<std::filesystem::path> write_report_files(const std::filesystem::path& dir,
                                                      const ExperimentReport& report,
                                                      const RunConfig& run);

// Writes `text` to `path` via a ".partial" file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fedkd
