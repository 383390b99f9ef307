#pragma once

// Result files. Column orders here are a stable interface; docs/results.md
// describes each column.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedaa/orchestrator.hpp"

namespace fedaa {

enum class ResultFormat { kCsv, kJson };

ResultFormat parse_result_format(const std::string& s);

/// %.6g. Throws NumericError for NaN/Inf.
std::string format_number(double x);

/// Per-round CSV: header plus one line per record. List-valued columns are
/// ';'-joined inside the cell.
std::string records_to_csv(std::span<const RoundRecord> records);
/// JSON array of round-record objects, numbers printed like the CSV.
std::string records_to_json(std::span<const RoundRecord> records);
std::vector<RoundRecord> records_from_json(const std::string& text);

/// Writes records in `format`. NaN in any record raises NumericError naming
/// the round and field; unwritable paths raise IoError.
void emit_results(std::span<const RoundRecord> records, const std::filesystem::path& path, ResultFormat format);

struct ResultRow {
  std::string method;   // fedaa | fedavg
  std::string dataset;
  std::string attack;   // none | same_value | ...
  double malicious_pct = 0.0;
  double m_pct = 0.0;
  double c_pct = 0.0;
  std::uint64_t seed = 0;
  double mean_acc = 0.0;
  double acc_std = 0.0;
  double acc_var = 0.0;
  double global_acc = 0.0;
  double runtime_seconds = 0.0;
  bool aggregate = false;  // mean over the seeds of the preceding rows
};

/// Row summarising the final round of one run.
ResultRow summarize_run(const ExperimentConfig& cfg, std::span<const RoundRecord> records, double runtime_seconds);

/// Mean of the given rows' numeric columns, marked aggregate. Seed is 0.
ResultRow aggregate_rows(std::span<const ResultRow> rows);

struct ResultTable {
  std::vector<ResultRow> rows;

  std::string to_csv() const;
  void write(const std::filesystem::path& path) const;
};

struct RunManifest {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string start_time;  // ISO 8601 UTC
  std::string end_time;
  std::vector<std::string> artifacts;
  std::string version;

  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string utc_timestamp();
std::string version_string();

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace fedaa
