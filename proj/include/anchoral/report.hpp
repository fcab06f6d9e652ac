#pragma once

#include "anchoral/config.hpp"
#include "anchoral/runner.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace anchoral {

/// Git blob id: SHA-1 of "blob <size>\0" followed by the bytes, lower-case hex.
std::string git_blob_sha1(std::span<const unsigned char> bytes);
std::string git_blob_sha1_file(const std::filesystem::path &path);

/// Hash over (role, blob id) pairs of every dataset input that is set.
std::string dataset_hash(const DatasetConfig &d);

/// One finished run as stored in result.json.
struct RunRecord {
  std::string method;
  std::string strategy;
  std::uint64_t run_index = 0;
  std::string dataset_hash;
  ExperimentConfig config;
  ExperimentResult result;
};

nlohmann::json run_to_json(const RunRecord &run);
RunRecord run_from_json(const nlohmann::json &j);
void write_run(const RunRecord &run, const std::filesystem::path &path);
RunRecord read_run(const std::filesystem::path &path);

struct ReportRow {
  std::string method;
  std::string strategy;
  std::size_t runs = 0;
  std::map<std::string, Summary> stats;  // keys as in aggregate_runs
};

struct Report {
  std::vector<ReportRow> overall;
  std::vector<ReportRow> budget_matched;
  std::size_t matched_rounds = 0;
};

/// Groups runs by (method, strategy). Throws ConfigError when the runs do not
/// share one dataset hash or one n_init.
Report build_report(std::span<const RunRecord> runs);

void write_report_text(std::ostream &out, const Report &report);
/// Columns: section,method,strategy,runs, then median and iqr per metric.
void write_report_csv(std::ostream &out, const Report &report);

/// Long-format curves: method,strategy,run,round,labeled_total,
/// labeled_minority_prop,subpool_minority_frac.
void write_curves_csv(std::ostream &out, std::span<const RunRecord> runs);

/// Writes summary.txt, summary.csv and curves.csv into `dir`.
Report write_report_files(std::span<const RunRecord> runs, const std::filesystem::path &dir);

}  // namespace anchoral
