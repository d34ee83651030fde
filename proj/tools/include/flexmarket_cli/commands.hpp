#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flexmarket/analysis.hpp"
#include "flexmarket_cli/run_config.hpp"

namespace flexmarket::cli {

/// Output files of a command, keyed by file name, held back until the whole
/// command has succeeded.
using FileSet = std::map<std::string, std::string>;

/// Writes every file under `dir`, creating it when needed.
void write_files(const std::filesystem::path& dir, const FileSet& files);

/// JSON export of a clearing result without wall-clock timings.
nlohmann::json result_json(const ClearingResult& r);

FileSet clear_outputs(const RunConfig& cfg, const std::vector<ClearingResult>& results);

/// One clearing per requested formulation. Throws ConfigError or ClearingFailure.
std::vector<ClearingResult> run_clear(const RunConfig& cfg);

struct CompareOutcome {
  std::vector<ComparisonReport> reports;
  std::optional<std::size_t> reference;  // index into reports
  std::string notice;
};

/// Clears every case under both formulations and normalizes against the case
/// labelled `reference`, or the first SL1 case when none is named.
CompareOutcome run_compare(const std::vector<RunConfig>& cases,
                           const std::optional<std::string>& reference = std::nullopt);

FileSet compare_outputs(const std::string& name, const std::vector<RunConfig>& cases,
                        const CompareOutcome& outcome);

/// Throws StatisticalFailure past the 5% failure limit.
MonteCarloResult run_montecarlo(const RunConfig& cfg);

FileSet montecarlo_outputs(const RunConfig& cfg, const MonteCarloResult& mc);

}  // namespace flexmarket::cli
