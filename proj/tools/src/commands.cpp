#include "flexmarket_cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace flexmarket::cli {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace

void write_files(const std::filesystem::path& dir, const FileSet& files) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + (dir / name).string());
  }
}

nlohmann::json result_json(const ClearingResult& r) {
  nlohmann::json j = to_json(r);
  j["diagnostics"].erase("solve_seconds");
  return j;
}

std::vector<ClearingResult> run_clear(const RunConfig& cfg) {
  const Scenario s = make_scenario(cfg);
  std::vector<ClearingResult> out;
  for (Formulation f : cfg.formulations) {
    MarketInstance inst = s.instance;
    inst.formulation = f;
    ClearingResult r = clear(inst);
    settle(r);
    out.push_back(std::move(r));
  }
  return out;
}

FileSet clear_outputs(const RunConfig& cfg, const std::vector<ClearingResult>& results) {
  FileSet files;
  const std::string label = cfg.effective_label();
  const std::string header = provenance_header(cfg);
  for (const auto& r : results) {
    const std::string stem = label + "_" + lower(to_string(r.formulation));
    if (cfg.write_csv) {
      std::ostringstream bus, branch;
      bus << header;
      write_bus_csv(bus, r);
      branch << header;
      write_branch_csv(branch, r);
      files[stem + "_bus.csv"] = bus.str();
      files[stem + "_branch.csv"] = branch.str();
    }
    if (cfg.write_json) {
      nlohmann::json j = result_json(r);
      j["config"] = provenance_json(cfg);
      files[stem + ".json"] = dump(j);
    }
  }
  return files;
}

CompareOutcome run_compare(const std::vector<RunConfig>& cases, const std::optional<std::string>& reference) {
  if (cases.empty()) throw ConfigError("compare: no cases given");
  std::set<std::string> seen;
  for (const auto& c : cases)
    if (!seen.insert(c.effective_label()).second) throw ConfigError("compare: duplicate case label " + c.effective_label());

  CompareOutcome out;
  if (reference) {
    for (std::size_t k = 0; k < cases.size(); ++k)
      if (cases[k].effective_label() == *reference) out.reference = k;
    if (!out.reference) throw ConfigError("compare: no case labelled " + *reference);
  } else {
    for (std::size_t k = 0; k < cases.size() && !out.reference; ++k)
      if (cases[k].spread == Spread::kSL1) out.reference = k;
  }

  // Validate every case before the first solve.
  std::vector<Scenario> scenarios;
  for (const auto& c : cases) scenarios.push_back(make_scenario(c));
  for (std::size_t k = 0; k < cases.size(); ++k)
    out.reports.push_back(compare_instance(scenarios[k].instance, cases[k].effective_label()));

  if (cases.size() == 1) {
    out.reference.reset();
    out.notice = "single case: normalization skipped, raw values only";
  } else if (!out.reference) {
    out.notice = "no SL1 case: normalization skipped, raw values only";
  } else {
    const ComparisonReport ref = out.reports[*out.reference];
    for (auto& r : out.reports) normalize(r, ref);
  }
  return out;
}

FileSet compare_outputs(const std::string& name, const std::vector<RunConfig>& cases, const CompareOutcome& outcome) {
  std::string header;
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : cases) {
    header += "# [" + c.effective_label() + "]\n" + provenance_header(c);
    configs.push_back(provenance_json(c));
  }
  if (!outcome.notice.empty()) header += "# note: " + outcome.notice + "\n";

  FileSet files;
  const bool csv = std::any_of(cases.begin(), cases.end(), [](const RunConfig& c) { return c.write_csv; });
  const bool json = std::any_of(cases.begin(), cases.end(), [](const RunConfig& c) { return c.write_json; });
  if (csv) {
    std::ostringstream out;
    out << header;
    write_comparison_csv(out, outcome.reports);
    files[name + "_rmse.csv"] = out.str();
  }
  if (json) {
    nlohmann::json j;
    j["reports"] = nlohmann::json::array();
    for (const auto& r : outcome.reports) j["reports"].push_back(to_json(r));
    j["reference"] = outcome.reference ? nlohmann::json(outcome.reports[*outcome.reference].case_label)
                                       : nlohmann::json(nullptr);
    if (!outcome.notice.empty()) j["notice"] = outcome.notice;
    j["config"] = configs;
    files[name + ".json"] = dump(j);
  }
  return files;
}

MonteCarloResult run_montecarlo(const RunConfig& cfg) {
  const Scenario s = make_scenario(cfg);
  ScenarioConfig sc = cfg.mc;
  sc.seed = cfg.seed;
  MonteCarloOptions opt;
  opt.threads = cfg.threads;
  return run_monte_carlo(s.instance, sc, opt);
}

FileSet montecarlo_outputs(const RunConfig& cfg, const MonteCarloResult& mc) {
  FileSet files;
  const std::string stem = cfg.effective_label() + "_mc";
  const std::string header = provenance_header(cfg);
  if (cfg.write_csv) {
    std::ostringstream moments, trace, series;
    moments << header;
    write_moments_csv(moments, mc);
    trace << header;
    write_trace_csv(trace, mc, cfg.checkpoint);
    series << header;
    write_long_csv(series, mc);
    files[stem + "_moments.csv"] = moments.str();
    files[stem + "_trace.csv"] = trace.str();
    files[stem + "_series.csv"] = series.str();
  }
  nlohmann::json j = summary_json(mc, cfg.checkpoint);
  j["config"] = provenance_json(cfg);
  files[stem + "_summary.json"] = dump(j);
  return files;
}

}  // namespace flexmarket::cli
