#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexmarket/market.hpp"
#include "flexmarket_cli/commands.hpp"

namespace fm = flexmarket;
namespace fc = flexmarket::cli;

namespace {

enum Exit { kOk = 0, kConfig = 2, kSolver = 3, kStatistical = 4 };

// Flag values in key order; applied after any config file.
using Overrides = std::map<std::string, std::string>;

void add_config_flags(CLI::App* cmd, Overrides& flags) {
  for (const auto& key : fc::config_keys()) cmd->add_option("--" + key, flags[key], "config key '" + key + "'");
}

fc::RunConfig resolve(const std::string& file, const Overrides& flags, const CLI::App* cmd) {
  fc::RunConfig cfg = file.empty() ? fc::RunConfig{} : fc::load_config(file);
  for (const auto& key : fc::config_keys())
    if (cmd->count("--" + key) > 0) fc::set_field(cfg, key, flags.at(key));
  return cfg;
}

void write_diagnostics(const fc::RunConfig& cfg, const std::string& command, const std::string& stem,
                       nlohmann::json j) {
  j["command"] = command;
  j["config"] = fc::provenance_json(cfg);
  try {
    fc::write_files(cfg.out_dir, {{stem + "_diagnostics.json", j.dump(2) + "\n"}});
    std::cerr << "diagnostics written to " << (std::filesystem::path(cfg.out_dir) / (stem + "_diagnostics.json")).string()
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flexibility market clearing on radial distribution feeders"};
  app.require_subcommand(1);

  std::string config_file;
  Overrides clear_flags, mc_flags, compare_flags;
  std::vector<std::string> recipes;
  std::string compare_name = "compare";
  std::string reference;

  CLI::App* clear_cmd = app.add_subcommand("clear", "clear the market once per formulation");
  clear_cmd->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  add_config_flags(clear_cmd, clear_flags);

  CLI::App* compare_cmd = app.add_subcommand("compare", "LP versus SOCP error tables over a set of cases");
  compare_cmd->add_option("recipes", recipes, "one config file per case; flags apply to every case");
  compare_cmd->add_option("--name", compare_name, "output file stem");
  compare_cmd->add_option("--reference", reference, "label of the normalization case (default: first SL1 case)");
  add_config_flags(compare_cmd, compare_flags);

  CLI::App* mc_cmd = app.add_subcommand("montecarlo", "Monte Carlo moments under perturbed bids");
  mc_cmd->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  add_config_flags(mc_cmd, mc_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  std::vector<fc::RunConfig> cases;
  try {
    if (clear_cmd->parsed()) {
      cases.push_back(resolve(config_file, clear_flags, clear_cmd));
    } else if (mc_cmd->parsed()) {
      cases.push_back(resolve(config_file, mc_flags, mc_cmd));
    } else if (recipes.empty()) {
      cases.push_back(resolve("", compare_flags, compare_cmd));
    } else {
      for (const auto& r : recipes) cases.push_back(resolve(r, compare_flags, compare_cmd));
    }
  } catch (const fm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }

  const fc::RunConfig& cfg = cases.front();
  const std::string command = app.get_subcommands().front()->get_name();
  const std::string stem = command == "compare" ? compare_name : cfg.effective_label();
  try {
    if (clear_cmd->parsed()) {
      const auto results = fc::run_clear(cfg);
      fc::write_files(cfg.out_dir, fc::clear_outputs(cfg, results));
      for (const auto& r : results)
        std::cout << fm::to_string(r.formulation) << ": objective " << r.objective << " EUR, "
                  << r.binding.lines.size() << " binding lines\n";
    } else if (mc_cmd->parsed()) {
      const auto mc = fc::run_montecarlo(cfg);
      fc::write_files(cfg.out_dir, fc::montecarlo_outputs(cfg, mc));
      std::cout << mc.lp.samples_used << " of " << mc.lp.samples_attempted << " samples used\n";
    } else {
      const auto outcome = fc::run_compare(cases, reference.empty() ? std::nullopt : std::optional(reference));
      if (!outcome.notice.empty()) std::cerr << "notice: " << outcome.notice << "\n";
      fc::write_files(cfg.out_dir, fc::compare_outputs(compare_name, cases, outcome));
      for (const auto& r : outcome.reports)
        std::cout << r.case_label << ": DLMP RMSE " << r.rmse.dlmp << ", max deviation " << r.max_dlmp_dev_percent
                  << "% at bus " << r.max_dlmp_dev_bus << "\n";
    }
  } catch (const fc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const fm::StatisticalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_diagnostics(cfg, command, stem,
                      {{"error", e.what()}, {"samples_attempted", e.attempted()}, {"samples_failed", e.failed()}});
    return kStatistical;
  } catch (const fm::ClearingFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_diagnostics(cfg, command, stem,
                      {{"error", e.what()},
                       {"status", fm::to_string(e.status())},
                       {"iterations", e.iterations()},
                       {"kkt", {{"primal", e.kkt().primal}, {"dual", e.kkt().dual}, {"complementarity", e.kkt().complementarity}}}});
    return kSolver;
  } catch (const fm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_diagnostics(cfg, command, stem, {{"error", e.what()}});
    return kSolver;
  }
  return kOk;
}
