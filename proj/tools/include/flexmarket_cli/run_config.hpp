#pragma once

// Run configuration shared by the command-line front end and the acceptance
// suite. A config is a flat key = value document; every key has a default.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexmarket/bids.hpp"
#include "flexmarket/error.hpp"
#include "flexmarket/formulation.hpp"

namespace flexmarket::cli {

/// Bad key, bad value or unreadable file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A capacity in MVA, or a multiple of the base-case apparent flow ("0.95x").
struct CapacitySpec {
  double value = 0.0;
  bool relative = false;
};

struct LineCapacity {
  int bus = 0;  // to-bus id
  CapacitySpec capacity;
};

struct RunConfig {
  std::string label;  // empty: the spread name
  std::string case_path = "case141";
  std::optional<int> root;
  Spread spread = Spread::kSL2;
  double v_lo = 0.99;
  double v_hi = 1.01;
  int polygon_sides = 12;
  double load_scale = 1.0;
  std::vector<LineCapacity> line_capacity;
  std::optional<CapacitySpec> interface_capacity;
  InterfaceMode interface_mode = InterfaceMode::kFree;
  std::optional<double> q_widen;
  std::uint64_t seed = 1;
  std::vector<Formulation> formulations{Formulation::kLP, Formulation::kSOCP};
  ScenarioConfig mc;
  int checkpoint = 50;
  unsigned threads = 0;  // 0: hardware concurrency; never affects results
  std::string out_dir = "out";
  bool write_csv = true;
  bool write_json = true;

  std::string effective_label() const;
};

/// Keys accepted in config files and, prefixed with "--", on the command line.
const std::vector<std::string>& config_keys();

/// Throws ConfigError.
void set_field(RunConfig& cfg, const std::string& key, const std::string& value);

/// Resolved key/value pairs in config_keys() order, parseable by set_field.
/// The thread count is omitted since it cannot change any output.
std::vector<std::pair<std::string, std::string>> fields(const RunConfig& cfg);

/// Parses a config document on top of `base`.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// "# key = value" lines for CSV headers.
std::string provenance_header(const RunConfig& cfg);
nlohmann::json provenance_json(const RunConfig& cfg);

/// Locates a case by path, or by name under the data directory (the
/// FLEXMARKET_DATA_DIR environment variable, then the source tree).
std::filesystem::path resolve_case(const std::string& name);

/// Builds the network, base profile, bids and market instance for a config.
/// Relative capacities refer to the lossless base-case flow of the branch.
struct Scenario {
  std::shared_ptr<const RadialNetwork> net;
  BaseProfile profile;
  BidSet bids;
  MarketInstance instance;  // formulation is left at LP
};

Scenario make_scenario(const RunConfig& cfg);

}  // namespace flexmarket::cli
