#pragma once

// Base supply synthesis, flexibility bid generation and Monte Carlo perturbation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flexmarket/netmodel.hpp"

namespace flexmarket {

/// Base generation and load per bus index, in MW / MVAr.
struct BaseProfile {
  std::vector<double> p_gen;
  std::vector<double> p_load;
  std::vector<double> q_load;
  double load_scale = 1.0;
};

/// Four-sided flexibility offer at one bus. Quantities in MW, costs in EUR/MWh.
struct FlexBid {
  int bus = 0;
  double qty_p_up = 0.0;  // generation increase
  double qty_p_dn = 0.0;  // generation decrease
  double qty_d_up = 0.0;  // demand decrease
  double qty_d_dn = 0.0;  // demand increase
  double cost_p_up = 0.0;
  double cost_p_dn = 0.0;
  double cost_d_up = 0.0;
  double cost_d_dn = 0.0;

  friend bool operator==(const FlexBid&, const FlexBid&) = default;
};

enum class Spread { kSL1, kSL2 };

Spread parse_spread(const std::string& text);
std::string to_string(Spread s);

struct ScenarioConfig {
  double sigma_cost = 0.15;
  double sigma_qty = 0.3;
  std::uint64_t seed = 1;
  int samples = 1000;

  void validate() const;
};

/// Base load (scaled by `load_scale`) plus base supply p_gen = u * p_load with
/// u ~ U(0.1, 0.9) drawn per loaded bus. Base supply has unity power factor.
BaseProfile synthesize_base_supply(const RadialNetwork& net, std::uint64_t seed,
                                   double load_scale = 1.0);

struct Sl1Selection {
  double quantile = 0.25;  // keep leaves in the top quartile of depth
  int min_leaves = 5;
  /// Explicit bus ids; overrides the depth rule when set.
  std::optional<std::vector<int>> buses;
};

/// Bus ids eligible under SL1: the deepest loaded leaves.
std::vector<int> sl1_buses(const RadialNetwork& net, const BaseProfile& profile,
                           const Sl1Selection& selection = {});

struct BidSet {
  std::vector<FlexBid> bids;
  std::vector<std::string> warnings;
};

/// Quantities follow the base profile (demand may drop to zero or rise by half,
/// supply may drop to zero or rise by half); demand costs ~ U(35, 45) and
/// supply costs ~ U(45, 55) EUR/MWh, drawn from streams keyed by bus and field.
BidSet generate_bids(const BaseProfile& profile, Spread spread, const RadialNetwork& net,
                     std::uint64_t seed, const Sl1Selection& selection = {});

/// Scales every cost by f ~ N(1, sigma_cost) and every quantity by
/// f ~ N(1, sigma_qty), resampling negative factors. Deterministic in
/// (cfg.seed, sample_index).
std::vector<FlexBid> perturb_bids(const std::vector<FlexBid>& bids, const ScenarioConfig& cfg,
                                  std::uint64_t sample_index);

/// Draw from N(1, sigma) truncated below at zero.
double truncated_gaussian_factor(std::uint64_t seed, int bus, int field, std::uint64_t sample,
                                 double sigma);

void write_bids_csv(std::ostream& out, const std::vector<FlexBid>& bids);
std::vector<FlexBid> read_bids_csv(std::istream& in);

}  // namespace flexmarket
