#pragma once

// Market instance and its translation into LP (linearized branch flow with a
// polygonal flow limit) and SOCP (relaxed branch flow) conic programs.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexmarket/bids.hpp"
#include "flexmarket/netmodel.hpp"
#include "flexmarket/solver.hpp"

namespace flexmarket {

enum class Formulation { kLP, kSOCP };

Formulation parse_formulation(const std::string& text);
std::string to_string(Formulation f);

/// How the upper-grid exchange enters the market.
///  kFree:      interface flow is a free variable limited only by its capacity.
///  kScheduled: interface real flow is pinned to its base-case value, so all
///              rebalancing is done by flexibility bids.
enum class InterfaceMode { kFree, kScheduled };

InterfaceMode parse_interface_mode(const std::string& text);
std::string to_string(InterfaceMode m);

struct MarketInstance {
  std::shared_ptr<const RadialNetwork> net;
  BaseProfile profile;
  std::vector<FlexBid> bids;
  double v_lo = 0.99;  // magnitudes, p.u.
  double v_hi = 1.01;
  std::map<int, std::pair<double, double>> v_overrides;  // bus id -> (lo, hi)
  int polygon_sides = 12;
  Formulation formulation = Formulation::kLP;
  /// Widening factor for reactive bounds: q in +-(1 + gamma)|q_load|. Unset keeps q fixed
  /// at the negated base reactive load.
  std::optional<double> q_widen;
  /// Capacity overrides in MVA keyed by the to-bus id of a branch.
  std::map<int, double> line_capacity;
  InterfaceMode interface_mode = InterfaceMode::kFree;

  /// Throws InstanceError / InvalidParameter.
  void validate() const;
  std::pair<double, double> voltage_band(std::size_t bus_index) const;
  /// Capacity in MVA of the branch feeding bus index i (the interface for the root).
  double capacity(std::size_t bus_index) const;
};

struct PolygonEdge {
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;
};

/// Edges of the regular M-gon inscribed in the unit circle with vertices at
/// angles 2 pi m / M. Edge m is alpha P + beta Q + delta S <= 0.
std::vector<PolygonEdge> polygon_edges(int sides);

/// Position of every decision variable. Per-bus quantities are indexed by bus
/// index; the branch of bus i is the one feeding it.
struct VariableLayout {
  std::size_t bids = 0;
  std::size_t buses = 0;
  bool has_current = false;

  int dp_up(std::size_t k) const { return static_cast<int>(4 * k); }
  int dp_dn(std::size_t k) const { return static_cast<int>(4 * k + 1); }
  int dd_up(std::size_t k) const { return static_cast<int>(4 * k + 2); }
  int dd_dn(std::size_t k) const { return static_cast<int>(4 * k + 3); }
  int q(std::size_t i) const { return block(0, i); }
  int v(std::size_t i) const { return block(1, i); }
  int p_flow(std::size_t i) const { return block(2, i); }
  int q_flow(std::size_t i) const { return block(3, i); }
  int l(std::size_t i) const { return has_current ? block(4, i) : -1; }
  std::size_t size() const { return 4 * bids + (has_current ? 5 : 4) * buses; }

 private:
  int block(std::size_t b, std::size_t i) const { return static_cast<int>(4 * bids + b * buses + i); }
};

/// A built market: the conic program plus row bookkeeping for dual extraction.
struct MarketProgram {
  Formulation formulation = Formulation::kLP;
  ConicProgram program;
  VariableLayout layout;
  std::vector<std::size_t> bid_bus;     // bus index of each bid
  std::vector<int> p_balance_row;       // bus index -> equality row
  std::vector<int> q_balance_row;
  std::vector<int> v_drop_row;
  std::vector<int> polygon_first_row;   // bus index -> first inequality row (LP)
  int polygon_sides = 0;
  std::vector<int> current_cone;        // bus index -> cone block (SOCP)
  std::vector<int> flow_cone;
  double scheduled_import = 0.0;        // p.u., kScheduled only
};

MarketProgram build_lp(const MarketInstance& inst);
MarketProgram build_socp(const MarketInstance& inst);
/// Dispatches on inst.formulation.
MarketProgram build(const MarketInstance& inst);

/// Power flow of the base profile without flexibility, in p.u. Per bus index:
/// branch flows P, Q at the sending end, squared voltage v and squared current l.
/// The LP variant is the lossless linearization; the SOCP variant iterates the
/// full branch-flow equations (backward/forward sweep).
struct BaseFlow {
  std::vector<double> p, q, v, l;
  int iterations = 0;
};
BaseFlow base_power_flow(const RadialNetwork& net, const BaseProfile& profile, Formulation f);

/// Program plus variable and row layout, for cross-solver diffing.
nlohmann::json market_dump(const MarketProgram& mp);

}  // namespace flexmarket
