#pragma once

// Matpower case ingestion and the radial network model the market is built on.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace flexmarket {

/// Numeric tables of a Matpower case, exactly as written in the file.
struct RawCase {
  double base_mva = 100.0;
  std::vector<std::vector<double>> bus;
  std::vector<std::vector<double>> gen;
  std::vector<std::vector<double>> branch;
};

/// Column indices of the Matpower tables that are read. Other columns are ignored.
namespace mpcol {
inline constexpr int kBusId = 0, kBusType = 1, kPd = 2, kQd = 3, kGs = 4, kBs = 5, kVmax = 11,
                     kVmin = 12;
inline constexpr int kFromBus = 0, kToBus = 1, kR = 2, kX = 3, kB = 4, kRateA = 5, kStatus = 10;
inline constexpr int kMinBusColumns = 13;
inline constexpr int kMinBranchColumns = 4;
}  // namespace mpcol

/// Parses the `baseMVA`, `bus`, `gen` and `branch` assignments of a case file.
/// Throws ParseError (with line) on malformed literals and StructureError when a
/// required table is missing or is modified by in-file MATLAB statements.
RawCase parse_case(std::string_view text);
RawCase read_case_file(const std::filesystem::path& path);

struct Bus {
  int id = 0;
  double base_load_p = 0.0;  // MW
  double base_load_q = 0.0;  // MVAr
  // Shunt admittance y = g - jb to ground in p.u.; positive b consumes reactive power.
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  double v_min = 0.9;  // magnitudes, p.u.
  double v_max = 1.1;
  double q_min = 0.0;  // net reactive injection bounds, p.u.
  double q_max = 0.0;
};

struct Branch {
  int from_bus = 0;  // ancestor side
  int to_bus = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
  double s_max = 0.0;  // MVA
};

/// Id used for the virtual upper-grid node A(root).
inline constexpr int kUpperGridId = -1;

/// Immutable tree-structured feeder. Buses are addressed by position (index) in
/// `buses`; `branch_of(i)` is the unique branch feeding bus i, and the root is fed
/// by the virtual interface branch.
class RadialNetwork {
 public:
  double base_mva = 1.0;
  double slack_voltage = 1.0;  // squared magnitude at the upper-grid node, p.u.^2
  std::vector<Bus> buses;
  std::vector<Branch> branches;  // internal branches, oriented away from the root
  Branch interface;              // upper grid -> root, zero impedance

  std::size_t bus_count() const { return buses.size(); }
  std::size_t root() const { return root_; }
  int root_id() const { return buses[root_].id; }

  /// Index of the ancestor bus, or -1 for the root (its ancestor is the upper grid).
  int parent(std::size_t i) const { return parent_[i]; }
  const std::vector<int>& children(std::size_t i) const { return children_[i]; }
  /// Index into `branches` of the branch ending at bus i; -1 for the root.
  int incoming(std::size_t i) const { return incoming_[i]; }
  /// Branch feeding bus i (the interface for the root).
  const Branch& branch_of(std::size_t i) const {
    return incoming_[i] < 0 ? interface : branches[static_cast<std::size_t>(incoming_[i])];
  }
  /// Buses in breadth-first order from the root; parents precede children.
  const std::vector<int>& topological_order() const { return order_; }

  std::size_t index_of(int bus_id) const;
  bool has_bus(int bus_id) const { return index_.count(bus_id) != 0; }

  double to_pu(double mw) const { return mw / base_mva; }
  double from_pu(double pu) const { return pu * base_mva; }

 private:
  friend struct NetworkBuilder;
  std::size_t root_ = 0;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> incoming_;
  std::vector<int> order_;
  std::unordered_map<int, std::size_t> index_;
};

struct BuildOptions {
  /// Root bus id; defaults to the case's reference (type 3) bus.
  std::optional<int> root_id;
  /// Interface capacity in MVA; defaults to 10x the total base apparent load.
  std::optional<double> interface_capacity;
  /// Rating for branches whose rateA column is zero or absent; defaults to the
  /// interface default.
  std::optional<double> default_line_rating;
  double slack_voltage = 1.0;
};

/// Orients the case into a tree rooted at `options.root_id`. Throws TopologyError
/// when a cycle exists (message lists one cycle) or a bus is unreachable.
RadialNetwork build_radial(const RawCase& raw, const BuildOptions& options = {});

/// Hop count from the root, for every bus index.
std::vector<int> bus_depths(const RadialNetwork& net);

/// Hop count from the root for every leaf, keyed by bus id.
std::map<int, int> leaf_depths(const RadialNetwork& net);

/// Indices of all buses in the subtree rooted at bus index i (including i).
std::vector<int> subtree(const RadialNetwork& net, std::size_t i);

/// Buses, branches and topology as JSON, for inspection.
nlohmann::json network_summary(const RadialNetwork& net);

}  // namespace flexmarket
