#include "flexmarket/bids.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "flexmarket/error.hpp"
#include "flexmarket/rng.hpp"

namespace flexmarket {

namespace {

constexpr double kSupplyLow = 0.10, kSupplyHigh = 0.90;
constexpr double kDemandCostLow = 35.0, kDemandCostHigh = 45.0;
constexpr double kSupplyCostLow = 45.0, kSupplyCostHigh = 55.0;

// Field ids used in RNG keys: four costs, then four quantities.
enum Field : int { kCostPUp = 0, kCostPDn, kCostDUp, kCostDDn, kQtyPUp, kQtyPDn, kQtyDUp, kQtyDDn };

std::uint64_t key(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }

double uniform_draw(std::uint64_t seed, StreamTag tag, int bus, int field, double lo, double hi) {
  auto gen = keyed_stream({seed, static_cast<std::uint64_t>(tag), key(bus), key(field)});
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

}  // namespace

Spread parse_spread(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "sl1") return Spread::kSL1;
  if (t == "sl2") return Spread::kSL2;
  throw InvalidParameter("unknown spread level '" + text + "' (expected sl1 or sl2)");
}

std::string to_string(Spread s) { return s == Spread::kSL1 ? "SL1" : "SL2"; }

void ScenarioConfig::validate() const {
  if (!(sigma_cost >= 0) || !(sigma_qty >= 0))
    throw InvalidParameter("scenario standard deviations must be non-negative");
  if (samples < 1) throw InvalidParameter("scenario needs at least one sample");
}

BaseProfile synthesize_base_supply(const RadialNetwork& net, std::uint64_t seed, double load_scale) {
  if (!(load_scale >= 0)) throw InvalidParameter("load scale must be non-negative");
  BaseProfile p;
  p.load_scale = load_scale;
  const std::size_t n = net.bus_count();
  p.p_gen.assign(n, 0.0);
  p.p_load.assign(n, 0.0);
  p.q_load.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& b = net.buses[i];
    p.p_load[i] = std::max(0.0, b.base_load_p * load_scale);
    p.q_load[i] = std::max(0.0, b.base_load_q * load_scale);
    if (p.p_load[i] > 0) {
      const double u = uniform_draw(seed, StreamTag::kBaseSupply, b.id, 0, kSupplyLow, kSupplyHigh);
      p.p_gen[i] = u * p.p_load[i];
    }
  }
  return p;
}

std::vector<int> sl1_buses(const RadialNetwork& net, const BaseProfile& profile,
                           const Sl1Selection& selection) {
  if (selection.buses) {
    for (int id : *selection.buses) (void)net.index_of(id);
    return *selection.buses;
  }
  const auto depth = bus_depths(net);
  std::vector<std::size_t> leaves;
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    const bool active = profile.p_load[i] > 0 || profile.p_gen[i] > 0;
    if (net.children(i).empty() && i != net.root() && active) leaves.push_back(i);
  }
  if (leaves.empty()) return {};
  std::sort(leaves.begin(), leaves.end(), [&](std::size_t a, std::size_t b) {
    if (depth[a] != depth[b]) return depth[a] > depth[b];
    return net.buses[a].id < net.buses[b].id;
  });
  const auto quota = static_cast<std::size_t>(std::ceil(selection.quantile * static_cast<double>(leaves.size())));
  const std::size_t k = std::min(leaves.size(),
                                 std::max(quota, static_cast<std::size_t>(std::max(selection.min_leaves, 1))));
  const int cutoff = depth[leaves[k - 1]];
  std::vector<int> out;
  for (std::size_t i : leaves) {
    if (depth[i] >= cutoff) out.push_back(net.buses[i].id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

BidSet generate_bids(const BaseProfile& profile, Spread spread, const RadialNetwork& net,
                     std::uint64_t seed, const Sl1Selection& selection) {
  if (profile.p_load.size() != net.bus_count() || profile.p_gen.size() != net.bus_count())
    throw InstanceError("base profile does not match the network size");
  BidSet out;
  std::vector<char> eligible(net.bus_count(), 0);
  if (spread == Spread::kSL2) {
    for (std::size_t i = 0; i < net.bus_count(); ++i)
      eligible[i] = profile.p_load[i] > 0 || profile.p_gen[i] > 0;
  } else {
    for (int id : sl1_buses(net, profile, selection)) eligible[net.index_of(id)] = 1;
  }
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    if (!eligible[i]) continue;
    const int id = net.buses[i].id;
    FlexBid b;
    b.bus = id;
    b.qty_d_up = profile.p_load[i];
    b.qty_d_dn = 0.5 * profile.p_load[i];
    b.qty_p_dn = profile.p_gen[i];
    b.qty_p_up = 0.5 * profile.p_gen[i];
    b.cost_p_up = uniform_draw(seed, StreamTag::kBidCost, id, kCostPUp, kSupplyCostLow, kSupplyCostHigh);
    b.cost_p_dn = uniform_draw(seed, StreamTag::kBidCost, id, kCostPDn, kSupplyCostLow, kSupplyCostHigh);
    b.cost_d_up = uniform_draw(seed, StreamTag::kBidCost, id, kCostDUp, kDemandCostLow, kDemandCostHigh);
    b.cost_d_dn = uniform_draw(seed, StreamTag::kBidCost, id, kCostDDn, kDemandCostLow, kDemandCostHigh);
    out.bids.push_back(b);
  }
  if (out.bids.empty() && spread == Spread::kSL1)
    out.warnings.push_back("SL1 selection found no eligible leaf with load or generation; no bids");
  return out;
}

double truncated_gaussian_factor(std::uint64_t seed, int bus, int field, std::uint64_t sample,
                                 double sigma) {
  if (sigma == 0.0) return 1.0;
  auto gen = keyed_stream({seed, static_cast<std::uint64_t>(field < kQtyPUp ? StreamTag::kPerturbCost
                                                                           : StreamTag::kPerturbQuantity),
                           key(bus), key(field), sample});
  std::normal_distribution<double> dist(1.0, sigma);
  for (;;) {
    const double f = dist(gen);
    if (f >= 0.0) return f;
  }
}

std::vector<FlexBid> perturb_bids(const std::vector<FlexBid>& bids, const ScenarioConfig& cfg,
                                  std::uint64_t sample_index) {
  cfg.validate();
  std::vector<FlexBid> out = bids;
  for (FlexBid& b : out) {
    auto f = [&](int field, double sigma) {
      return truncated_gaussian_factor(cfg.seed, b.bus, field, sample_index, sigma);
    };
    b.cost_p_up *= f(kCostPUp, cfg.sigma_cost);
    b.cost_p_dn *= f(kCostPDn, cfg.sigma_cost);
    b.cost_d_up *= f(kCostDUp, cfg.sigma_cost);
    b.cost_d_dn *= f(kCostDDn, cfg.sigma_cost);
    b.qty_p_up *= f(kQtyPUp, cfg.sigma_qty);
    b.qty_p_dn *= f(kQtyPDn, cfg.sigma_qty);
    b.qty_d_up *= f(kQtyDUp, cfg.sigma_qty);
    b.qty_d_dn *= f(kQtyDDn, cfg.sigma_qty);
  }
  return out;
}

void write_bids_csv(std::ostream& out, const std::vector<FlexBid>& bids) {
  out << "bus,qty_p_up,qty_p_dn,qty_d_up,qty_d_dn,cost_p_up,cost_p_dn,cost_d_up,cost_d_dn\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const FlexBid& b : bids) {
    out << b.bus << ',' << b.qty_p_up << ',' << b.qty_p_dn << ',' << b.qty_d_up << ',' << b.qty_d_dn
        << ',' << b.cost_p_up << ',' << b.cost_p_dn << ',' << b.cost_d_up << ',' << b.cost_d_dn
        << '\n';
  }
}

std::vector<FlexBid> read_bids_csv(std::istream& in) {
  std::vector<FlexBid> bids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("bus", 0) == 0 || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cell + "' in bid CSV", line_no);
      }
    }
    if (v.size() != 9) throw ParseError("bid CSV rows need 9 columns", line_no);
    FlexBid b{static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
    for (std::size_t k = 1; k < 9; ++k) {
      if (!(v[k] >= 0)) throw ParseError("bid quantities and costs must be non-negative", line_no);
    }
    bids.push_back(b);
  }
  return bids;
}

}  // namespace flexmarket
