#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "flexmarket/bids.hpp"

using namespace flexmarket;

namespace {

const RadialNetwork& net141() {
  static const RadialNetwork net = build_radial(read_case_file(FLEXMARKET_DATA_DIR "/case141.m"));
  return net;
}

}  // namespace

TEST_CASE("base supply covers 10-90% of load and is reproducible") {
  const auto& net = net141();
  const BaseProfile a = synthesize_base_supply(net, 11);
  const BaseProfile b = synthesize_base_supply(net, 11);
  CHECK(a.p_gen == b.p_gen);
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    if (a.p_load[i] > 0) {
      CHECK(a.p_gen[i] >= 0.1 * a.p_load[i]);
      CHECK(a.p_gen[i] <= 0.9 * a.p_load[i]);
    } else {
      CHECK(a.p_gen[i] == 0.0);
    }
  }
}

TEST_CASE("bid quantities follow the base profile") {
  const auto& net = net141();
  BaseProfile prof = synthesize_base_supply(net, 3);
  // Pin one bus to the worked example: load 10, generation 4.
  const std::size_t i = net.index_of(5);
  prof.p_load[i] = 10.0;
  prof.p_gen[i] = 4.0;
  const auto set = generate_bids(prof, Spread::kSL2, net, 3);
  const auto it = std::find_if(set.bids.begin(), set.bids.end(), [](const FlexBid& b) { return b.bus == 5; });
  REQUIRE(it != set.bids.end());
  CHECK(it->qty_d_up == 10.0);
  CHECK(it->qty_d_dn == 5.0);
  CHECK(it->qty_p_dn == 4.0);
  CHECK(it->qty_p_up == 2.0);
}

TEST_CASE("bid costs lie in their ranges") {
  const auto& net = net141();
  const auto set = generate_bids(synthesize_base_supply(net, 9), Spread::kSL2, net, 9);
  REQUIRE(!set.bids.empty());
  for (const FlexBid& b : set.bids) {
    CHECK(b.cost_d_up >= 35.0);
    CHECK(b.cost_d_up <= 45.0);
    CHECK(b.cost_d_dn >= 35.0);
    CHECK(b.cost_d_dn <= 45.0);
    CHECK(b.cost_p_up >= 45.0);
    CHECK(b.cost_p_up <= 55.0);
    CHECK(b.cost_p_dn >= 45.0);
    CHECK(b.cost_p_dn <= 55.0);
  }
}

TEST_CASE("SL1 bids are the SL2 bids filtered to deep leaves") {
  const auto& net = net141();
  const BaseProfile prof = synthesize_base_supply(net, 4);
  const auto sl1 = generate_bids(prof, Spread::kSL1, net, 4).bids;
  const auto sl2 = generate_bids(prof, Spread::kSL2, net, 4).bids;
  CHECK(sl1.size() >= 5);
  const auto leaves = leaf_depths(net);
  for (const FlexBid& b : sl1) {
    CHECK(leaves.count(b.bus) == 1);
    const auto it = std::find_if(sl2.begin(), sl2.end(), [&](const FlexBid& o) { return o.bus == b.bus; });
    REQUIRE(it != sl2.end());
    CHECK(*it == b);
  }
}

TEST_CASE("explicit SL1 list overrides the depth rule") {
  const auto& net = net141();
  const BaseProfile prof = synthesize_base_supply(net, 4);
  Sl1Selection sel;
  sel.buses = std::vector<int>{30, 31};
  const auto set = generate_bids(prof, Spread::kSL1, net, 4, sel);
  std::set<int> buses;
  for (const auto& b : set.bids) buses.insert(b.bus);
  CHECK(buses == std::set<int>{30, 31});
}

TEST_CASE("SL1 without eligible leaves warns instead of failing") {
  const auto& net = net141();
  BaseProfile prof = synthesize_base_supply(net, 4, 0.0);
  const auto set = generate_bids(prof, Spread::kSL1, net, 4);
  CHECK(set.bids.empty());
  CHECK(set.warnings.size() == 1);
}

TEST_CASE("zero-variance perturbation is the identity") {
  const auto& net = net141();
  const auto bids = generate_bids(synthesize_base_supply(net, 2), Spread::kSL2, net, 2).bids;
  ScenarioConfig cfg;
  cfg.sigma_cost = 0.0;
  cfg.sigma_qty = 0.0;
  CHECK(perturb_bids(bids, cfg, 17) == bids);
}

TEST_CASE("perturbation is deterministic and non-negative") {
  const auto& net = net141();
  const auto bids = generate_bids(synthesize_base_supply(net, 2), Spread::kSL2, net, 2).bids;
  ScenarioConfig cfg;
  cfg.sigma_qty = 2.0;  // heavy truncation
  const auto a = perturb_bids(bids, cfg, 5);
  CHECK(a == perturb_bids(bids, cfg, 5));
  CHECK(a != perturb_bids(bids, cfg, 6));
  for (const auto& b : a) {
    for (double v : {b.qty_p_up, b.qty_p_dn, b.qty_d_up, b.qty_d_dn, b.cost_p_up, b.cost_p_dn, b.cost_d_up, b.cost_d_dn})
      CHECK(v >= 0.0);
  }
}

TEST_CASE("truncated gaussian factor has mean close to one") {
  // Oracle: N(1, 0.15) truncated at 0 has mean 1 + 0.15 phi(1/0.15)/Phi(1/0.15) = 1 + O(1e-11).
  double sum = 0.0;
  const int n = 100000;
  for (int s = 0; s < n; ++s) sum += truncated_gaussian_factor(123, 1, 0, static_cast<std::uint64_t>(s), 0.15);
  CHECK(std::abs(sum / n - 1.0) < 0.01);
}

TEST_CASE("bid CSV round trip") {
  const auto& net = net141();
  const auto bids = generate_bids(synthesize_base_supply(net, 8), Spread::kSL2, net, 8).bids;
  std::stringstream ss;
  write_bids_csv(ss, bids);
  CHECK(read_bids_csv(ss) == bids);
}

TEST_CASE("invalid scenario configs are rejected") {
  ScenarioConfig cfg;
  cfg.samples = 0;
  CHECK_THROWS(cfg.validate());
  cfg.samples = 1;
  cfg.sigma_cost = -0.1;
  CHECK_THROWS(cfg.validate());
}
