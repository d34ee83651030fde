#pragma once

// Two-bus feeder: bus 1 is the substation, bus 2 carries 10 MW at unity power
// factor behind an 8 MVA line, with one demand-decrease offer of 5 MW at 40 EUR/MWh.

#include <memory>
#include <string>

#include "flexmarket/formulation.hpp"

namespace toy {

inline std::shared_ptr<const flexmarket::RadialNetwork> network(double r, double x) {
  const std::string text =
      "mpc.baseMVA = 10;\n"
      "mpc.bus = [\n"
      "1 3 0 0 0 0 1 1 0 12.66 1 1.1 0.9;\n"
      "2 1 10 0 0 0 1 1 0 12.66 1 1.1 0.9;\n"
      "];\n"
      "mpc.gen = [1 0 0 10 -10 1 100 1 10 0];\n"
      "mpc.branch = [\n"
      "1 2 " + std::to_string(r) + " " + std::to_string(x) + " 0 8 0 0 0 0 1;\n"
      "];\n";
  return std::make_shared<const flexmarket::RadialNetwork>(
      flexmarket::build_radial(flexmarket::parse_case(text)));
}

inline flexmarket::MarketInstance instance(flexmarket::Formulation f, double r = 0.01, double x = 0.01,
                                           bool with_bid = true) {
  flexmarket::MarketInstance inst;
  inst.net = network(r, x);
  const std::size_t n = inst.net->bus_count();
  inst.profile.p_gen.assign(n, 0.0);
  inst.profile.p_load.assign(n, 0.0);
  inst.profile.q_load.assign(n, 0.0);
  inst.profile.p_load[inst.net->index_of(2)] = 10.0;
  if (with_bid) {
    flexmarket::FlexBid b;
    b.bus = 2;
    b.qty_d_up = 5.0;
    b.cost_d_up = 40.0;
    inst.bids.push_back(b);
  }
  inst.formulation = f;
  return inst;
}

}  // namespace toy
