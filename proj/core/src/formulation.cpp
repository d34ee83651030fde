#include "flexmarket/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "flexmarket/error.hpp"

namespace flexmarket {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

LinearRow make_row(SparseTerms terms, double rhs, std::string family, int index, int sub = -1) {
  LinearRow r;
  r.terms = std::move(terms);
  r.rhs = rhs;
  r.tag = RowTag{std::move(family), index, sub};
  return r;
}

}  // namespace

Formulation parse_formulation(const std::string& text) {
  const std::string t = lower(text);
  if (t == "lp") return Formulation::kLP;
  if (t == "socp") return Formulation::kSOCP;
  throw InvalidParameter("unknown formulation '" + text + "' (expected lp or socp)");
}

std::string to_string(Formulation f) { return f == Formulation::kLP ? "LP" : "SOCP"; }

InterfaceMode parse_interface_mode(const std::string& text) {
  const std::string t = lower(text);
  if (t == "free") return InterfaceMode::kFree;
  if (t == "scheduled") return InterfaceMode::kScheduled;
  throw InvalidParameter("unknown interface mode '" + text + "' (expected free or scheduled)");
}

std::string to_string(InterfaceMode m) { return m == InterfaceMode::kFree ? "free" : "scheduled"; }

void MarketInstance::validate() const {
  if (!net) throw InstanceError("market instance has no network");
  if (!(v_lo > 0.0) || !(v_lo <= v_hi))
    throw InvalidParameter("voltage band requires 0 < v_lo <= v_hi");
  for (const auto& [id, band] : v_overrides) {
    if (!net->has_bus(id)) throw InstanceError("voltage override at unknown bus " + std::to_string(id));
    if (!(band.first > 0.0) || !(band.first <= band.second))
      throw InvalidParameter("voltage override at bus " + std::to_string(id) + " is not a valid band");
  }
  if (polygon_sides < 4 || polygon_sides % 2 != 0)
    throw InvalidParameter("polygon needs an even side count of at least 4");
  const std::size_t n = net->bus_count();
  if (profile.p_load.size() != n || profile.p_gen.size() != n || profile.q_load.size() != n)
    throw InstanceError("base profile does not match the network size");
  for (const FlexBid& b : bids) {
    if (!net->has_bus(b.bus)) throw InstanceError("bid at unknown bus " + std::to_string(b.bus));
    for (double v : {b.qty_p_up, b.qty_p_dn, b.qty_d_up, b.qty_d_dn, b.cost_p_up, b.cost_p_dn,
                     b.cost_d_up, b.cost_d_dn}) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InstanceError("bid at bus " + std::to_string(b.bus) + " has a negative or non-finite field");
    }
  }
  for (const auto& [id, cap] : line_capacity) {
    if (!net->has_bus(id)) throw InstanceError("capacity override for unknown bus " + std::to_string(id));
    if (!(cap > 0.0)) throw InvalidParameter("line capacity must be positive");
  }
  if (q_widen && !(*q_widen >= 0.0)) throw InvalidParameter("reactive widening factor must be >= 0");
}

std::pair<double, double> MarketInstance::voltage_band(std::size_t i) const {
  const auto it = v_overrides.find(net->buses[i].id);
  if (it != v_overrides.end()) return it->second;
  return {v_lo, v_hi};
}

double MarketInstance::capacity(std::size_t i) const {
  const auto it = line_capacity.find(net->buses[i].id);
  if (it != line_capacity.end()) return it->second;
  return net->branch_of(i).s_max;
}

std::vector<PolygonEdge> polygon_edges(int sides) {
  if (sides < 4 || sides % 2 != 0) throw InvalidParameter("polygon needs an even side count of at least 4");
  std::vector<PolygonEdge> edges(static_cast<std::size_t>(sides));
  const double pi = std::numbers::pi;
  const double delta = -std::cos(pi / sides);
  for (int m = 0; m < sides; ++m) {
    const double phi = (2.0 * m + 1.0) * pi / sides;
    edges[static_cast<std::size_t>(m)] = {std::cos(phi), std::sin(phi), delta};
  }
  return edges;
}

BaseFlow base_power_flow(const RadialNetwork& net, const BaseProfile& profile, Formulation f) {
  const std::size_t n = net.bus_count();
  BaseFlow bf;
  bf.p.assign(n, 0.0);
  bf.q.assign(n, 0.0);
  bf.v.assign(n, net.slack_voltage);
  bf.l.assign(n, 0.0);
  const auto& order = net.topological_order();
  const bool lossy = f == Formulation::kSOCP;
  auto parent_v = [&](std::size_t i) {
    const int p = net.parent(i);
    return p < 0 ? net.slack_voltage : bf.v[static_cast<std::size_t>(p)];
  };
  for (int it = 0; it < 500; ++it) {
    bf.iterations = it + 1;
    for (auto r = order.rbegin(); r != order.rend(); ++r) {
      const auto i = static_cast<std::size_t>(*r);
      const Bus& b = net.buses[i];
      const Branch& br = net.branch_of(i);
      double p = net.to_pu(profile.p_load[i] - profile.p_gen[i]);
      double q = net.to_pu(profile.q_load[i]);
      if (lossy) {
        p += b.shunt_g * bf.v[i] + br.r * bf.l[i];
        q += b.shunt_b * bf.v[i] + br.x * bf.l[i];
      }
      for (int c : net.children(i)) {
        p += bf.p[static_cast<std::size_t>(c)];
        q += bf.q[static_cast<std::size_t>(c)];
      }
      bf.p[i] = p;
      bf.q[i] = q;
    }
    double change = 0.0;
    for (int idx : order) {
      const auto i = static_cast<std::size_t>(idx);
      const Branch& br = net.branch_of(i);
      const double va = parent_v(i);
      double l = 0.0;
      if (lossy) {
        l = (bf.p[i] * bf.p[i] + bf.q[i] * bf.q[i]) / va;
        change = std::max(change, std::abs(l - bf.l[i]));
        bf.l[i] = l;
      }
      const double v = va - 2.0 * (br.r * bf.p[i] + br.x * bf.q[i]) + (br.r * br.r + br.x * br.x) * l;
      change = std::max(change, std::abs(v - bf.v[i]));
      bf.v[i] = v;
      if (!(v > 0.0)) throw SolveFailure("base power flow collapsed (non-positive voltage)");
    }
    if (!lossy) {
      for (std::size_t i = 0; i < n; ++i) {
        const double va = parent_v(i);
        bf.l[i] = (bf.p[i] * bf.p[i] + bf.q[i] * bf.q[i]) / va;
      }
      break;
    }
    if (change < 1e-14) break;
    if (it == 499) throw SolveFailure("base power flow did not converge");
  }
  return bf;
}

namespace {

MarketProgram build_common(const MarketInstance& inst, Formulation f) {
  inst.validate();
  const RadialNetwork& net = *inst.net;
  const std::size_t n = net.bus_count();
  const bool socp = f == Formulation::kSOCP;
  const double base = net.base_mva;

  MarketProgram mp;
  mp.formulation = f;
  mp.layout.bids = inst.bids.size();
  mp.layout.buses = n;
  mp.layout.has_current = socp;
  const VariableLayout& L = mp.layout;
  ConicProgram& prog = mp.program;

  // Activations; objective coefficients in EUR per p.u. (costs x base MVA).
  for (std::size_t k = 0; k < inst.bids.size(); ++k) {
    const FlexBid& b = inst.bids[k];
    mp.bid_bus.push_back(net.index_of(b.bus));
    const std::string s = "[" + std::to_string(b.bus) + "]";
    prog.add_variable("dp_up" + s, 0.0, b.qty_p_up / base, b.cost_p_up * base);
    prog.add_variable("dp_dn" + s, 0.0, b.qty_p_dn / base, -b.cost_p_dn * base);
    prog.add_variable("dd_up" + s, 0.0, b.qty_d_up / base, b.cost_d_up * base);
    prog.add_variable("dd_dn" + s, 0.0, b.qty_d_dn / base, -b.cost_d_dn * base);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ql = inst.profile.q_load[i] / base;
    const std::string s = "[" + std::to_string(net.buses[i].id) + "]";
    if (inst.q_widen) {
      const double w = (1.0 + *inst.q_widen) * std::abs(ql);
      prog.add_variable("q" + s, -w, w);
    } else {
      prog.add_variable("q" + s, -ql, -ql);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto [lo, hi] = inst.voltage_band(i);
    prog.add_variable("v[" + std::to_string(net.buses[i].id) + "]", lo * lo, hi * hi);
  }
  const std::size_t root = net.root();
  double scheduled = 0.0;
  if (inst.interface_mode == InterfaceMode::kScheduled) {
    scheduled = base_power_flow(net, inst.profile, f).p[root];
    mp.scheduled_import = scheduled;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string s = "[" + std::to_string(net.buses[i].id) + "]";
    if (i == root && inst.interface_mode == InterfaceMode::kScheduled) {
      prog.add_variable("P" + s, scheduled, scheduled);
    } else {
      prog.add_variable("P" + s);
    }
  }
  for (std::size_t i = 0; i < n; ++i) prog.add_variable("Q[" + std::to_string(net.buses[i].id) + "]");
  if (socp) {
    for (std::size_t i = 0; i < n; ++i) {
      const Branch& br = net.branch_of(i);
      double ub = kInf;
      if (br.r == 0.0 && br.x == 0.0) {
        // Zero impedance leaves l otherwise unconstrained; cap it at the largest
        // current the flow limit allows.
        const int p = net.parent(i);
        const double va_min = p < 0 ? net.slack_voltage : std::pow(inst.voltage_band(static_cast<std::size_t>(p)).first, 2);
        const double smax = inst.capacity(i) / base;
        ub = smax * smax / va_min;
      }
      prog.add_variable("l[" + std::to_string(net.buses[i].id) + "]", 0.0, ub);
    }
  }

  std::vector<std::vector<std::size_t>> bids_at(n);
  for (std::size_t k = 0; k < inst.bids.size(); ++k) bids_at[mp.bid_bus[k]].push_back(k);

  mp.p_balance_row.assign(n, -1);
  mp.q_balance_row.assign(n, -1);
  mp.v_drop_row.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    const Branch& br = net.branch_of(i);
    SparseTerms t;
    for (std::size_t k : bids_at[i]) {
      t.emplace_back(L.dp_up(k), 1.0);
      t.emplace_back(L.dp_dn(k), -1.0);
      t.emplace_back(L.dd_up(k), 1.0);
      t.emplace_back(L.dd_dn(k), -1.0);
    }
    t.emplace_back(L.p_flow(i), 1.0);
    for (int c : net.children(i)) t.emplace_back(L.p_flow(static_cast<std::size_t>(c)), -1.0);
    if (socp) {
      if (br.r != 0.0) t.emplace_back(L.l(i), -br.r);
      if (bus.shunt_g != 0.0) t.emplace_back(L.v(i), -bus.shunt_g);
    }
    const double rhs = (inst.profile.p_load[i] - inst.profile.p_gen[i]) / base;
    mp.p_balance_row[i] = static_cast<int>(prog.equalities.size());
    prog.equalities.push_back(make_row(std::move(t), rhs, "p_balance", static_cast<int>(i)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    const Branch& br = net.branch_of(i);
    SparseTerms t{{L.q(i), 1.0}, {L.q_flow(i), 1.0}};
    for (int c : net.children(i)) t.emplace_back(L.q_flow(static_cast<std::size_t>(c)), -1.0);
    if (socp) {
      if (br.x != 0.0) t.emplace_back(L.l(i), -br.x);
      if (bus.shunt_b != 0.0) t.emplace_back(L.v(i), -bus.shunt_b);
    }
    mp.q_balance_row[i] = static_cast<int>(prog.equalities.size());
    prog.equalities.push_back(make_row(std::move(t), 0.0, "q_balance", static_cast<int>(i)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Branch& br = net.branch_of(i);
    SparseTerms t{{L.v(i), 1.0}};
    double rhs = 0.0;
    const int p = net.parent(i);
    if (p < 0) {
      rhs = net.slack_voltage;
    } else {
      t.emplace_back(L.v(static_cast<std::size_t>(p)), -1.0);
    }
    if (br.r != 0.0) t.emplace_back(L.p_flow(i), 2.0 * br.r);
    if (br.x != 0.0) t.emplace_back(L.q_flow(i), 2.0 * br.x);
    if (socp && (br.r != 0.0 || br.x != 0.0)) t.emplace_back(L.l(i), -(br.r * br.r + br.x * br.x));
    mp.v_drop_row[i] = static_cast<int>(prog.equalities.size());
    prog.equalities.push_back(make_row(std::move(t), rhs, "v_drop", static_cast<int>(i)));
  }

  if (!socp) {
    const auto edges = polygon_edges(inst.polygon_sides);
    mp.polygon_sides = inst.polygon_sides;
    mp.polygon_first_row.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      const double smax = inst.capacity(i) / base;
      mp.polygon_first_row[i] = static_cast<int>(prog.inequalities.size());
      for (std::size_t m = 0; m < edges.size(); ++m) {
        const PolygonEdge& e = edges[m];
        SparseTerms t;
        if (e.alpha != 0.0) t.emplace_back(L.p_flow(i), e.alpha);
        if (e.beta != 0.0) t.emplace_back(L.q_flow(i), e.beta);
        prog.inequalities.push_back(
            make_row(std::move(t), -e.delta * smax, "flow_polygon", static_cast<int>(i), static_cast<int>(m)));
      }
    }
  } else {
    mp.current_cone.assign(n, -1);
    mp.flow_cone.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      // P^2 + Q^2 <= l v_A  as  ||(2P, 2Q, l - v_A)|| <= l + v_A
      const int p = net.parent(i);
      ConeBlock c;
      c.tag = RowTag{"current_cone", static_cast<int>(i), -1};
      if (p < 0) {
        c.rows.push_back(make_row({{L.l(i), 1.0}}, net.slack_voltage, "current_cone", static_cast<int>(i), 0));
      } else {
        c.rows.push_back(make_row({{L.l(i), 1.0}, {L.v(static_cast<std::size_t>(p)), 1.0}}, 0.0, "current_cone",
                                  static_cast<int>(i), 0));
      }
      c.rows.push_back(make_row({{L.p_flow(i), 2.0}}, 0.0, "current_cone", static_cast<int>(i), 1));
      c.rows.push_back(make_row({{L.q_flow(i), 2.0}}, 0.0, "current_cone", static_cast<int>(i), 2));
      if (p < 0) {
        c.rows.push_back(make_row({{L.l(i), 1.0}}, -net.slack_voltage, "current_cone", static_cast<int>(i), 3));
      } else {
        c.rows.push_back(make_row({{L.l(i), 1.0}, {L.v(static_cast<std::size_t>(p)), -1.0}}, 0.0, "current_cone",
                                  static_cast<int>(i), 3));
      }
      mp.current_cone[i] = static_cast<int>(prog.cones.size());
      prog.cones.push_back(std::move(c));

      ConeBlock fc;
      fc.tag = RowTag{"flow_cone", static_cast<int>(i), -1};
      fc.rows.push_back(make_row({}, inst.capacity(i) / base, "flow_cone", static_cast<int>(i), 0));
      fc.rows.push_back(make_row({{L.p_flow(i), 1.0}}, 0.0, "flow_cone", static_cast<int>(i), 1));
      fc.rows.push_back(make_row({{L.q_flow(i), 1.0}}, 0.0, "flow_cone", static_cast<int>(i), 2));
      mp.flow_cone[i] = static_cast<int>(prog.cones.size());
      prog.cones.push_back(std::move(fc));
    }
  }
  return mp;
}

}  // namespace

MarketProgram build_lp(const MarketInstance& inst) { return build_common(inst, Formulation::kLP); }
MarketProgram build_socp(const MarketInstance& inst) { return build_common(inst, Formulation::kSOCP); }

MarketProgram build(const MarketInstance& inst) {
  return inst.formulation == Formulation::kLP ? build_lp(inst) : build_socp(inst);
}

nlohmann::json market_dump(const MarketProgram& mp) {
  nlohmann::json j = program_to_json(mp.program);
  j["market"] = {{"formulation", to_string(mp.formulation)},
                 {"bids", mp.layout.bids},
                 {"buses", mp.layout.buses},
                 {"p_balance_rows", mp.p_balance_row},
                 {"q_balance_rows", mp.q_balance_row},
                 {"v_drop_rows", mp.v_drop_row},
                 {"polygon_sides", mp.polygon_sides},
                 {"scheduled_import_pu", mp.scheduled_import}};
  return j;
}

}  // namespace flexmarket
