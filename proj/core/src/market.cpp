#include "flexmarket/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "flexmarket/error.hpp"

namespace flexmarket {

namespace {

double row_value(const LinearRow& r, const std::vector<double>& x) {
  double s = 0.0;
  for (const auto& [j, v] : r.terms) s += v * x[static_cast<std::size_t>(j)];
  return s;
}

}  // namespace

ClearingResult clear(const MarketInstance& inst, const ClearOptions& options) {
  const MarketProgram mp = build(inst);
  const RadialNetwork& net = *inst.net;
  const std::size_t n = net.bus_count();
  const double base = net.base_mva;
  const bool socp = mp.formulation == Formulation::kSOCP;

  const SolveReport rep = socp ? solve_socp(mp.program, options.solver) : solve_lp(mp.program, options.solver);
  if (!rep.optimal()) {
    throw ClearingFailure(to_string(mp.formulation) + " clearing failed: " + to_string(rep.status) +
                              (rep.message.empty() ? "" : " (" + rep.message + ")"),
                          rep.status, rep.kkt, rep.iterations);
  }
  const auto& x = rep.primal;
  const VariableLayout& L = mp.layout;
  auto at = [&](int j) { return x[static_cast<std::size_t>(j)]; };

  ClearingResult res;
  res.formulation = mp.formulation;
  res.bids = inst.bids;
  res.diagnostics = {rep.status, rep.iterations, rep.solve_seconds, rep.kkt, rep.dual_objective};
  res.objective = rep.objective;

  for (std::size_t k = 0; k < inst.bids.size(); ++k) {
    Activation a;
    a.bus = inst.bids[k].bus;
    a.p_up = at(L.dp_up(k)) * base;
    a.p_dn = at(L.dp_dn(k)) * base;
    a.d_up = at(L.dd_up(k)) * base;
    a.d_dn = at(L.dd_dn(k)) * base;
    res.activations.push_back(a);
  }

  const double tol = options.binding_tol;
  res.bus_ids.resize(n);
  res.dlmp.resize(n);
  res.voltages.resize(n);
  res.v_squared.resize(n);
  res.q_injection.resize(n);
  res.flows.resize(n);
  if (socp) res.currents_sq.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.bus_ids[i] = net.buses[i].id;
    res.dlmp[i] = rep.equality_duals[static_cast<std::size_t>(mp.p_balance_row[i])] / base;
    const double v = at(L.v(i));
    res.v_squared[i] = v;
    res.voltages[i] = std::sqrt(std::max(v, 0.0));
    res.q_injection[i] = at(L.q(i)) * base;

    const auto [lo, hi] = inst.voltage_band(i);
    const auto vi = static_cast<std::size_t>(L.v(i));
    if (v - lo * lo < tol || rep.lower_bound_duals[vi] / base > tol) res.binding.voltage_lower.push_back(res.bus_ids[i]);
    if (hi * hi - v < tol || rep.upper_bound_duals[vi] / base > tol) res.binding.voltage_upper.push_back(res.bus_ids[i]);

    const Branch& br = net.branch_of(i);
    BranchFlow& f = res.flows[i];
    f.from_bus = br.from_bus;
    f.to_bus = br.to_bus;
    f.interface = net.parent(i) < 0;
    f.p = at(L.p_flow(i)) * base;
    f.q = at(L.q_flow(i)) * base;
    f.s = std::hypot(f.p, f.q);
    f.s_max = inst.capacity(i);
    if (f.s > f.s_max * (1.0 + 1e-6)) {
      throw ConsistencyError("apparent flow " + std::to_string(f.s) + " MVA into bus " +
                             std::to_string(res.bus_ids[i]) + " exceeds capacity " + std::to_string(f.s_max));
    }
    const double smax_pu = f.s_max / base;
    if (socp) {
      res.currents_sq[i] = at(L.l(i));
      const auto& z = rep.cone_duals[static_cast<std::size_t>(mp.flow_cone[i])];
      f.binding = smax_pu - f.s / base < tol * smax_pu || z[0] / base > tol;
    } else {
      const auto first = static_cast<std::size_t>(mp.polygon_first_row[i]);
      for (std::size_t m = 0; m < static_cast<std::size_t>(mp.polygon_sides); ++m) {
        const LinearRow& row = mp.program.inequalities[first + m];
        const double slack = row.rhs - row_value(row, x);
        if (slack < tol * smax_pu || rep.inequality_duals[first + m] / base > tol) f.binding = true;
      }
    }
    if (f.binding) res.binding.lines.push_back(f.to_bus);
  }
  settle(res);
  return res;
}

void settle(ClearingResult& result) {
  const std::size_t n = result.bus_ids.size();
  result.revenues.assign(n, 0.0);
  for (const Activation& a : result.activations) {
    const auto it = std::find(result.bus_ids.begin(), result.bus_ids.end(), a.bus);
    if (it == result.bus_ids.end()) throw InstanceError("activation at unknown bus " + std::to_string(a.bus));
    const auto i = static_cast<std::size_t>(it - result.bus_ids.begin());
    result.revenues[i] += result.dlmp[i] * (a.p_up + a.d_up) - result.dlmp[i] * (a.p_dn + a.d_dn);
  }
}

PhysicsReport verify_physics(const ClearingResult& result, const MarketInstance& inst) {
  const RadialNetwork& net = *inst.net;
  const std::size_t n = net.bus_count();
  const double base = net.base_mva;
  const bool socp = result.formulation == Formulation::kSOCP;
  PhysicsReport rep;
  rep.formulation = result.formulation;

  std::vector<double> inj(n, 0.0);
  for (const Activation& a : result.activations) inj[net.index_of(a.bus)] += (a.p_up - a.p_dn + a.d_up - a.d_dn) / base;
  auto P = [&](std::size_t i) { return result.flows[i].p / base; };
  auto Q = [&](std::size_t i) { return result.flows[i].q / base; };
  auto v_parent = [&](std::size_t i) {
    const int p = net.parent(i);
    return p < 0 ? net.slack_voltage : result.v_squared[static_cast<std::size_t>(p)];
  };

  if (socp) rep.cone_gap.assign(n, 0.0);
  rep.min_cone_gap = socp ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    const Branch& br = net.branch_of(i);
    const double l = socp ? result.currents_sq[i] : 0.0;
    const double v = result.v_squared[i];
    double pb = inj[i] + P(i) - (inst.profile.p_load[i] - inst.profile.p_gen[i]) / base;
    double qb = result.q_injection[i] / base + Q(i);
    for (int c : net.children(i)) {
      pb -= P(static_cast<std::size_t>(c));
      qb -= Q(static_cast<std::size_t>(c));
    }
    double vd = v - v_parent(i) + 2.0 * (br.r * P(i) + br.x * Q(i));
    if (socp) {
      pb -= br.r * l + bus.shunt_g * v;
      qb -= br.x * l + bus.shunt_b * v;
      vd -= (br.r * br.r + br.x * br.x) * l;
      rep.cone_gap[i] = l * v_parent(i) - (P(i) * P(i) + Q(i) * Q(i));
      rep.min_cone_gap = std::min(rep.min_cone_gap, rep.cone_gap[i]);
    }
    rep.p_balance = std::max(rep.p_balance, std::abs(pb));
    rep.q_balance = std::max(rep.q_balance, std::abs(qb));
    rep.v_drop = std::max(rep.v_drop, std::abs(vd));
  }
  return rep;
}

std::vector<LossResidual> lp_loss_residuals(const ClearingResult& lp, const MarketInstance& inst) {
  if (lp.formulation != Formulation::kLP) throw InvalidParameter("loss residuals need an LP result");
  MarketInstance si = inst;
  si.formulation = Formulation::kSOCP;
  const MarketProgram sp = build_socp(si);
  const RadialNetwork& net = *inst.net;
  const std::size_t n = net.bus_count();
  const double base = net.base_mva;
  const VariableLayout& L = sp.layout;

  std::vector<double> x(L.size(), 0.0);
  for (std::size_t k = 0; k < lp.activations.size(); ++k) {
    const Activation& a = lp.activations[k];
    x[static_cast<std::size_t>(L.dp_up(k))] = a.p_up / base;
    x[static_cast<std::size_t>(L.dp_dn(k))] = a.p_dn / base;
    x[static_cast<std::size_t>(L.dd_up(k))] = a.d_up / base;
    x[static_cast<std::size_t>(L.dd_dn(k))] = a.d_dn / base;
  }
  std::vector<double> lhat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double P = lp.flows[i].p / base, Q = lp.flows[i].q / base;
    const int p = net.parent(i);
    const double va = p < 0 ? net.slack_voltage : lp.v_squared[static_cast<std::size_t>(p)];
    lhat[i] = (P * P + Q * Q) / va;
    x[static_cast<std::size_t>(L.q(i))] = lp.q_injection[i] / base;
    x[static_cast<std::size_t>(L.v(i))] = lp.v_squared[i];
    x[static_cast<std::size_t>(L.p_flow(i))] = P;
    x[static_cast<std::size_t>(L.q_flow(i))] = Q;
    x[static_cast<std::size_t>(L.l(i))] = lhat[i];
  }
  std::vector<LossResidual> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LinearRow& row = sp.program.equalities[static_cast<std::size_t>(sp.p_balance_row[i])];
    out[i].bus = net.buses[i].id;
    out[i].residual = row.rhs - row_value(row, x);
    out[i].expected = net.branch_of(i).r * lhat[i] + net.buses[i].shunt_g * lp.v_squared[i];
  }
  return out;
}

nlohmann::json to_json(const ClearingResult& r) {
  nlohmann::json j;
  j["formulation"] = to_string(r.formulation);
  j["objective_eur"] = r.objective;
  j["diagnostics"] = {{"status", to_string(r.diagnostics.status)},
                      {"iterations", r.diagnostics.iterations},
                      {"solve_seconds", r.diagnostics.solve_seconds},
                      {"dual_objective", r.diagnostics.dual_objective},
                      {"kkt", {{"primal", r.diagnostics.kkt.primal},
                               {"dual", r.diagnostics.kkt.dual},
                               {"complementarity", r.diagnostics.kkt.complementarity}}}};
  nlohmann::json buses = nlohmann::json::array();
  for (std::size_t i = 0; i < r.bus_ids.size(); ++i) {
    nlohmann::json b{{"bus", r.bus_ids[i]},
                     {"dlmp", r.dlmp[i]},
                     {"voltage", r.voltages[i]},
                     {"q_injection_mvar", r.q_injection[i]}};
    if (!r.revenues.empty()) b["revenue_eur"] = r.revenues[i];
    buses.push_back(b);
  }
  j["buses"] = buses;
  nlohmann::json acts = nlohmann::json::array();
  for (const Activation& a : r.activations)
    acts.push_back({{"bus", a.bus}, {"p_up", a.p_up}, {"p_dn", a.p_dn}, {"d_up", a.d_up}, {"d_dn", a.d_dn}});
  j["activations_mw"] = acts;
  nlohmann::json flows = nlohmann::json::array();
  for (std::size_t i = 0; i < r.flows.size(); ++i) {
    const BranchFlow& f = r.flows[i];
    nlohmann::json b{{"from_bus", f.from_bus}, {"to_bus", f.to_bus}, {"interface", f.interface},
                     {"p_mw", f.p},          {"q_mvar", f.q},     {"s_mva", f.s},
                     {"s_max_mva", f.s_max}, {"binding", f.binding}};
    if (!r.currents_sq.empty()) b["current_sq_pu"] = r.currents_sq[i];
    flows.push_back(b);
  }
  j["branches"] = flows;
  j["binding"] = {{"lines", r.binding.lines},
                  {"voltage_lower", r.binding.voltage_lower},
                  {"voltage_upper", r.binding.voltage_upper}};
  return j;
}

void write_bus_csv(std::ostream& out, const ClearingResult& r) {
  const std::size_t n = r.bus_ids.size();
  std::vector<Activation> per_bus(n);
  for (const Activation& a : r.activations) {
    const auto i = static_cast<std::size_t>(std::find(r.bus_ids.begin(), r.bus_ids.end(), a.bus) - r.bus_ids.begin());
    per_bus[i].p_up += a.p_up;
    per_bus[i].p_dn += a.p_dn;
    per_bus[i].d_up += a.d_up;
    per_bus[i].d_dn += a.d_dn;
  }
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "bus,dlmp_eur_mwh,voltage_pu,q_injection_mvar,p_up_mw,p_dn_mw,d_up_mw,d_dn_mw,revenue_eur\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << r.bus_ids[i] << ',' << r.dlmp[i] << ',' << r.voltages[i] << ',' << r.q_injection[i] << ','
        << per_bus[i].p_up << ',' << per_bus[i].p_dn << ',' << per_bus[i].d_up << ',' << per_bus[i].d_dn << ','
        << (r.revenues.empty() ? 0.0 : r.revenues[i]) << '\n';
  }
  out.precision(old);
}

void write_branch_csv(std::ostream& out, const ClearingResult& r) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "from_bus,to_bus,interface,p_mw,q_mvar,s_mva,s_max_mva,binding,current_sq_pu\n";
  for (std::size_t i = 0; i < r.flows.size(); ++i) {
    const BranchFlow& f = r.flows[i];
    out << f.from_bus << ',' << f.to_bus << ',' << (f.interface ? 1 : 0) << ',' << f.p << ',' << f.q << ','
        << f.s << ',' << f.s_max << ',' << (f.binding ? 1 : 0) << ',';
    if (!r.currents_sq.empty()) out << r.currents_sq[i];
    out << '\n';
  }
  out.precision(old);
}

}  // namespace flexmarket
