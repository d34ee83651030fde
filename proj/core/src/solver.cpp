#include "flexmarket/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "flexmarket/error.hpp"

namespace flexmarket {

int ConicProgram::add_variable(std::string name, double lb, double ub, double c) {
  var_names.push_back(std::move(name));
  lower.push_back(lb);
  upper.push_back(ub);
  cost.push_back(c);
  return num_vars() - 1;
}

void ConicProgram::validate() const {
  const auto n = cost.size();
  if (lower.size() != n || upper.size() != n || var_names.size() != n)
    throw DimensionError("program vectors disagree on the variable count");
  auto check = [&](const LinearRow& r) {
    for (const auto& [j, v] : r.terms) {
      if (j < 0 || static_cast<std::size_t>(j) >= n)
        throw DimensionError("row references variable " + std::to_string(j) + " out of range");
      if (!std::isfinite(v)) throw InvalidParameter("non-finite coefficient in row " + r.tag.family);
    }
    if (!std::isfinite(r.rhs)) throw InvalidParameter("non-finite right-hand side in row " + r.tag.family);
  };
  for (const auto& r : equalities) check(r);
  for (const auto& r : inequalities) check(r);
  for (const auto& c : cones) {
    if (c.rows.empty()) throw DimensionError("empty cone block");
    for (const auto& r : c.rows) check(r);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(cost[j])) throw InvalidParameter("non-finite cost");
    if (std::isnan(lower[j]) || std::isnan(upper[j])) throw InvalidParameter("NaN bound");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kUnbounded: return "unbounded";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

void SolverOptions::validate() const {
  if (!(tol > 0.0) || tol > 1e-4) throw InvalidParameter("solver tolerance must lie in (0, 1e-4]");
  if (max_iter < 1) throw InvalidParameter("max_iter must be positive");
}

SolveReport solve_lp(const ConicProgram& program, const SolverOptions& options) {
  if (!program.cones.empty()) throw InvalidParameter("solve_lp received a program with cones");
  return InteriorPointSolver(options).solve(program);
}

SolveReport solve_socp(const ConicProgram& program, const SolverOptions& options) {
  return InteriorPointSolver(options).solve(program);
}

KktResiduals kkt_residuals(const ConicProgram& p, const SolveReport& rep) {
  const auto n = static_cast<std::size_t>(p.num_vars());
  KktResiduals k;
  if (rep.primal.size() != n) throw DimensionError("primal vector size mismatch");
  const auto& x = rep.primal;
  auto dot = [&](const LinearRow& r) {
    double s = 0.0;
    for (const auto& [j, v] : r.terms) s += v * x[static_cast<std::size_t>(j)];
    return s;
  };
  double rhs_norm = 0.0;
  for (const auto& r : p.equalities) rhs_norm = std::max(rhs_norm, std::abs(r.rhs));
  for (const auto& r : p.inequalities) rhs_norm = std::max(rhs_norm, std::abs(r.rhs));
  for (std::size_t j = 0; j < n; ++j) {
    if (std::isfinite(p.lower[j])) rhs_norm = std::max(rhs_norm, std::abs(p.lower[j]));
    if (std::isfinite(p.upper[j])) rhs_norm = std::max(rhs_norm, std::abs(p.upper[j]));
  }
  for (const auto& c : p.cones)
    for (const auto& r : c.rows) rhs_norm = std::max(rhs_norm, std::abs(r.rhs));

  double pres = 0.0, comp = 0.0;
  double dual_obj = p.cost_constant;
  std::vector<double> grad(p.cost.begin(), p.cost.end());
  for (std::size_t r = 0; r < p.equalities.size(); ++r) {
    const auto& row = p.equalities[r];
    pres = std::max(pres, std::abs(dot(row) - row.rhs));
    const double lam = rep.equality_duals.at(r);
    for (const auto& [j, v] : row.terms) grad[static_cast<std::size_t>(j)] -= lam * v;
    dual_obj += lam * row.rhs;
  }
  for (std::size_t r = 0; r < p.inequalities.size(); ++r) {
    const auto& row = p.inequalities[r];
    const double slack = row.rhs - dot(row);
    pres = std::max(pres, -slack);
    const double zr = rep.inequality_duals.at(r);
    pres = std::max(pres, -zr);
    for (const auto& [j, v] : row.terms) grad[static_cast<std::size_t>(j)] += zr * v;
    dual_obj -= zr * row.rhs;
    comp += zr * slack;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double zl = rep.lower_bound_duals.at(j), zu = rep.upper_bound_duals.at(j);
    if (std::isfinite(p.lower[j])) {
      pres = std::max(pres, p.lower[j] - x[j]);
      grad[j] -= zl;
      dual_obj += zl * p.lower[j];
      comp += zl * (x[j] - p.lower[j]);
    }
    if (std::isfinite(p.upper[j])) {
      pres = std::max(pres, x[j] - p.upper[j]);
      grad[j] += zu;
      dual_obj -= zu * p.upper[j];
      comp += zu * (p.upper[j] - x[j]);
    }
  }
  for (std::size_t c = 0; c < p.cones.size(); ++c) {
    const auto& cb = p.cones[c];
    const auto& zc = rep.cone_duals.at(c);
    std::vector<double> u(cb.rows.size());
    for (std::size_t i = 0; i < cb.rows.size(); ++i) {
      u[i] = dot(cb.rows[i]) + cb.rows[i].rhs;
      for (const auto& [j, v] : cb.rows[i].terms) grad[static_cast<std::size_t>(j)] -= zc[i] * v;
      dual_obj -= zc[i] * cb.rows[i].rhs;
      comp += zc[i] * u[i];
    }
    double t = 0.0, tz = 0.0;
    for (std::size_t i = 1; i < u.size(); ++i) {
      t += u[i] * u[i];
      tz += zc[i] * zc[i];
    }
    pres = std::max(pres, std::sqrt(t) - u[0]);
    pres = std::max(pres, std::sqrt(tz) - zc[0]);
  }
  double cn = 0.0, dres = 0.0, obj = p.cost_constant;
  for (std::size_t j = 0; j < n; ++j) {
    cn = std::max(cn, std::abs(p.cost[j]));
    dres = std::max(dres, std::abs(grad[j]));
    obj += p.cost[j] * x[j];
  }
  k.primal = pres / (1.0 + rhs_norm);
  k.dual = dres / (1.0 + cn);
  k.complementarity = std::max(std::abs(comp), std::abs(obj - dual_obj)) / (1.0 + std::abs(obj));
  return k;
}

namespace {

nlohmann::json bound_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double bound_from(const nlohmann::json& j, double inf) { return j.is_null() ? inf : j.get<double>(); }

nlohmann::json tag_json(const RowTag& t) {
  nlohmann::json j{{"family", t.family}};
  if (t.index >= 0) j["index"] = t.index;
  if (t.sub >= 0) j["sub"] = t.sub;
  return j;
}

RowTag tag_from(const nlohmann::json& j) {
  RowTag t;
  if (!j.is_object()) return t;
  t.family = j.value("family", "");
  t.index = j.value("index", -1);
  t.sub = j.value("sub", -1);
  return t;
}

nlohmann::json row_json(const LinearRow& r, const char* rhs_key) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [j, v] : r.terms) terms.push_back({j, v});
  return {{"tag", tag_json(r.tag)}, {"terms", terms}, {rhs_key, r.rhs}};
}

LinearRow row_from(const nlohmann::json& j, const char* rhs_key) {
  LinearRow r;
  r.tag = tag_from(j.value("tag", nlohmann::json()));
  for (const auto& t : j.at("terms")) r.terms.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
  r.rhs = j.value(rhs_key, 0.0);
  return r;
}

}  // namespace

nlohmann::json program_to_json(const ConicProgram& p) {
  nlohmann::json j;
  j["format"] = "flexmarket-conic-1";
  j["variables"] = nlohmann::json::array();
  for (int k = 0; k < p.num_vars(); ++k) {
    const auto u = static_cast<std::size_t>(k);
    j["variables"].push_back({{"name", p.var_names[u]},
                              {"cost", p.cost[u]},
                              {"lower", bound_json(p.lower[u])},
                              {"upper", bound_json(p.upper[u])}});
  }
  j["cost_constant"] = p.cost_constant;
  j["equalities"] = nlohmann::json::array();
  for (const auto& r : p.equalities) j["equalities"].push_back(row_json(r, "rhs"));
  j["inequalities"] = nlohmann::json::array();
  for (const auto& r : p.inequalities) j["inequalities"].push_back(row_json(r, "rhs"));
  j["cones"] = nlohmann::json::array();
  for (const auto& c : p.cones) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : c.rows) rows.push_back(row_json(r, "constant"));
    j["cones"].push_back({{"tag", tag_json(c.tag)}, {"rows", rows}});
  }
  return j;
}

ConicProgram program_from_json(const nlohmann::json& j) {
  ConicProgram p;
  try {
    for (const auto& v : j.at("variables")) {
      p.add_variable(v.value("name", "x" + std::to_string(p.num_vars())),
                     bound_from(v.value("lower", nlohmann::json()), -kInf),
                     bound_from(v.value("upper", nlohmann::json()), kInf), v.value("cost", 0.0));
    }
    p.cost_constant = j.value("cost_constant", 0.0);
    for (const auto& r : j.value("equalities", nlohmann::json::array())) p.equalities.push_back(row_from(r, "rhs"));
    for (const auto& r : j.value("inequalities", nlohmann::json::array()))
      p.inequalities.push_back(row_from(r, "rhs"));
    for (const auto& c : j.value("cones", nlohmann::json::array())) {
      ConeBlock cb;
      cb.tag = tag_from(c.value("tag", nlohmann::json()));
      for (const auto& r : c.at("rows")) cb.rows.push_back(row_from(r, "constant"));
      p.cones.push_back(std::move(cb));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(std::string("malformed program JSON: ") + e.what());
  }
  p.validate();
  return p;
}

void write_trace_csv(std::ostream& out, const std::vector<IterationLog>& trace) {
  out << "iteration,primal_objective,dual_objective,primal_residual,dual_residual,gap,mu,tau,kappa,step,sigma\n";
  out << std::setprecision(10);
  for (const auto& t : trace) {
    out << t.iteration << ',' << t.primal_objective << ',' << t.dual_objective << ','
        << t.primal_residual << ',' << t.dual_residual << ',' << t.gap << ',' << t.mu << ','
        << t.tau << ',' << t.kappa << ',' << t.step << ',' << t.sigma << '\n';
  }
}

}  // namespace flexmarket
