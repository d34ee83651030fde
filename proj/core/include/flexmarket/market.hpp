#pragma once

// Clearing pipeline: build, solve, and translate the optimum into market
// quantities (activations, nodal prices, flows, voltages, revenues).

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexmarket/error.hpp"
#include "flexmarket/formulation.hpp"
#include "flexmarket/solver.hpp"

namespace flexmarket {

/// Thrown by clear() when the solver does not reach an optimum.
class ClearingFailure : public SolveFailure {
 public:
  ClearingFailure(const std::string& what, SolveStatus status, KktResiduals kkt, int iterations)
      : SolveFailure(what), status_(status), kkt_(kkt), iterations_(iterations) {}
  SolveStatus status() const noexcept { return status_; }
  const KktResiduals& kkt() const noexcept { return kkt_; }
  int iterations() const noexcept { return iterations_; }

 private:
  SolveStatus status_;
  KktResiduals kkt_;
  int iterations_;
};

struct Activation {  // MW
  int bus = 0;
  double p_up = 0.0;
  double p_dn = 0.0;
  double d_up = 0.0;
  double d_dn = 0.0;
};

struct BranchFlow {
  int from_bus = 0;
  int to_bus = 0;
  bool interface = false;
  double p = 0.0;  // MW
  double q = 0.0;  // MVAr
  double s = 0.0;  // MVA
  double s_max = 0.0;
  bool binding = false;
};

struct BindingSet {
  std::vector<int> lines;          // to-bus ids of binding branches
  std::vector<int> voltage_lower;  // bus ids
  std::vector<int> voltage_upper;
};

struct ClearingDiagnostics {
  SolveStatus status = SolveStatus::kOptimal;
  int iterations = 0;
  double solve_seconds = 0.0;
  KktResiduals kkt;
  double dual_objective = 0.0;
};

/// Per-bus vectors are indexed like RadialNetwork::buses; flows[i] is the
/// branch feeding bus i (the interface for the root).
struct ClearingResult {
  Formulation formulation = Formulation::kLP;
  std::vector<int> bus_ids;
  std::vector<FlexBid> bids;
  std::vector<Activation> activations;  // aligned with bids
  std::vector<double> dlmp;             // EUR/MWh
  std::vector<BranchFlow> flows;
  std::vector<double> voltages;         // magnitude, p.u.
  std::vector<double> v_squared;        // p.u.^2
  std::vector<double> q_injection;      // MVAr
  std::vector<double> currents_sq;      // p.u., SOCP only
  double objective = 0.0;               // EUR
  std::vector<double> revenues;         // EUR per bus, filled by settle()
  BindingSet binding;
  ClearingDiagnostics diagnostics;
};

struct ClearOptions {
  SolverOptions solver;
  double binding_tol = 1e-6;
};

/// Throws ClearingFailure when the solve is not optimal and ConsistencyError when
/// an apparent flow exceeds its capacity by more than 1e-6 relative.
ClearingResult clear(const MarketInstance& inst, const ClearOptions& options = {});

/// revenue_i = dlmp_i (p_up + d_up) - dlmp_i (p_dn + d_dn), summed over the bids at bus i.
void settle(ClearingResult& result);

struct PhysicsReport {
  Formulation formulation = Formulation::kLP;
  double p_balance = 0.0;  // max |residual|, p.u.
  double q_balance = 0.0;
  double v_drop = 0.0;
  std::vector<double> cone_gap;  // l v_A - (P^2 + Q^2) per bus index, SOCP only
  double min_cone_gap = 0.0;
};

PhysicsReport verify_physics(const ClearingResult& result, const MarketInstance& inst);

/// One row per bus index: the shortfall of the branch-flow real balance at the
/// LP point with currents set to (P^2 + Q^2) / v_A, and the dropped loss and
/// shunt terms r l + g v that should explain it.
struct LossResidual {
  int bus = 0;
  double residual = 0.0;
  double expected = 0.0;
};
std::vector<LossResidual> lp_loss_residuals(const ClearingResult& lp, const MarketInstance& inst);

nlohmann::json to_json(const ClearingResult& result);
void write_bus_csv(std::ostream& out, const ClearingResult& result);
void write_branch_csv(std::ostream& out, const ClearingResult& result);

}  // namespace flexmarket
