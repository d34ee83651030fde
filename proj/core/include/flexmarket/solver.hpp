#pragma once

// Conic programs (linear rows plus second-order cones) and the embedded
// primal-dual interior-point solver.

#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace flexmarket {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Identifies the origin of a row: `family` names the constraint group and
/// `index` / `sub` locate it (bus index, polygon edge, ...).
struct RowTag {
  std::string family;
  int index = -1;
  int sub = -1;
};

using SparseTerms = std::vector<std::pair<int, double>>;

/// a·x (sense) rhs. For cone rows `rhs` is the additive constant.
struct LinearRow {
  SparseTerms terms;
  double rhs = 0.0;
  RowTag tag;
};

/// Second-order cone u0 >= ||(u1, ..., uk)|| with u_j = rows[j].terms·x + rows[j].rhs.
struct ConeBlock {
  std::vector<LinearRow> rows;
  RowTag tag;
};

/// minimize c·x + c0 subject to equalities (a·x = rhs), inequalities
/// (a·x <= rhs), cones and variable bounds.
struct ConicProgram {
  std::vector<std::string> var_names;
  std::vector<double> cost;
  double cost_constant = 0.0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<LinearRow> equalities;
  std::vector<LinearRow> inequalities;
  std::vector<ConeBlock> cones;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int add_variable(std::string name, double lb = -kInf, double ub = kInf, double c = 0.0);
  /// Throws DimensionError on out-of-range indices or mismatched vector sizes.
  void validate() const;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

std::string to_string(SolveStatus s);

struct KktResiduals {
  double primal = 0.0;  // max-norm violation of equalities, inequalities, bounds and cones
  double dual = 0.0;    // max-norm of the stationarity residual
  double complementarity = 0.0;
};

struct IterationLog {
  int iteration = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double mu = 0.0;
  double tau = 0.0;
  double kappa = 0.0;
  double step = 0.0;
  double sigma = 0.0;
};

/// Dual values follow the shadow-price convention: an equality dual is
/// d(objective)/d(rhs); inequality, bound and cone duals are non-negative.
struct SolveReport {
  SolveStatus status = SolveStatus::kNumericalFailure;
  std::vector<double> primal;
  std::vector<double> equality_duals;
  std::vector<double> inequality_duals;
  std::vector<double> lower_bound_duals;
  std::vector<double> upper_bound_duals;
  std::vector<std::vector<double>> cone_duals;
  double objective = 0.0;
  double dual_objective = 0.0;
  KktResiduals kkt;
  int iterations = 0;
  double solve_seconds = 0.0;
  std::string message;
  std::vector<IterationLog> trace;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 200;
  bool equilibrate = true;
  bool presolve = true;
  bool record_trace = false;

  void validate() const;
};

class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual SolveReport solve(const ConicProgram& program) const = 0;
  virtual std::string name() const = 0;
};

/// Homogeneous self-dual interior-point method with Nesterov-Todd scaling and
/// Mehrotra predictor-corrector steps.
class InteriorPointSolver final : public ConicSolver {
 public:
  explicit InteriorPointSolver(SolverOptions options = {});
  SolveReport solve(const ConicProgram& program) const override;
  std::string name() const override { return "ipm"; }
  const SolverOptions& options() const { return options_; }

 private:
  SolverOptions options_;
};

/// Rejects programs with cones.
SolveReport solve_lp(const ConicProgram& program, const SolverOptions& options = {});
SolveReport solve_socp(const ConicProgram& program, const SolverOptions& options = {});

/// KKT residuals of a candidate primal/dual pair measured on the original program.
KktResiduals kkt_residuals(const ConicProgram& program, const SolveReport& report);

/// Debug dump format shared with the reference-solver scripts.
nlohmann::json program_to_json(const ConicProgram& program);
ConicProgram program_from_json(const nlohmann::json& j);

void write_trace_csv(std::ostream& out, const std::vector<IterationLog>& trace);

}  // namespace flexmarket
