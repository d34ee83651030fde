#pragma once

// LP-vs-SOCP comparisons: deterministic RMSE reports and Monte Carlo moments.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexmarket/bids.hpp"
#include "flexmarket/market.hpp"

namespace flexmarket {

/// Throws DimensionError on empty or mismatched inputs.
double rmse(const std::vector<double>& a, const std::vector<double>& b);

struct RmseSet {
  double dlmp = 0.0;     // EUR/MWh
  double voltage = 0.0;  // p.u.
  double flow = 0.0;     // MVA
  double revenue = 0.0;  // EUR
};

struct ComparisonReport {
  std::string case_label;
  RmseSet rmse;
  /// rmse divided field-wise by a reference report (NaN where the reference is zero).
  std::optional<RmseSet> rmse_normalized;
  /// Largest |lp - socp| / |socp| DLMP gap over buses with a nonzero SOCP price.
  int max_dlmp_dev_bus = -1;
  double max_dlmp_dev_percent = 0.0;
  double mean_flow = 0.0;  // mean SOCP apparent flow over branches carrying flow, MVA
  double lp_objective = 0.0;
  double socp_objective = 0.0;
  std::vector<int> lp_binding_lines;
  std::vector<int> socp_binding_lines;
};

/// Thrown when one of the two clearings of a comparison does not reach an optimum.
class ComparisonError : public ClearingFailure {
 public:
  ComparisonError(const std::string& label, const ClearingFailure& cause)
      : ClearingFailure(label + ": " + cause.what(), cause.status(), cause.kkt(), cause.iterations()) {}
};

ComparisonReport compare_deterministic(const ClearingResult& lp, const ClearingResult& socp,
                                       const std::string& label,
                                       const ComparisonReport* reference = nullptr);

/// Clears `inst` under both formulations and compares. Throws ComparisonError.
ComparisonReport compare_instance(const MarketInstance& inst, const std::string& label,
                                  const ComparisonReport* reference = nullptr,
                                  const ClearOptions& options = {});

/// Divides every field of `report.rmse` by the reference's.
void normalize(ComparisonReport& report, const ComparisonReport& reference);

/// Per-entity moments of a sample matrix (rows are samples).
struct Moments {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
  std::vector<double> cv;      // stddev / |mean|; infinite where the mean is zero and stddev is not
  std::vector<char> flagged;   // |mean| below flag_fraction of the mean |mean| over entities
};

Moments compute_moments(const std::vector<std::vector<double>>& samples, double flag_fraction = 1e-3);

struct MonteCarloStats {
  Formulation formulation = Formulation::kLP;
  std::uint64_t seed = 0;
  int samples_attempted = 0;
  int samples_used = 0;
  int samples_failed = 0;
  std::vector<int> failed_samples;  // sample indices
  std::vector<int> bus_ids;         // DLMP entities
  std::vector<int> branch_ids;      // flow entities, by to-bus id (root = interface)
  std::vector<std::vector<double>> dlmp_samples;  // used samples in index order
  std::vector<std::vector<double>> flow_samples;
  Moments dlmp;
  Moments flow;
};

struct MonteCarloOptions {
  ClearOptions clear;
  unsigned threads = 0;  // 0: hardware concurrency
  double max_failure_fraction = 0.05;
  double flag_fraction = 1e-3;
};

/// Thrown when more than the allowed fraction of samples fails.
class StatisticalFailure : public Error {
 public:
  StatisticalFailure(const std::string& what, int attempted, int failed)
      : Error(what), attempted_(attempted), failed_(failed) {}
  int attempted() const noexcept { return attempted_; }
  int failed() const noexcept { return failed_; }

 private:
  int attempted_;
  int failed_;
};

struct MonteCarloResult {
  MonteCarloStats lp;
  MonteCarloStats socp;
};

/// Perturbs the bids of `base` for samples 0..cfg.samples-1 and clears each under
/// both formulations. A sample that fails under either formulation is excluded
/// from both. Results do not depend on the thread count.
MonteCarloResult run_monte_carlo(const MarketInstance& base, const ScenarioConfig& cfg,
                                 const MonteCarloOptions& options = {});

enum class Quantity { kDlmp, kFlow };
std::string to_string(Quantity q);

struct ConvergenceTrace {
  Quantity quantity = Quantity::kDlmp;
  std::vector<int> counts;                      // sample counts at checkpoints
  std::vector<std::vector<double>> running_mean;  // checkpoint x entity
  std::vector<std::vector<double>> running_cv;
  /// max over unflagged entities and over sample counts in the final window of
  /// |running mean - final mean| / |final mean|.
  double drift = 0.0;
};

ConvergenceTrace convergence_trace(const std::vector<std::vector<double>>& samples,
                                   const std::vector<char>& flagged, Quantity q,
                                   int checkpoint = 50, double window = 0.2);
ConvergenceTrace convergence_trace(const MonteCarloStats& stats, Quantity q, int checkpoint = 50,
                                   double window = 0.2);

nlohmann::json to_json(const ComparisonReport& r);
/// Rows: normalized row per report that has one, then a raw row "<label>-N" per report.
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonReport>& reports);
/// entity,quantity,formulation,mean,stddev,cv,flagged
void write_moments_csv(std::ostream& out, const MonteCarloResult& mc);
/// samples,entity,quantity,formulation,running_mean,running_cv
void write_trace_csv(std::ostream& out, const MonteCarloResult& mc, int checkpoint = 50);
/// Long format: entity,quantity,formulation,statistic,value
void write_long_csv(std::ostream& out, const MonteCarloResult& mc);
nlohmann::json summary_json(const MonteCarloResult& mc, int checkpoint = 50, double window = 0.2);

}  // namespace flexmarket
