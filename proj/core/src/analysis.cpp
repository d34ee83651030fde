#include "flexmarket/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "flexmarket/error.hpp"

namespace flexmarket {

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("rmse of vectors with different lengths");
  if (a.empty()) throw DimensionError("rmse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

namespace {

std::vector<double> apparent(const ClearingResult& r) {
  std::vector<double> s(r.flows.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = r.flows[i].s;
  return s;
}

double ratio(double a, double b) { return b == 0.0 ? std::numeric_limits<double>::quiet_NaN() : a / b; }

}  // namespace

void normalize(ComparisonReport& report, const ComparisonReport& reference) {
  const RmseSet& x = report.rmse;
  const RmseSet& r = reference.rmse;
  report.rmse_normalized = RmseSet{ratio(x.dlmp, r.dlmp), ratio(x.voltage, r.voltage), ratio(x.flow, r.flow),
                                   ratio(x.revenue, r.revenue)};
}

ComparisonReport compare_deterministic(const ClearingResult& lp, const ClearingResult& socp,
                                       const std::string& label, const ComparisonReport* reference) {
  if (lp.bus_ids != socp.bus_ids) throw DimensionError("results describe different networks");
  ComparisonReport rep;
  rep.case_label = label;
  rep.rmse.dlmp = rmse(lp.dlmp, socp.dlmp);
  rep.rmse.voltage = rmse(lp.voltages, socp.voltages);
  const auto s_lp = apparent(lp), s_so = apparent(socp);
  rep.rmse.flow = rmse(s_lp, s_so);
  std::vector<double> rev_lp = lp.revenues, rev_so = socp.revenues;
  if (rev_lp.empty()) rev_lp.assign(lp.bus_ids.size(), 0.0);
  if (rev_so.empty()) rev_so.assign(socp.bus_ids.size(), 0.0);
  rep.rmse.revenue = rmse(rev_lp, rev_so);

  for (std::size_t i = 0; i < lp.dlmp.size(); ++i) {
    if (std::abs(socp.dlmp[i]) < 1e-9) continue;
    const double dev = 100.0 * std::abs(lp.dlmp[i] - socp.dlmp[i]) / std::abs(socp.dlmp[i]);
    if (rep.max_dlmp_dev_bus < 0 || dev > rep.max_dlmp_dev_percent) {
      rep.max_dlmp_dev_percent = dev;
      rep.max_dlmp_dev_bus = lp.bus_ids[i];
    }
  }
  double total = 0.0;
  int count = 0;
  for (double s : s_so) {
    if (s > 1e-9) {
      total += s;
      ++count;
    }
  }
  rep.mean_flow = count ? total / count : 0.0;
  rep.lp_objective = lp.objective;
  rep.socp_objective = socp.objective;
  rep.lp_binding_lines = lp.binding.lines;
  rep.socp_binding_lines = socp.binding.lines;
  if (reference) normalize(rep, *reference);
  return rep;
}

ComparisonReport compare_instance(const MarketInstance& inst, const std::string& label,
                                  const ComparisonReport* reference, const ClearOptions& options) {
  MarketInstance a = inst, b = inst;
  a.formulation = Formulation::kLP;
  b.formulation = Formulation::kSOCP;
  try {
    const ClearingResult lp = clear(a, options);
    const ClearingResult so = clear(b, options);
    return compare_deterministic(lp, so, label, reference);
  } catch (const ClearingFailure& e) {
    throw ComparisonError(label, e);
  }
}

Moments compute_moments(const std::vector<std::vector<double>>& samples, double flag_fraction) {
  Moments m;
  if (samples.empty()) return m;
  const std::size_t k = samples.front().size();
  const double n = static_cast<double>(samples.size());
  m.mean.assign(k, 0.0);
  m.stddev.assign(k, 0.0);
  m.cv.assign(k, 0.0);
  m.flagged.assign(k, 0);
  for (const auto& row : samples) {
    if (row.size() != k) throw DimensionError("ragged sample matrix");
    for (std::size_t j = 0; j < k; ++j) m.mean[j] += row[j];
  }
  for (double& v : m.mean) v /= n;
  for (const auto& row : samples)
    for (std::size_t j = 0; j < k; ++j) m.stddev[j] += (row[j] - m.mean[j]) * (row[j] - m.mean[j]);
  double scale = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    m.stddev[j] = std::sqrt(m.stddev[j] / n);
    scale += std::abs(m.mean[j]);
  }
  scale /= static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double am = std::abs(m.mean[j]);
    if (am > 0.0) {
      m.cv[j] = m.stddev[j] / am;
    } else {
      m.cv[j] = m.stddev[j] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    m.flagged[j] = am < flag_fraction * scale ? 1 : 0;
  }
  return m;
}

MonteCarloResult run_monte_carlo(const MarketInstance& base, const ScenarioConfig& cfg,
                                 const MonteCarloOptions& options) {
  cfg.validate();
  base.validate();
  const int n = cfg.samples;
  struct Outcome {
    bool ok = false;
    std::vector<double> dlmp[2], flow[2];
  };
  std::vector<Outcome> out(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= n) return;
      MarketInstance inst = base;
      inst.bids = perturb_bids(base.bids, cfg, static_cast<std::uint64_t>(s));
      Outcome& o = out[static_cast<std::size_t>(s)];
      try {
        for (int f = 0; f < 2; ++f) {
          inst.formulation = f == 0 ? Formulation::kLP : Formulation::kSOCP;
          const ClearingResult r = clear(inst, options.clear);
          o.dlmp[f] = r.dlmp;
          o.flow[f] = apparent(r);
        }
        o.ok = true;
      } catch (const ClearingFailure&) {
        o.ok = false;
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(1, n)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MonteCarloResult res;
  MonteCarloStats* st[2] = {&res.lp, &res.socp};
  const RadialNetwork& net = *base.net;
  for (int f = 0; f < 2; ++f) {
    MonteCarloStats& m = *st[f];
    m.formulation = f == 0 ? Formulation::kLP : Formulation::kSOCP;
    m.seed = cfg.seed;
    m.samples_attempted = n;
    for (const Bus& b : net.buses) {
      m.bus_ids.push_back(b.id);
      m.branch_ids.push_back(b.id);
    }
  }
  for (int s = 0; s < n; ++s) {
    Outcome& o = out[static_cast<std::size_t>(s)];
    for (int f = 0; f < 2; ++f) {
      MonteCarloStats& m = *st[f];
      if (!o.ok) {
        ++m.samples_failed;
        m.failed_samples.push_back(s);
        continue;
      }
      ++m.samples_used;
      m.dlmp_samples.push_back(std::move(o.dlmp[f]));
      m.flow_samples.push_back(std::move(o.flow[f]));
    }
  }
  const int failed = res.lp.samples_failed;
  if (failed > options.max_failure_fraction * n || res.lp.samples_used == 0) {
    throw StatisticalFailure(std::to_string(failed) + " of " + std::to_string(n) +
                                 " Monte Carlo samples failed to clear (limit " +
                                 std::to_string(options.max_failure_fraction * 100.0) + "%)",
                             n, failed);
  }
  for (MonteCarloStats* m : st) {
    m->dlmp = compute_moments(m->dlmp_samples, options.flag_fraction);
    m->flow = compute_moments(m->flow_samples, options.flag_fraction);
  }
  return res;
}

std::string to_string(Quantity q) { return q == Quantity::kDlmp ? "dlmp" : "flow"; }

ConvergenceTrace convergence_trace(const std::vector<std::vector<double>>& samples,
                                   const std::vector<char>& flagged, Quantity q, int checkpoint,
                                   double window) {
  if (checkpoint < 1) throw InvalidParameter("checkpoint must be positive");
  if (!(window > 0.0) || window > 1.0) throw InvalidParameter("drift window must lie in (0, 1]");
  ConvergenceTrace t;
  t.quantity = q;
  const std::size_t n = samples.size();
  if (n == 0) return t;
  const std::size_t k = samples.front().size();
  std::vector<double> sum(k, 0.0), sum2(k, 0.0);
  std::vector<std::vector<double>> means(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> mean(k);
    for (std::size_t j = 0; j < k; ++j) {
      sum[j] += samples[s][j];
      sum2[j] += samples[s][j] * samples[s][j];
      mean[j] = sum[j] / static_cast<double>(s + 1);
    }
    const auto count = static_cast<int>(s + 1);
    if (count % checkpoint == 0 || s + 1 == n) {
      std::vector<double> cv(k);
      for (std::size_t j = 0; j < k; ++j) {
        const double var = std::max(sum2[j] / static_cast<double>(s + 1) - mean[j] * mean[j], 0.0);
        cv[j] = mean[j] != 0.0 ? std::sqrt(var) / std::abs(mean[j]) : 0.0;
      }
      t.counts.push_back(count);
      t.running_mean.push_back(mean);
      t.running_cv.push_back(cv);
    }
    means[s] = std::move(mean);
  }
  const std::vector<double>& final_mean = means.back();
  const auto first = static_cast<std::size_t>(std::floor((1.0 - window) * static_cast<double>(n)));
  for (std::size_t s = std::min(first, n - 1); s < n; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!flagged.empty() && flagged[j]) continue;
      if (final_mean[j] == 0.0) continue;
      t.drift = std::max(t.drift, std::abs(means[s][j] - final_mean[j]) / std::abs(final_mean[j]));
    }
  }
  return t;
}

ConvergenceTrace convergence_trace(const MonteCarloStats& stats, Quantity q, int checkpoint, double window) {
  return q == Quantity::kDlmp ? convergence_trace(stats.dlmp_samples, stats.dlmp.flagged, q, checkpoint, window)
                              : convergence_trace(stats.flow_samples, stats.flow.flagged, q, checkpoint, window);
}

namespace {

nlohmann::json rmse_json(const RmseSet& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"dlmp", num(r.dlmp)}, {"voltage", num(r.voltage)}, {"flow", num(r.flow)}, {"revenue", num(r.revenue)}};
}

void put_row(std::ostream& out, const std::string& label, const RmseSet& r) {
  out << label << ',' << r.dlmp << ',' << r.voltage << ',' << r.flow << ',' << r.revenue << '\n';
}

}  // namespace

nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json j{{"case", r.case_label},
                   {"rmse", rmse_json(r.rmse)},
                   {"max_dlmp_deviation", {{"bus", r.max_dlmp_dev_bus}, {"percent", r.max_dlmp_dev_percent}}},
                   {"mean_flow_mva", r.mean_flow},
                   {"objective_eur", {{"lp", r.lp_objective}, {"socp", r.socp_objective}}},
                   {"binding_lines", {{"lp", r.lp_binding_lines}, {"socp", r.socp_binding_lines}}}};
  j["rmse_normalized"] = r.rmse_normalized ? rmse_json(*r.rmse_normalized) : nlohmann::json(nullptr);
  return j;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonReport>& reports) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "case,dlmp,voltage,flow,revenue\n";
  for (const auto& r : reports)
    if (r.rmse_normalized) put_row(out, r.case_label, *r.rmse_normalized);
  for (const auto& r : reports) put_row(out, r.case_label + "-N", r.rmse);
  out.precision(old);
}

void write_moments_csv(std::ostream& out, const MonteCarloResult& mc) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "entity,quantity,formulation,mean,stddev,cv,flagged\n";
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp}) {
    const std::string f = to_string(m->formulation);
    for (std::size_t j = 0; j < m->dlmp.mean.size(); ++j)
      out << m->bus_ids[j] << ",dlmp," << f << ',' << m->dlmp.mean[j] << ',' << m->dlmp.stddev[j] << ','
          << m->dlmp.cv[j] << ',' << int(m->dlmp.flagged[j]) << '\n';
    for (std::size_t j = 0; j < m->flow.mean.size(); ++j)
      out << m->branch_ids[j] << ",flow," << f << ',' << m->flow.mean[j] << ',' << m->flow.stddev[j] << ','
          << m->flow.cv[j] << ',' << int(m->flow.flagged[j]) << '\n';
  }
  out.precision(old);
}

void write_trace_csv(std::ostream& out, const MonteCarloResult& mc, int checkpoint) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "samples,entity,quantity,formulation,running_mean,running_cv\n";
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp}) {
    for (Quantity q : {Quantity::kDlmp, Quantity::kFlow}) {
      const ConvergenceTrace t = convergence_trace(*m, q, checkpoint);
      const auto& ids = q == Quantity::kDlmp ? m->bus_ids : m->branch_ids;
      for (std::size_t c = 0; c < t.counts.size(); ++c)
        for (std::size_t j = 0; j < ids.size(); ++j)
          out << t.counts[c] << ',' << ids[j] << ',' << to_string(q) << ',' << to_string(m->formulation) << ','
              << t.running_mean[c][j] << ',' << t.running_cv[c][j] << '\n';
    }
  }
  out.precision(old);
}

void write_long_csv(std::ostream& out, const MonteCarloResult& mc) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "entity,quantity,formulation,statistic,value\n";
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp}) {
    const std::string f = to_string(m->formulation);
    for (Quantity q : {Quantity::kDlmp, Quantity::kFlow}) {
      const Moments& mo = q == Quantity::kDlmp ? m->dlmp : m->flow;
      const auto& ids = q == Quantity::kDlmp ? m->bus_ids : m->branch_ids;
      for (std::size_t j = 0; j < ids.size(); ++j) {
        out << ids[j] << ',' << to_string(q) << ',' << f << ",mean," << mo.mean[j] << '\n';
        out << ids[j] << ',' << to_string(q) << ',' << f << ",cv," << mo.cv[j] << '\n';
      }
    }
  }
  out.precision(old);
}

nlohmann::json summary_json(const MonteCarloResult& mc, int checkpoint, double window) {
  nlohmann::json j;
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp}) {
    nlohmann::json s{{"seed", m->seed},
                     {"samples_attempted", m->samples_attempted},
                     {"samples_used", m->samples_used},
                     {"samples_failed", m->samples_failed},
                     {"failed_samples", m->failed_samples}};
    for (Quantity q : {Quantity::kDlmp, Quantity::kFlow}) {
      const ConvergenceTrace t = convergence_trace(*m, q, checkpoint, window);
      const Moments& mo = q == Quantity::kDlmp ? m->dlmp : m->flow;
      const auto& ids = q == Quantity::kDlmp ? m->bus_ids : m->branch_ids;
      std::vector<int> flagged;
      for (std::size_t k = 0; k < ids.size(); ++k)
        if (mo.flagged[k]) flagged.push_back(ids[k]);
      s[to_string(q)] = {{"drift", t.drift}, {"flagged", flagged}};
    }
    j[to_string(m->formulation)] = s;
  }
  double worst = 0.0;
  int worst_bus = -1;
  for (std::size_t k = 0; k < mc.lp.dlmp.mean.size(); ++k) {
    const double ref = std::abs(mc.socp.dlmp.mean[k]);
    if (ref < 1e-9) continue;
    const double d = std::abs(mc.lp.dlmp.mean[k] - mc.socp.dlmp.mean[k]) / ref;
    if (d > worst) {
      worst = d;
      worst_bus = mc.lp.bus_ids[k];
    }
  }
  j["max_mean_dlmp_deviation"] = {{"bus", worst_bus}, {"percent", 100.0 * worst}};
  return j;
}

}  // namespace flexmarket
