// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "flexmarket/analysis.hpp"
#include "flexmarket/solver.hpp"
#include "flexmarket_cli/commands.hpp"
#include "flexmarket_cli/run_config.hpp"

using namespace flexmarket;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += o.pass ? 0 : 1;
  std::printf("%s c%-2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

cli::RunConfig recipe(const std::string& name, std::uint64_t seed) {
  cli::RunConfig c = cli::load_config(fs::path(FLEXMARKET_RECIPE_DIR) / (name + ".ini"));
  c.seed = seed;
  return c;
}

std::optional<ComparisonReport> try_compare(const cli::RunConfig& cfg) {
  try {
    return compare_instance(cli::make_scenario(cfg).instance, cfg.effective_label());
  } catch (const SolveFailure&) {
    return std::nullopt;
  }
}

int distribution_lines(const std::vector<int>& lines, int root_id) {
  return static_cast<int>(std::count_if(lines.begin(), lines.end(), [&](int b) { return b != root_id; }));
}

int root_of(const cli::RunConfig& cfg) { return cli::make_scenario(cfg).net->root_id(); }

constexpr int kSeeds = 10;

// Per-seed comparisons of the 141-bus recipes, shared by several criteria.
struct SeedRun {
  std::optional<ComparisonReport> sl1, sl2, s2;
};
std::vector<SeedRun> runs141;
int root141 = 0;

// ---------------------------------------------------------------------------

Outcome polygon() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double smax = 2.5;
  double worst_vertex = 0.0, worst_excess = -1.0;
  int accepted = 0;
  for (int sides : {4, 8, 12, 36}) {
    const auto edges = polygon_edges(sides);
    if (static_cast<int>(edges.size()) != sides) return {false, fmt("M=%d has %zu edges", sides, edges.size())};
    // vertices: intersections of consecutive edge lines
    for (int m = 0; m < sides; ++m) {
      const PolygonEdge& a = edges[static_cast<std::size_t>(m)];
      const PolygonEdge& b = edges[static_cast<std::size_t>((m + 1) % sides)];
      const double det = a.alpha * b.beta - a.beta * b.alpha;
      const double p = (-a.delta * smax * b.beta + b.delta * smax * a.beta) / det;
      const double q = (-a.alpha * b.delta * smax + b.alpha * a.delta * smax) / det;
      worst_vertex = std::max(worst_vertex, std::abs(std::hypot(p, q) - smax));
    }
    int inside = 0;
    while (inside < 10000) {
      const double p = smax * u(gen), q = smax * u(gen);
      bool ok = true;
      for (const auto& e : edges) ok = ok && e.alpha * p + e.beta * q + e.delta * smax <= 0.0;
      if (!ok) continue;
      ++inside;
      worst_excess = std::max(worst_excess, p * p + q * q - smax * smax);
    }
    accepted += inside;
  }
  const bool pass = worst_excess <= 0.0 && worst_vertex <= 1e-9;
  return {pass, fmt("%d points, max P^2+Q^2-S^2 = %.3g, max vertex radius error = %.2g", accepted, worst_excess,
                    worst_vertex)};
}

Outcome solver_fixtures() {
  std::ifstream in(FLEXMARKET_TEST_DATA_DIR "/solver_fixtures.json");
  if (!in) return {false, "fixture file missing"};
  const auto j = nlohmann::json::parse(in);
  int lp = 0, socp = 0, bad = 0;
  double worst_rel = 0.0, worst_kkt = 0.0;
  for (const auto& c : j.at("cases")) {
    const ConicProgram p = program_from_json(c.at("program"));
    const double ref = c.at("reference_objective").get<double>();
    const SolveReport r = InteriorPointSolver().solve(p);
    const double rel = std::abs(r.objective - ref) / std::abs(ref);
    const double kkt = std::max({r.kkt.primal, r.kkt.dual, r.kkt.complementarity});
    worst_rel = std::max(worst_rel, rel);
    worst_kkt = std::max(worst_kkt, kkt);
    if (!r.optimal() || !(rel <= 1e-6) || !(kkt <= 1e-7)) ++bad;
    (c.at("kind") == "lp" ? lp : socp) += 1;
  }
  const bool pass = bad == 0 && lp == 50 && socp == 50;
  return {pass, fmt("%d LPs, %d SOCPs, %d mismatches, max rel objective error %.2g, max KKT residual %.2g", lp, socp,
                    bad, worst_rel, worst_kkt)};
}

// Two buses, 10 MW behind an 8 MVA line, one 5 MW demand-decrease offer at 40 EUR/MWh.
MarketInstance toy_instance(double load_mw) {
  const std::string text =
      "mpc.baseMVA = 10;\n"
      "mpc.bus = [\n"
      "1 3 0 0 0 0 1 1 0 12.66 1 1.1 0.9;\n"
      "2 1 10 0 0 0 1 1 0 12.66 1 1.1 0.9;\n"
      "];\n"
      "mpc.gen = [1 0 0 10 -10 1 100 1 10 0];\n"
      "mpc.branch = [\n"
      "1 2 0.01 0.01 0 8 0 0 0 0 1;\n"
      "];\n";
  MarketInstance inst;
  inst.net = std::make_shared<const RadialNetwork>(build_radial(parse_case(text)));
  inst.profile.p_gen.assign(2, 0.0);
  inst.profile.p_load.assign(2, 0.0);
  inst.profile.q_load.assign(2, 0.0);
  inst.profile.p_load[inst.net->index_of(2)] = load_mw;
  FlexBid b;
  b.bus = 2;
  b.qty_d_up = 5.0;
  b.cost_d_up = 40.0;
  inst.bids = {b};
  return inst;
}

// Cheapest feasible relief by enumeration over a 1e-4 MW grid, evaluating the
// linearized flow, voltage and polygon rows directly.
double grid_cost(double load_mw, double* relief) {
  const double base = 10.0, r = 0.01, x = 0.01, smax = 8.0 / base;
  const auto edges = polygon_edges(12);
  for (int k = 0; k <= 50000; ++k) {
    const double d = 1e-4 * k;
    const double p = (load_mw - d) / base;
    const double v2 = 1.0 - 2.0 * (r * p + x * 0.0);
    bool ok = v2 >= 0.99 * 0.99 - 1e-12 && v2 <= 1.01 * 1.01 + 1e-12;
    for (const auto& e : edges) ok = ok && e.alpha * p + e.beta * 0.0 + e.delta * smax <= 1e-12;
    if (ok) {
      if (relief) *relief = d;
      return 40.0 * d;
    }
  }
  return std::numeric_limits<double>::infinity();
}

Outcome toy_market() {
  double relief = 0.0;
  const double cost = grid_cost(10.0, &relief);
  const double eps = 0.01;
  const double price = (grid_cost(10.0 + eps, nullptr) - cost) / eps;
  ClearingResult res = clear(toy_instance(10.0));
  const double dd = res.activations.at(0).d_up;
  const double dlmp = res.dlmp[toy_instance(10.0).net->index_of(2)];
  const bool pass = std::abs(dd - relief) <= 1e-3 && std::abs(res.objective - cost) <= 1e-2 &&
                    std::abs(dlmp - price) <= 1e-2;
  return {pass, fmt("oracle relief %.4f MW cost %.4f EUR price %.4f; LP relief %.6f MW cost %.6f EUR DLMP %.6f",
                    relief, cost, price, dd, res.objective, dlmp)};
}

Outcome feasibility_identity() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"case69-sl2", "case141-sl2"}) {
    cli::RunConfig cfg = recipe(name, 1);
    cfg.line_capacity.clear();
    cfg.interface_capacity.reset();
    MarketInstance inst = cli::make_scenario(cfg).instance;
    inst.bids.clear();
    inst.v_lo = 0.9;
    inst.v_hi = 1.1;
    for (Formulation f : {Formulation::kLP, Formulation::kSOCP}) {
      inst.formulation = f;
      const ClearingResult r = clear(inst);
      double act = 0.0;
      for (const auto& a : r.activations) act = std::max({act, a.p_up, a.p_dn, a.d_up, a.d_dn});
      pass = pass && std::abs(r.objective) <= 1e-9 && act <= 1e-9;
      detail += fmt("%s %s objective %.1e, %zu activations; ", name, to_string(f).c_str(), r.objective,
                    r.activations.size());
    }
  }
  return {pass, detail};
}

Outcome loss_residual() {
  const cli::RunConfig cfg = recipe("case141-sl2", 1);
  MarketInstance inst = cli::make_scenario(cfg).instance;
  inst.formulation = Formulation::kLP;
  const ClearingResult lp = clear(inst);
  const RadialNetwork& net = *inst.net;
  const auto res = lp_loss_residuals(lp, inst);
  double worst = 0.0, largest = 0.0;
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    const double p = lp.flows[i].p / net.base_mva, q = lp.flows[i].q / net.base_mva;
    const int a = net.parent(i);
    const double va = a < 0 ? net.slack_voltage : lp.v_squared[static_cast<std::size_t>(a)];
    const double law = net.branch_of(i).r * (p * p + q * q) / va;
    worst = std::max(worst, std::abs(res[i].residual - law));
    largest = std::max(largest, std::abs(law));
  }
  return {worst <= 1e-6, fmt("%zu branches, max |residual - r(P^2+Q^2)/v_A| = %.2g p.u. (largest loss term %.2g)",
                             net.bus_count(), worst, largest)};
}

Outcome spread_direction() {
  std::string detail;
  bool pass = true;
  for (const char* sys : {"case69", "case141"}) {
    int good = 0;
    std::string per_seed;
    for (int s = 1; s <= kSeeds; ++s) {
      std::optional<ComparisonReport> a, b;
      int root = 0;
      if (std::string(sys) == "case141") {
        a = runs141[static_cast<std::size_t>(s - 1)].sl1;
        b = runs141[static_cast<std::size_t>(s - 1)].sl2;
        root = root141;
      } else {
        const cli::RunConfig c1 = recipe("case69-sl1", static_cast<std::uint64_t>(s));
        a = try_compare(c1);
        b = try_compare(recipe("case69-sl2", static_cast<std::uint64_t>(s)));
        root = root_of(c1);
      }
      std::string mark = "x";
      if (a && b) {
        const int lines = std::min(distribution_lines(b->lp_binding_lines, root),
                                   distribution_lines(b->socp_binding_lines, root));
        const double norm = b->rmse.dlmp / a->rmse.dlmp;
        const bool ok = lines >= 2 && norm < 1.0;
        good += ok;
        mark = fmt("%.2f/%d%s", norm, lines, ok ? "" : "*");
      }
      per_seed += (per_seed.empty() ? "" : " ") + mark;
    }
    pass = pass && good >= 8;
    detail += fmt("%s %d/10 [%s]; ", sys, good, per_seed.c_str());
  }
  return {pass, detail + "entries: normalized SL2 DLMP RMSE/binding lines"};
}

Outcome voltage_band() {
  int good = 0;
  std::string per_seed;
  for (const auto& r : runs141) {
    std::string mark = "x";
    if (r.sl2 && r.s2) {
      const bool v = r.s2->rmse.voltage > r.sl2->rmse.voltage;
      const bool d = r.s2->rmse.dlmp < r.sl2->rmse.dlmp;
      const bool f = r.s2->rmse.flow < r.sl2->rmse.flow;
      good += v && d && f;
      mark = std::string(v ? "V" : "v") + (d ? "D" : "d") + (f ? "F" : "f");
    }
    per_seed += (per_seed.empty() ? "" : " ") + mark;
  }
  return {good >= 8, fmt("%d/10 seeds [%s] (upper case: moved in the expected direction)", good, per_seed.c_str())};
}

Outcome root_deviation() {
  int good = 0;
  std::string per_seed;
  for (const auto& r : runs141) {
    std::string mark = "x";
    if (r.sl2) {
      const bool ok = r.sl2->max_dlmp_dev_bus == root141 && r.sl2->max_dlmp_dev_percent <= 10.0;
      good += ok;
      mark = fmt("%d:%.2f%%%s", r.sl2->max_dlmp_dev_bus, r.sl2->max_dlmp_dev_percent, ok ? "" : "*");
    }
    per_seed += (per_seed.empty() ? "" : " ") + mark;
  }
  return {good >= 8, fmt("%d/10 seeds with the maximum at root bus %d and <= 10%% [%s]", good, root141,
                         per_seed.c_str())};
}

Outcome flow_agreement() {
  int good = 0;
  std::string per_seed;
  for (const auto& r : runs141) {
    std::string mark = "x";
    if (r.sl2) {
      const double pct = 100.0 * r.sl2->rmse.flow / r.sl2->mean_flow;
      const bool ok = pct <= 1.0;
      good += ok;
      mark = fmt("%.2f%%%s", pct, ok ? "" : "*");
    }
    per_seed += (per_seed.empty() ? "" : " ") + mark;
  }
  return {good == kSeeds, fmt("%d/10 seeds with flow RMSE <= 1%% of mean branch flow [%s]", good, per_seed.c_str())};
}

Outcome monte_carlo() {
  cli::RunConfig cfg = recipe("case141-sl2", 1);
  cfg.mc.samples = 200;
  cfg.mc.sigma_cost = 0.15;
  cfg.mc.sigma_qty = 0.3;
  const auto t0 = Clock::now();
  const MonteCarloResult mc = cli::run_montecarlo(cfg);
  const double secs = seconds_since(t0);

  double drift = 0.0;
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp})
    drift = std::max(drift, convergence_trace(*m, Quantity::kDlmp, cfg.checkpoint, 0.2).drift);

  double dev = 0.0;
  int dev_bus = -1;
  bool every_bus = true;
  for (std::size_t k = 0; k < mc.lp.dlmp.mean.size(); ++k) {
    const double a = mc.lp.dlmp.mean[k], b = mc.socp.dlmp.mean[k];
    const double d = std::abs(a - b) / std::abs(b);
    if (!(d <= 0.10)) every_bus = false;
    if (!(d <= dev)) {
      dev = d;
      dev_bus = mc.lp.bus_ids[k];
    }
  }

  // flags must land only on branches with negligible mean flow, and never on prices
  int flags = 0, wrong = 0;
  for (const MonteCarloStats* m : {&mc.lp, &mc.socp}) {
    double sys = 0.0;
    for (double v : m->flow.mean) sys += std::abs(v);
    sys /= static_cast<double>(m->flow.mean.size());
    for (std::size_t k = 0; k < m->flow.mean.size(); ++k) {
      if (!m->flow.flagged[k]) continue;
      ++flags;
      if (!(std::abs(m->flow.mean[k]) < 1e-3 * sys)) ++wrong;
    }
    for (char f : m->dlmp.flagged) wrong += f ? 1 : 0;
  }
  const bool pass = secs < 900.0 && drift < 0.02 && every_bus && wrong == 0;
  return {pass, fmt("%d/%d samples used, %.0f s, max DLMP drift %.3f%%, max LP-SOCP mean DLMP gap %.2f%% at bus %d, "
                    "%d flow flags, %d misplaced",
                    mc.lp.samples_used, mc.lp.samples_attempted, secs, 100.0 * drift, 100.0 * dev, dev_bus, flags,
                    wrong)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path work = fs::temp_directory_path() / ("flexmarket-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(work);
  const std::string bin = FLEXMARKET_CLI_BINARY;
  const std::string rdir = FLEXMARKET_RECIPE_DIR;
  auto commands = [&](const fs::path& out, int threads) {
    const std::string o = " --out " + out.string() + " > /dev/null";
    return std::vector<std::string>{
        bin + " clear --config " + rdir + "/case141-sl2.ini --seed 4" + o,
        bin + " compare " + rdir + "/case141-sl1.ini " + rdir + "/case141-sl2.ini " + rdir +
            "/case141-sl2-s2.ini --seed 4" + o,
        bin + " montecarlo --config " + rdir + "/case141-sl2.ini --samples 24 --threads " + std::to_string(threads) + o};
  };
  // Both passes write to the same directory, since the path is part of every
  // provenance header; the first pass is moved aside before the second.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& cmd : commands(work / "out", pass == 0 ? 1 : 3))
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    fs::rename(work / "out", work / std::to_string(pass));
  }
  int files = 0, csv = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(work / "0")) {
    ++files;
    csv += e.path().extension() == ".csv";
    const fs::path twin = work / "1" / e.path().filename();
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) ++differ;
  }
  const auto other = std::distance(fs::directory_iterator(work / "1"), fs::directory_iterator());
  fs::remove_all(work);
  const bool pass = files > 0 && differ == 0 && files == other;
  return {pass, fmt("clear, compare and montecarlo run twice (1 vs 3 threads): %d files (%d CSV), %d differ", files,
                    csv, differ)};
}

}  // namespace

int main() {
  std::printf("flexmarket acceptance suite\n");
  run(1, "polygon inner approximation", polygon);
  run(2, "solver against reference optima", solver_fixtures);
  run(3, "two-bus market against grid search", toy_market);
  run(4, "no bids clear at zero cost", feasibility_identity);
  run(5, "LP loss residuals", loss_residual);

  const auto t6 = Clock::now();
  root141 = root_of(recipe("case141-sl2", 1));
  for (int s = 1; s <= kSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    runs141.push_back({try_compare(recipe("case141-sl1", seed)), try_compare(recipe("case141-sl2", seed)),
                       try_compare(recipe("case141-sl2-s2", seed))});
  }
  run(6, "spread level direction", [&] {
    Outcome o = spread_direction();
    const double secs = seconds_since(t6);
    o.detail += fmt(" (%.0f s with the 141-bus runs)", secs);
    o.pass = o.pass && secs < 600.0;
    return o;
  });
  run(7, "voltage band trade-off", voltage_band);
  run(8, "root deviation band", root_deviation);
  run(9, "flow agreement", flow_agreement);
  run(10, "Monte Carlo at 200 samples", monte_carlo);
  run(11, "byte-identical reruns", determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
