#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "flexmarket/error.hpp"
#include "flexmarket/formulation.hpp"
#include "flexmarket/market.hpp"
#include "toy_market.hpp"

using namespace flexmarket;

namespace {

bool inside(const std::vector<PolygonEdge>& edges, double p, double q, double tol = 0.0) {
  for (const auto& e : edges)
    if (e.alpha * p + e.beta * q + e.delta > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("square polygon") {
  const auto e = polygon_edges(4);
  REQUIRE(e.size() == 4);
  const double h = std::sqrt(0.5);
  CHECK(e[0].alpha == doctest::Approx(h));
  CHECK(e[0].beta == doctest::Approx(h));
  CHECK(e[1].alpha == doctest::Approx(-h));
  CHECK(e[3].beta == doctest::Approx(-h));
  for (const auto& edge : e) CHECK(edge.delta == doctest::Approx(-0.7071067811865476).epsilon(1e-15));
  const double vx[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (const auto& v : vx) {
    int tight = 0;
    for (const auto& edge : e) {
      const double g = edge.alpha * v[0] + edge.beta * v[1] + edge.delta;
      CHECK(g <= 1e-12);
      if (std::abs(g) < 1e-12) ++tight;
    }
    CHECK(tight == 2);
  }
}

TEST_CASE("polygon vertices are tight on their two edges and nothing outside the disk survives") {
  for (int m : {4, 6, 8, 12, 36}) {
    const auto e = polygon_edges(m);
    for (const auto& edge : e) CHECK(edge.alpha * edge.alpha + edge.beta * edge.beta == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < m; ++k) {
      const double th = 2.0 * std::numbers::pi * k / m;
      const double p = std::cos(th), q = std::sin(th);
      CHECK(inside(e, p, q, 1e-12));
      CHECK(std::abs(e[static_cast<std::size_t>(k)].alpha * p + e[static_cast<std::size_t>(k)].beta * q + e[0].delta) < 1e-12);
      const auto prev = static_cast<std::size_t>((k + m - 1) % m);
      CHECK(std::abs(e[prev].alpha * p + e[prev].beta * q + e[0].delta) < 1e-12);
    }
    CHECK_FALSE(inside(e, 1.001, 0.0));
  }
}

TEST_CASE("random polygon points lie in the disk") {
  const auto e = polygon_edges(12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  int accepted = 0;
  for (int k = 0; k < 20000; ++k) {
    const double p = u(rng), q = u(rng);
    if (!inside(e, p, q)) continue;
    ++accepted;
    CHECK(p * p + q * q <= 1.0);
  }
  CHECK(accepted > 5000);
}

TEST_CASE("odd or tiny polygons are rejected") {
  CHECK_THROWS_AS(polygon_edges(5), InvalidParameter);
  CHECK_THROWS_AS(polygon_edges(2), InvalidParameter);
}

TEST_CASE("LP row counts on two buses") {
  const auto inst = toy::instance(Formulation::kLP);
  const MarketProgram mp = build_lp(inst);
  CHECK(mp.program.equalities.size() == 3 * 2);
  CHECK(mp.program.inequalities.size() == 12 * 2);
  CHECK(mp.program.cones.empty());
  CHECK(mp.program.num_vars() == 4 + 4 * 2);
  std::set<int> rows(mp.p_balance_row.begin(), mp.p_balance_row.end());
  CHECK(rows.size() == 2);
  for (int r : mp.p_balance_row) CHECK(mp.program.equalities[static_cast<std::size_t>(r)].tag.family == "p_balance");
}

TEST_CASE("zero bids leave only network variables") {
  const auto inst = toy::instance(Formulation::kLP, 0.01, 0.01, false);
  const MarketProgram mp = build_lp(inst);
  CHECK(mp.layout.bids == 0);
  CHECK(mp.program.num_vars() == 4 * 2);
}

TEST_CASE("SOCP adds loss terms and two cones per branch") {
  const auto inst = toy::instance(Formulation::kSOCP);
  const MarketProgram mp = build_socp(inst);
  CHECK(mp.program.equalities.size() == 6);
  CHECK(mp.program.inequalities.empty());
  CHECK(mp.program.cones.size() == 4);
  CHECK(mp.program.num_vars() == 4 + 5 * 2);
}

TEST_CASE("both formulations price bids identically") {
  auto inst = toy::instance(Formulation::kLP);
  inst.bids[0].qty_p_up = 1.0;
  inst.bids[0].cost_p_up = 50.0;
  inst.bids[0].qty_p_dn = 1.0;
  inst.bids[0].cost_p_dn = 47.0;
  inst.bids[0].qty_d_dn = 1.0;
  inst.bids[0].cost_d_dn = 36.0;
  const MarketProgram lp = build_lp(inst);
  const MarketProgram so = build_socp(inst);
  for (int j = 0; j < 4; ++j) CHECK(lp.program.cost[static_cast<std::size_t>(j)] == so.program.cost[static_cast<std::size_t>(j)]);
  CHECK(lp.program.cost[0] == doctest::Approx(50.0 * 10));
  CHECK(lp.program.cost[1] == doctest::Approx(-47.0 * 10));
  CHECK(lp.program.cost[2] == doctest::Approx(40.0 * 10));
  CHECK(lp.program.cost[3] == doctest::Approx(-36.0 * 10));
}

TEST_CASE("every variable appears in a constraint") {
  for (Formulation f : {Formulation::kLP, Formulation::kSOCP}) {
    const MarketProgram mp = build(toy::instance(f));
    std::vector<int> seen(static_cast<std::size_t>(mp.program.num_vars()), 0);
    auto mark = [&](const LinearRow& r) {
      for (const auto& [j, v] : r.terms) seen[static_cast<std::size_t>(j)] = 1;
    };
    for (const auto& r : mp.program.equalities) mark(r);
    for (const auto& r : mp.program.inequalities) mark(r);
    for (const auto& c : mp.program.cones)
      for (const auto& r : c.rows) mark(r);
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("instance validation") {
  auto inst = toy::instance(Formulation::kLP);
  inst.v_lo = 1.02;
  CHECK_THROWS_AS(build_lp(inst), InvalidParameter);
  inst = toy::instance(Formulation::kLP);
  inst.bids[0].bus = 99;
  CHECK_THROWS_AS(build_lp(inst), InstanceError);
  inst = toy::instance(Formulation::kLP);
  inst.polygon_sides = 7;
  CHECK_THROWS_AS(build_lp(inst), InvalidParameter);
}

TEST_CASE("zero impedance pins every voltage to the slack") {
  // Internal zero-impedance lines are rejected on ingestion, so zero them afterwards.
  auto inst = toy::instance(Formulation::kLP);
  auto net = std::make_shared<RadialNetwork>(*inst.net);
  for (Branch& b : net->branches) b.r = b.x = 0.0;
  inst.net = net;
  const ClearingResult r = clear(inst);
  for (double v : r.v_squared) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  inst.formulation = Formulation::kSOCP;
  const ClearingResult s = clear(inst);
  for (double v : s.v_squared) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.objective == doctest::Approx(r.objective).epsilon(1e-7));
}

TEST_CASE("SOCP voltage drop holds at the optimum") {
  const auto inst = toy::instance(Formulation::kSOCP);
  const ClearingResult r = clear(inst);
  const std::size_t i = inst.net->index_of(2);
  const double P = r.flows[i].p / 10.0, Q = r.flows[i].q / 10.0, l = r.currents_sq[i];
  const double rhs = 1.0 - 2.0 * (0.01 * P + 0.01 * Q) + 2e-4 * l;
  CHECK(r.v_squared[i] == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("base power flow of the toy feeder") {
  const auto inst = toy::instance(Formulation::kLP);
  const std::size_t i = inst.net->index_of(2);
  const BaseFlow lp = base_power_flow(*inst.net, inst.profile, Formulation::kLP);
  CHECK(lp.p[i] == doctest::Approx(1.0));
  CHECK(lp.v[i] == doctest::Approx(1.0 - 0.02));
  const BaseFlow so = base_power_flow(*inst.net, inst.profile, Formulation::kSOCP);
  CHECK(so.p[i] == doctest::Approx(1.0 + 0.01 * so.l[i]).epsilon(1e-12));
  CHECK(so.l[i] == doctest::Approx((so.p[i] * so.p[i] + so.q[i] * so.q[i]) / 1.0).epsilon(1e-12));
  CHECK(so.p[i] > lp.p[i]);
}

TEST_CASE("market dump round-trips through the program reader") {
  const MarketProgram mp = build_socp(toy::instance(Formulation::kSOCP));
  const auto j = market_dump(mp);
  CHECK(j.at("market").at("formulation") == "SOCP");
  const ConicProgram back = program_from_json(j);
  CHECK(back.num_vars() == mp.program.num_vars());
  CHECK(solve_socp(back).objective == doctest::Approx(solve_socp(mp.program).objective).epsilon(1e-9));
}
