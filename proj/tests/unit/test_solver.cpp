#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cones.hpp"
#include "flexmarket/solver.hpp"
#include "ldl.hpp"

using namespace flexmarket;

namespace {

LinearRow row(SparseTerms t, double rhs, std::string fam = "r") {
  LinearRow r;
  r.terms = std::move(t);
  r.rhs = rhs;
  r.tag.family = std::move(fam);
  return r;
}

}  // namespace

TEST_CASE("one-variable LP with a lower bound") {
  ConicProgram p;
  p.add_variable("x", 3.0, kInf, 1.0);
  const SolveReport r = solve_lp(p);
  REQUIRE(r.optimal());
  CHECK(r.primal[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(r.lower_bound_duals[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("equality pins the marginal price to the cost") {
  ConicProgram p;
  p.add_variable("d", 0.0, 10.0, 40.0);
  p.equalities.push_back(row({{0, 1.0}}, 5.0));
  const SolveReport r = solve_lp(p);
  REQUIRE(r.optimal());
  CHECK(r.objective == doctest::Approx(200.0).epsilon(1e-8));
  CHECK(r.equality_duals[0] == doctest::Approx(40.0).epsilon(1e-7));
}

TEST_CASE("norm epigraph") {
  ConicProgram p;
  p.add_variable("t", -kInf, kInf, 1.0);
  ConeBlock c;
  c.rows = {row({{0, 1.0}}, 0.0), row({}, 3.0), row({}, 4.0)};
  p.cones.push_back(c);
  const SolveReport r = solve_socp(p);
  REQUIRE(r.optimal());
  CHECK(r.primal[0] == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("tight rotated cone") {
  // P^2 + Q^2 <= l v  <=>  ||(2P, 2Q, l - v)|| <= l + v
  ConicProgram p;
  const int l = p.add_variable("l", 0.0, kInf, 1.0);
  const int v = p.add_variable("v", 1.0, 1.0);
  const int pp = p.add_variable("P", 3.0, 3.0);
  const int q = p.add_variable("Q", -kInf, kInf);
  p.equalities.push_back(row({{q, 1.0}}, 4.0));
  ConeBlock c;
  c.rows = {row({{l, 1.0}, {v, 1.0}}, 0.0), row({{pp, 2.0}}, 0.0), row({{q, 2.0}}, 0.0),
            row({{l, 1.0}, {v, -1.0}}, 0.0)};
  p.cones.push_back(c);
  const SolveReport r = solve_socp(p);
  REQUIRE(r.optimal());
  CHECK(r.primal[static_cast<std::size_t>(l)] == doctest::Approx(25.0).epsilon(1e-8));
}

TEST_CASE("infeasible and unbounded programs are reported by status") {
  SUBCASE("infeasible") {
    ConicProgram p;
    p.add_variable("x", 0.0, 1.0, 1.0);
    p.equalities.push_back(row({{0, 1.0}}, 2.0));
    CHECK(solve_lp(p).status == SolveStatus::kInfeasible);
  }
  SUBCASE("infeasible without bounds") {
    ConicProgram p;
    p.add_variable("x", -kInf, kInf, 1.0);
    p.add_variable("y", -kInf, kInf, 1.0);
    p.inequalities.push_back(row({{0, 1.0}, {1, 1.0}}, -1.0));
    p.inequalities.push_back(row({{0, -1.0}, {1, -1.0}}, -1.0));
    CHECK(solve_lp(p).status == SolveStatus::kInfeasible);
  }
  SUBCASE("unbounded") {
    ConicProgram p;
    p.add_variable("x", -kInf, 4.0, 1.0);
    CHECK(solve_lp(p).status == SolveStatus::kUnbounded);
  }
}

TEST_CASE("objective scaling scales duals and keeps the optimizer") {
  ConicProgram p;
  p.add_variable("a", 0.0, 6.0, 3.0);
  p.add_variable("b", 0.0, 6.0, 5.0);
  p.equalities.push_back(row({{0, 1.0}, {1, 1.0}}, 8.0));
  p.inequalities.push_back(row({{0, 1.0}, {1, -1.0}}, 3.0));
  const SolveReport r1 = solve_lp(p);
  for (double& c : p.cost) c *= 7.0;
  const SolveReport r7 = solve_lp(p);
  REQUIRE(r1.optimal());
  REQUIRE(r7.optimal());
  CHECK(r1.primal[0] == doctest::Approx(r7.primal[0]).epsilon(1e-7));
  CHECK(r7.equality_duals[0] == doctest::Approx(7.0 * r1.equality_duals[0]).epsilon(1e-6));
  CHECK(r7.inequality_duals[0] == doctest::Approx(7.0 * r1.inequality_duals[0]).epsilon(1e-6));
  CHECK(r1.inequality_duals[0] >= 0.0);
}

TEST_CASE("repeated solves are identical") {
  ConicProgram p;
  p.add_variable("a", 0.0, 6.0, 3.0);
  p.add_variable("b", -1.0, 6.0, -5.0);
  p.inequalities.push_back(row({{0, 1.0}, {1, 2.0}}, 9.0));
  const SolveReport a = solve_lp(p), b = solve_lp(p);
  CHECK(a.primal == b.primal);
  CHECK(a.inequality_duals == b.inequality_duals);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("fixed variables receive reduced-cost bound duals") {
  ConicProgram p;
  p.add_variable("f", 2.0, 2.0, 10.0);
  p.add_variable("x", 0.0, kInf, 1.0);
  p.equalities.push_back(row({{0, 1.0}, {1, 1.0}}, 5.0));
  const SolveReport r = solve_lp(p);
  REQUIRE(r.optimal());
  CHECK(r.primal[1] == doctest::Approx(3.0));
  CHECK(r.equality_duals[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.lower_bound_duals[0] == doctest::Approx(9.0).epsilon(1e-7));
  CHECK(r.kkt.dual <= 1e-8);
}

TEST_CASE("program JSON round trip") {
  ConicProgram p;
  p.add_variable("t", -kInf, kInf, 1.0);
  p.add_variable("u", 0.0, 2.0, 0.0);
  p.equalities.push_back(row({{1, 1.0}}, 1.5, "eq"));
  ConeBlock c;
  c.rows = {row({{0, 1.0}}, 0.0), row({{1, 1.0}}, 1.0)};
  c.tag.family = "cone";
  p.cones.push_back(c);
  const ConicProgram q = program_from_json(nlohmann::json::parse(program_to_json(p).dump()));
  CHECK(q.num_vars() == 2);
  CHECK(std::isinf(q.lower[0]));
  CHECK(q.upper[1] == 2.0);
  CHECK(q.cones.at(0).rows.size() == 2);
  CHECK(q.equalities.at(0).tag.family == "eq");
  CHECK(solve_socp(q).objective == doctest::Approx(2.5).epsilon(1e-8));
}

TEST_CASE("trace CSV has one line per iteration") {
  ConicProgram p;
  p.add_variable("x", 3.0, kInf, 1.0);
  SolverOptions o;
  o.record_trace = true;
  const SolveReport r = InteriorPointSolver(o).solve(p);
  std::stringstream ss;
  write_trace_csv(ss, r.trace);
  int lines = 0;
  for (std::string l; std::getline(ss, l);) ++lines;
  CHECK(lines == static_cast<int>(r.trace.size()) + 1);
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations) + 1);
}

TEST_CASE("bad options are rejected") {
  SolverOptions o;
  o.tol = 1e-3;
  CHECK_THROWS(o.validate());
}

TEST_CASE("NT scaling maps z to s") {
  using namespace flexmarket::detail;
  ConeLayout k;
  k.linear = 2;
  k.soc_sizes = {3, 4};
  k.finalize();
  Vec s(9), z(9);
  s << 1.0, 2.0, 3.0, 1.0, -2.0, 5.0, 0.5, 1.0, 2.0;
  z << 0.3, 4.0, 2.0, 0.5, 1.0, 3.0, -1.0, 0.2, 0.1;
  NtScaling w(k);
  REQUIRE(w.update(s, z));
  const Vec wwz = w.apply_w(w.apply_w(z));
  CHECK((wwz - s).norm() < 1e-12);
  CHECK((w.apply_w2(z) - s).norm() < 1e-12);
  CHECK((w.apply_winv(s) - w.lambda()).norm() < 1e-12);
  const Vec back = jordan_divide(k, w.lambda(), jordan_product(k, w.lambda(), s));
  CHECK((back - s).norm() < 1e-12);
}

TEST_CASE("LDL solves a quasi-definite system") {
  using namespace flexmarket::detail;
  // [4 1 0; 1 -3 2; 0 2 -5]
  UpperCsc a;
  a.n = 3;
  a.col_ptr = {0, 1, 3, 5};
  a.row_idx = {0, 0, 1, 1, 2};
  a.values = {4.0, 1.0, -3.0, 2.0, -5.0};
  LdlFactor f;
  f.analyze(a);
  CHECK(f.factor(a, {1, -1, -1}, 1e-13, 1e-7) == 0);
  std::vector<double> x = {1.0, 2.0, 3.0};
  f.solve(x);
  const double r0 = 4 * x[0] + x[1] - 1.0;
  const double r1 = x[0] - 3 * x[1] + 2 * x[2] - 2.0;
  const double r2 = 2 * x[1] - 5 * x[2] - 3.0;
  CHECK(std::abs(r0) + std::abs(r1) + std::abs(r2) < 1e-12);
}
