#include <doctest.h>

#include <cmath>
#include <fstream>

#include "flexmarket/solver.hpp"

using namespace flexmarket;

TEST_CASE("embedded solver agrees with reference optima on random programs") {
  std::ifstream in(FLEXMARKET_TEST_DATA_DIR "/solver_fixtures.json");
  REQUIRE(in.good());
  const auto j = nlohmann::json::parse(in);
  int checked = 0;
  for (const auto& c : j.at("cases")) {
    const ConicProgram p = program_from_json(c.at("program"));
    const double ref = c.at("reference_objective").get<double>();
    const SolveReport r = InteriorPointSolver().solve(p);
    INFO(c.at("name").get<std::string>(), " status=", to_string(r.status), " msg=", r.message,
         " it=", r.iterations, " obj=", r.objective, " ref=", ref);
    CHECK(r.optimal());
    CHECK(std::abs(r.objective - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
    CHECK(r.kkt.primal <= 1e-7);
    CHECK(r.kkt.dual <= 1e-7);
    CHECK(r.kkt.complementarity <= 1e-7);
    ++checked;
  }
  CHECK(checked == 100);
}
