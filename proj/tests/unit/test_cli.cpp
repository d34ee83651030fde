#include <doctest.h>

#include <cmath>
#include <sstream>

#include "flexmarket_cli/commands.hpp"
#include "flexmarket_cli/run_config.hpp"

using namespace flexmarket;
using namespace flexmarket::cli;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST_CASE("resolved fields parse back to the same config") {
  RunConfig a = parse(
      "label = x\n"
      "case = case69\n"
      "spread = sl1\n"
      "vband = 0.95:1.05\n"
      "polygon-sides = 36\n"
      "load-scale = 0.125\n"
      "line-capacity = 16:0.97x, 43:2.5\n"
      "interface-capacity = 0.96x\n"
      "interface-mode = scheduled\n"
      "q-widen = 0.2\n"
      "seed = 42\n"
      "formulation = socp\n"
      "samples = 7\n"
      "format = csv\n");
  RunConfig b;
  for (const auto& [k, v] : fields(a)) set_field(b, k, v);
  CHECK(fields(a) == fields(b));
  CHECK(a.spread == Spread::kSL1);
  CHECK(a.v_lo == 0.95);
  REQUIRE(a.line_capacity.size() == 2);
  CHECK(a.line_capacity[0].bus == 16);
  CHECK(a.line_capacity[0].capacity.relative);
  CHECK(a.line_capacity[1].capacity.value == 2.5);
  CHECK_FALSE(a.line_capacity[1].capacity.relative);
  CHECK(a.interface_mode == InterfaceMode::kScheduled);
  CHECK(a.formulations == std::vector<Formulation>{Formulation::kSOCP});
  CHECK_FALSE(a.write_json);

  RunConfig d;
  RunConfig e;
  for (const auto& [k, v] : fields(d)) set_field(e, k, v);
  CHECK(fields(d) == fields(e));
}

TEST_CASE("config errors") {
  RunConfig c;
  CHECK_THROWS_AS(set_field(c, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "seed", "-1"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "seed", "7x"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "vband", "1.1:0.9"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "vband", "0.9"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "spread", "sl3"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "polygon-sides", "7"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "line-capacity", "16"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "line-capacity", "16:-1"), ConfigError);
  CHECK_THROWS_AS(set_field(c, "format", "xml"), ConfigError);
  CHECK_THROWS_AS(parse("seed = 1\nbogus = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/recipe.ini"), ConfigError);
}

TEST_CASE("scenario construction") {
  RunConfig c;
  c.case_path = "case69";
  c.load_scale = 0.5;
  set_field(c, "line-capacity", "10:0.9x,11:3");
  set_field(c, "interface-capacity", "0.96x");
  const Scenario s = make_scenario(c);
  const BaseFlow bf = base_power_flow(*s.net, s.profile, Formulation::kLP);
  const auto base = [&](int bus) {
    const std::size_t i = s.net->index_of(bus);
    return std::hypot(bf.p[i], bf.q[i]) * s.net->base_mva;
  };
  CHECK(s.instance.line_capacity.at(10) == doctest::Approx(0.9 * base(10)).epsilon(1e-12));
  CHECK(s.instance.line_capacity.at(11) == 3.0);
  CHECK(s.instance.capacity(s.net->root()) == doctest::Approx(0.96 * base(s.net->root_id())).epsilon(1e-12));
  CHECK(s.instance.bids.size() == s.bids.bids.size());

  RunConfig root = c;
  set_field(root, "line-capacity", std::to_string(s.net->root_id()) + ":1");
  CHECK_THROWS_AS(make_scenario(root), ConfigError);
  RunConfig missing;
  missing.case_path = "no_such_case";
  CHECK_THROWS_AS(make_scenario(missing), ConfigError);
  RunConfig bad_bus = c;
  set_field(bad_bus, "line-capacity", "9999:1");
  CHECK_THROWS_AS(make_scenario(bad_bus), ConfigError);
}

TEST_CASE("command outputs") {
  RunConfig c;
  c.case_path = "case69";
  c.load_scale = 0.1;
  c.seed = 7;
  c.label = "t";
  const auto results = run_clear(c);
  REQUIRE(results.size() == 2);
  const FileSet files = clear_outputs(c, results);
  for (const char* name : {"t_lp_bus.csv", "t_lp_branch.csv", "t_lp.json", "t_socp_bus.csv", "t_socp.json"})
    CHECK(files.count(name) == 1);
  CHECK(files.at("t_lp_bus.csv").find("# seed = 7\n") != std::string::npos);
  const auto j = nlohmann::json::parse(files.at("t_socp.json"));
  CHECK_FALSE(j["diagnostics"].contains("solve_seconds"));
  CHECK(j["config"]["seed"] == "7");
  CHECK(clear_outputs(c, run_clear(c)) == files);

  SUBCASE("single-case compare skips normalization") {
    const CompareOutcome out = run_compare({c});
    CHECK_FALSE(out.reference.has_value());
    CHECK_FALSE(out.notice.empty());
    CHECK_FALSE(out.reports[0].rmse_normalized.has_value());
    const FileSet f = compare_outputs("cmp", {c}, out);
    CHECK(f.at("cmp_rmse.csv").find("\nt-N,") != std::string::npos);
  }
  SUBCASE("the first SL1 case is the reference") {
    RunConfig a = c, b = c;
    a.label = "SL2";
    b.label = "SL1";
    b.spread = Spread::kSL1;
    const CompareOutcome out = run_compare({a, b});
    REQUIRE(out.reference == std::optional<std::size_t>(1));
    CHECK(out.reports[1].rmse_normalized->voltage == doctest::Approx(1.0));
    CHECK_THROWS_AS(run_compare({a, b}, std::string("SL9")), ConfigError);
    CHECK_THROWS_AS(run_compare({a, a}), ConfigError);
  }
}
