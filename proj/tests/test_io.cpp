#include <doctest.h>

#include <sstream>

#include "xbarsim/io.hpp"

using namespace xbarsim;

namespace {

int line_count(const std::string& s) {
  int n = 0;
  for (char c : s) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("empty object gives the full default configuration") {
  RunConfig cfg = parse_config_text("{}");
  CHECK(cfg.m == 100);
  CHECK(cfg.n == 100);
  CHECK(cfg.r_wl == 5.0);
  CHECK(cfg.r_low == 1e4);
  CHECK(cfg.r_high == 1e6);
  REQUIRE(cfg.selector.has_value());
  CHECK(cfg.selector->eta == 1.8);
  CHECK(cfg.selector->i_s == 1e-12);
  CHECK(cfg.selector->temperature == 300.0);
  CHECK(cfg.diode_model == DiodeModel::paper_eq2);
  CHECK(cfg.scheme.kind == SchemeKind::half_v);
  CHECK(cfg.scheme.read_voltage == 1.0);
  CHECK(cfg.terminals.r_sens_wl1 == 10.0);
  CHECK(cfg.terminals.r_sens_wl2 == 1e8);
  CHECK(cfg.terminals.r_sens_bl1_selected == 1e3);
  CHECK(cfg.terminals.r_sens_bl1_unselected == 10.0);
  CHECK(cfg.terminals.r_sens_bl2 == 1e8);
  CHECK(cfg.solver.rel_tol == 1e-4);
  CHECK(cfg.solver.max_iterations == 200);
  CHECK(cfg.solver.damping == 1.0);
  CHECK(cfg.seed == 1);
}

TEST_CASE("single override keeps the other defaults") {
  RunConfig cfg = parse_config_text(R"({"selector": {"eta": 1.5}})");
  CHECK(cfg.selector->eta == 1.5);
  CHECK(cfg.selector->i_s == 1e-12);
  CHECK(cfg.m == 100);
}

TEST_CASE("invalid values name the field path") {
  try {
    parse_config_text(R"({"array": {"m": 0}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("array.m") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"arrray": {}})"),
                       doctest::Contains("arrray"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"array": {"rows": 4}})"),
                       doctest::Contains("array.rows"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"solver": {"tol": 1e-6}})"),
                       doctest::Contains("solver.tol"), ConfigError);
}

TEST_CASE("syntax errors carry position information") {
  try {
    parse_config_text("{\"array\": }");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("syntax error") != std::string::npos);
  }
}

TEST_CASE("null selector selects the pure-resistor mode") {
  RunConfig cfg = parse_config_text(R"({"selector": null})");
  CHECK_FALSE(cfg.selector.has_value());
}

TEST_CASE("diode model names") {
  RunConfig cfg =
      parse_config_text(R"({"selector": {"model": "exact_banwell"}})");
  CHECK(cfg.diode_model == DiodeModel::exact_banwell);
  CHECK_THROWS_AS(parse_config_text(R"({"selector": {"model": "nope"}})"),
                  ConfigError);
}

TEST_CASE("resolved config round-trips identically") {
  SUBCASE("defaults") {
    RunConfig cfg;
    CHECK(parse_config_text(config_to_json(cfg)) == cfg);
  }
  SUBCASE("customized, with overrides") {
    RunConfig cfg;
    cfg.m = 37;
    cfg.n = 12;
    cfg.r_wl = 0.5;
    cfg.scheme.kind = SchemeKind::third_v;
    cfg.scheme.read_voltage = 1.5;
    cfg.diode_model = DiodeModel::exact_banwell;
    cfg.terminals.v_app_wl2_selected = 0.9;
    cfg.terminals.r_sens_bl1_selected = 5e3;
    cfg.solver.rel_tol = 1e-6;
    cfg.solver.linear_solver = LinearSolverKind::direct;
    cfg.seed = 424242;
    CHECK(parse_config_text(config_to_json(cfg)) == cfg);
  }
  SUBCASE("ohmic mode") {
    RunConfig cfg;
    cfg.selector.reset();
    CHECK(parse_config_text(config_to_json(cfg)) == cfg);
  }
}

TEST_CASE("number formatting keeps 15 significant digits") {
  CHECK(format_number(0.123456789012345) == "0.123456789012345");
  CHECK(format_number(1e-12) == "1e-12");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-3.5) == "-3.5");
}

TEST_CASE("table emission") {
  SweepTable t;
  SweepRow r;
  r.axis_value = 1e-12;
  r.scenario = 8;
  r.apparent_resistance = 12345.6789;
  r.v_sense = 0.0123;
  r.i_select = 1.2e-5;
  r.i_leak = 3e-8;
  r.iterations = 7;
  r.kcl_residual = 2e-12;
  t.rows.push_back(r);
  SweepRow mrow;
  mrow.axis_value = 1e-12;
  mrow.is_margin = true;
  mrow.margin_pct = 4.25;
  t.rows.push_back(mrow);

  std::ostringstream os;
  emit_table(t, os);
  std::string s = os.str();
  CHECK(line_count(s) == 3);  // header + 2 rows
  CHECK(s.find("axis_value,scenario,apparent_resistance_ohm") == 0);
  CHECK(s.find("1e-12,8,12345.6789,0.0123,,1.2e-05,3e-08,7,2e-12,1") !=
        std::string::npos);
  CHECK(s.find("1e-12,margin,,,4.25,,,,,1") != std::string::npos);

  // identical bytes on re-emission
  std::ostringstream os2;
  emit_table(t, os2);
  CHECK(os2.str() == s);
}

TEST_CASE("map emission is long-form and 1-based") {
  Grid g(2, 2);
  g(0, 0) = 1.5;
  g(0, 1) = 2.5;
  g(1, 0) = -1.0;
  g(1, 1) = 0.25;
  std::ostringstream os;
  emit_map(g, os);
  CHECK(os.str() ==
        "i,j,value\n"
        "1,1,1.5\n"
        "1,2,2.5\n"
        "2,1,-1\n"
        "2,2,0.25\n");
}

TEST_CASE("missing config file surfaces the path") {
  try {
    parse_config("/nonexistent/path/cfg.json");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/path/cfg.json") !=
          std::string::npos);
  }
}
