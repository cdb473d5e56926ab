#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "oracle.hpp"
#include "xbarsim/io.hpp"
#include "xbarsim/protocol.hpp"

using namespace xbarsim;

namespace {

RunConfig small_config(int size = 5) {
  RunConfig cfg;
  cfg.m = cfg.n = size;
  cfg.r_wl = cfg.r_bl = 1.0;
  return cfg;
}

std::string table_bytes(const SweepTable& t) {
  std::ostringstream os;
  emit_table(t, os);
  return os.str();
}

}  // namespace

TEST_CASE("bias scheme levels") {
  BiasScheme half{SchemeKind::half_v, 1.0};
  CHECK(half.unselected_wl_bias() == 0.5);
  CHECK(half.unselected_bl_bias() == 0.5);
  BiasScheme third{SchemeKind::third_v, 1.0};
  CHECK(third.unselected_wl_bias() == doctest::Approx(1.0 / 3));
  CHECK(third.unselected_bl_bias() == doctest::Approx(2.0 / 3));
  BiasScheme custom{SchemeKind::custom, 2.0, 0.7, 1.1};
  CHECK(custom.unselected_wl_bias() == 0.7);
  CHECK(custom.unselected_bl_bias() == 1.1);
}

TEST_CASE("scenario table is the canonical bijection") {
  BiasScheme scheme;
  std::set<std::tuple<int, int, int>> combos;
  for (int k = 1; k <= 12; ++k) {
    ScenarioSpec s = scenario_spec(k, scheme, 99);
    combos.insert({static_cast<int>(s.corner), static_cast<int>(s.select_state),
                   static_cast<int>(s.unselect_state)});
    CHECK(s.index == k);
    CHECK((k <= 6 ? s.corner == Corner::near : s.corner == Corner::far));
    // odd indices read the high state
    CHECK((k % 2 == 1 ? s.select_state == CellLevel::high
                      : s.select_state == CellLevel::low));
    CHECK(s.seed == (99ull ^ static_cast<std::uint64_t>(k)));
  }
  CHECK(combos.size() == 12);

  ScenarioSpec s8 = scenario_spec(8, scheme, 0);
  CHECK(s8.corner == Corner::far);
  CHECK(s8.select_state == CellLevel::low);
  CHECK(s8.unselect_state == UnselectPattern::high);
  ScenarioSpec s9 = scenario_spec(9, scheme, 0);
  CHECK(s9.corner == Corner::far);
  CHECK(s9.select_state == CellLevel::high);
  CHECK(s9.unselect_state == UnselectPattern::low);

  CHECK_THROWS_AS(scenario_spec(0, scheme, 0), std::out_of_range);
  CHECK_THROWS_AS(scenario_spec(13, scheme, 0), std::out_of_range);
}

TEST_CASE("paired scenarios differ only in the corner") {
  BiasScheme scheme;
  for (auto [a, b] : {std::pair{1, 7}, {2, 8}, {3, 9}, {4, 10}, {5, 11}, {6, 12}}) {
    ScenarioSpec sa = scenario_spec(a, scheme, 0);
    ScenarioSpec sb = scenario_spec(b, scheme, 0);
    CHECK(sa.select_state == sb.select_state);
    CHECK(sa.unselect_state == sb.unselect_state);
    CHECK(sa.corner == Corner::near);
    CHECK(sb.corner == Corner::far);
  }
}

TEST_CASE("terminal builder places the table voltages") {
  BiasScheme half{SchemeKind::half_v, 1.0};
  TerminalDefaults d;

  SUBCASE("V/2 selected (0,0) on a 2x2 array") {
    TerminalConfig t = terminal_config_for(half, {0, 0}, 2, 2, d);
    CHECK(t.v_app_wl1 == std::vector<double>{1.0, 0.5});
    CHECK(t.v_app_bl1 == std::vector<double>{0.0, 0.5});
    CHECK(t.r_sens_wl1 == std::vector<double>{10.0, 10.0});
    CHECK(t.r_sens_bl1 == std::vector<double>{1e3, 10.0});
    CHECK(t.r_sens_wl2 == std::vector<double>{1e8, 1e8});
    CHECK(t.v_app_wl2 == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("V/3 biases") {
    BiasScheme third{SchemeKind::third_v, 1.0};
    TerminalConfig t = terminal_config_for(third, {1, 1}, 2, 2, d);
    CHECK(t.v_app_wl1[0] == doctest::Approx(1.0 / 3));
    CHECK(t.v_app_wl1[1] == 1.0);
    CHECK(t.v_app_bl1[0] == doctest::Approx(2.0 / 3));
    CHECK(t.v_app_bl1[1] == 0.0);
  }
  SUBCASE("dual-side biasing mirrors WL1 onto WL2") {
    TerminalConfig t = terminal_config_for(half, {0, 0}, 2, 2, d,
                                           BiasSides::dual, BiasSides::single);
    CHECK(t.v_app_wl2 == t.v_app_wl1);
    CHECK(t.r_sens_wl2 == t.r_sens_wl1);
    CHECK(t.r_sens_bl2 == std::vector<double>{1e8, 1e8});
  }
  SUBCASE("dual-side grounding mirrors BL1 onto BL2") {
    TerminalConfig t = terminal_config_for(half, {0, 0}, 2, 2, d,
                                           BiasSides::single, BiasSides::dual);
    CHECK(t.v_app_bl2 == t.v_app_bl1);
    CHECK(t.r_sens_bl2 == t.r_sens_bl1);
  }
  SUBCASE("voltage overrides win") {
    TerminalDefaults ovr = d;
    ovr.v_app_wl1_unselected = 0.4;
    ovr.v_app_bl2_selected = 0.1;
    TerminalConfig t = terminal_config_for(half, {0, 0}, 2, 2, ovr);
    CHECK(t.v_app_wl1[1] == 0.4);
    CHECK(t.v_app_bl2[0] == 0.1);
  }
  SUBCASE("out-of-range selection") {
    CHECK_THROWS_AS(terminal_config_for(half, {2, 0}, 2, 2, d),
                    std::out_of_range);
  }
}

TEST_CASE("run_scenario forces the selected state over the random draw") {
  RunConfig cfg = small_config();
  ScenarioSpec spec = scenario_spec(12, cfg.scheme, cfg.seed);  // low, random
  ScenarioResult r = run_scenario(spec, cfg);
  CHECK(r.selected == std::pair{4, 4});
  CHECK(r.solve.converged);
  // selected low cell draws far more than any high neighbor would
  CHECK(r.metrics.i_select > 1e-5);
}

TEST_CASE("run_scenario is deterministic") {
  RunConfig cfg = small_config();
  ScenarioSpec spec = scenario_spec(5, cfg.scheme, cfg.seed);
  ScenarioResult a = run_scenario(spec, cfg);
  ScenarioResult b = run_scenario(spec, cfg);
  CHECK(a.metrics.apparent_resistance == b.metrics.apparent_resistance);
  CHECK(a.metrics.v_sense == b.metrics.v_sense);
  CHECK(a.solve.iterations == b.solve.iterations);
}

TEST_CASE("apparent resistance orderings across the protocol") {
  // Grouping seen in the reference results: with a high selected cell the
  // unselect state orders the reads high > random > low; with a low
  // selected cell the far corner reads above the near one.
  RunConfig cfg = small_config(20);
  cfg.r_wl = cfg.r_bl = 5.0;
  auto results = run_all_scenarios(cfg, 2);
  auto app = [&](int idx) { return results[idx - 1].metrics.apparent_resistance; };
  for (const auto& r : results) CHECK(r.solve.converged);

  CHECK(app(1) > app(5));
  CHECK(app(5) > app(3));
  CHECK(app(7) > app(11));
  CHECK(app(11) > app(9));
  // line-resistance effect on low-select reads
  CHECK(app(8) > app(2));
  CHECK(app(10) > app(4));
  CHECK(app(12) > app(6));
  // high-select near/far pairs sit close together
  CHECK(std::abs(app(7) - app(1)) / app(1) < 0.15);
}

TEST_CASE("worst_case_margin equals the explicit 8/9 difference") {
  RunConfig cfg = small_config();
  MarginResult mr = worst_case_margin(cfg);
  CHECK(mr.low_read.spec.index == 8);
  CHECK(mr.high_read.spec.index == 9);
  TerminalConfig term = terminal_config_for(cfg.scheme, {4, 4}, 5, 5,
                                            cfg.terminals);
  double direct = sense_margin(mr.low_read.solve, mr.high_read.solve, {4, 4},
                               term);
  CHECK(mr.margin_pct == direct);
  CHECK(mr.margin_pct > 0.0);
}

TEST_CASE("margin failure carries the scenario index") {
  RunConfig cfg = small_config();
  cfg.terminals.r_sens_bl1_selected = 1e5;  // oscillation-prone
  cfg.solver.max_iterations = 3;
  try {
    worst_case_margin(cfg);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("scenario") != std::string::npos);
  }
}

TEST_CASE("apply_axis touches exactly the swept knob") {
  RunConfig base = small_config();
  CHECK(apply_axis(base, SweepAxis::line_resistance, 7.0).r_wl == 7.0);
  CHECK(apply_axis(base, SweepAxis::line_resistance, 7.0).r_bl == 7.0);
  CHECK(apply_axis(base, SweepAxis::array_size, 12.0).m == 12);
  CHECK(apply_axis(base, SweepAxis::i_s, 1e-13).selector->i_s == 1e-13);
  CHECK(apply_axis(base, SweepAxis::eta, 1.5).selector->eta == 1.5);
  CHECK(apply_axis(base, SweepAxis::temperature, 350.0).selector->temperature ==
        350.0);
  CHECK(apply_axis(base, SweepAxis::r_sens_ratio, 0.5)
            .terminals.r_sens_bl1_selected == 0.5 * base.r_low);
  RunConfig ohmic = base;
  ohmic.selector.reset();
  CHECK_THROWS_AS(apply_axis(ohmic, SweepAxis::eta, 1.5), std::invalid_argument);
}

TEST_CASE("run_sweep emits ordered rows with margin rows per point") {
  SweepSpec spec;
  spec.base = small_config();
  spec.axis = SweepAxis::i_s;
  spec.points = {1e-13, 1e-12, 1e-11};
  spec.scenarios = {8, 9};
  SweepTable t = run_sweep(spec, 2);
  REQUIRE(t.rows.size() == 9);  // 3 points x (2 scenarios + margin)
  for (int p = 0; p < 3; ++p) {
    CHECK(t.rows[3 * p].scenario == 8);
    CHECK(t.rows[3 * p + 1].scenario == 9);
    CHECK(t.rows[3 * p + 2].is_margin);
    CHECK(t.rows[3 * p].axis_value == spec.points[p]);
    CHECK(t.rows[3 * p + 2].margin_pct ==
          doctest::Approx(100.0 * (t.rows[3 * p].v_sense -
                                   t.rows[3 * p + 1].v_sense)));
  }
}

TEST_CASE("no margin rows without the 8/9 pair") {
  SweepSpec spec;
  spec.base = small_config();
  spec.axis = SweepAxis::eta;
  spec.points = {1.5, 1.8};
  spec.scenarios = {1, 8};
  SweepTable t = run_sweep(spec, 1);
  CHECK(t.rows.size() == 4);
  for (const auto& r : t.rows) CHECK_FALSE(r.is_margin);
}

TEST_CASE("sweep output does not depend on the worker count") {
  SweepSpec spec;
  spec.base = small_config();
  spec.axis = SweepAxis::line_resistance;
  spec.points = {1.0, 5.0, 20.0};
  spec.scenarios = {2, 8, 9};
  std::string one = table_bytes(run_sweep(spec, 1));
  std::string four = table_bytes(run_sweep(spec, 4));
  CHECK(one == four);
}

TEST_CASE("sweep spec validation") {
  SweepSpec spec;
  spec.base = small_config();
  spec.axis = SweepAxis::i_s;
  spec.scenarios = {8};
  spec.points = {};
  CHECK_THROWS_AS(run_sweep(spec, 1), std::invalid_argument);
  spec.points = {1e-12, 1e-12};
  CHECK_THROWS_AS(run_sweep(spec, 1), std::invalid_argument);
  spec.points = {1e-13, -1e-12};
  CHECK_THROWS_AS(run_sweep(spec, 1), std::invalid_argument);
  spec.points = {1e-13};
  spec.scenarios = {8, 8};
  CHECK_THROWS_AS(run_sweep(spec, 1), std::invalid_argument);
  spec.scenarios = {13};
  CHECK_THROWS_AS(run_sweep(spec, 1), std::invalid_argument);
}

TEST_CASE("failed points stay in the table") {
  SweepSpec spec;
  spec.base = small_config();
  spec.base.terminals.r_sens_bl1_selected = 1e5;
  spec.base.solver.max_iterations = 3;  // guarantee failure
  spec.axis = SweepAxis::i_s;
  spec.points = {1e-12};
  spec.scenarios = {8, 9};
  SweepTable t = run_sweep(spec, 1);
  REQUIRE(t.rows.size() == 3);
  CHECK_FALSE(t.rows[0].converged);
  CHECK_FALSE(t.rows[2].converged);  // margin row marked too
}

TEST_CASE("array-size sweep rebuilds square grids") {
  SweepSpec spec;
  spec.base = small_config();
  spec.axis = SweepAxis::array_size;
  spec.points = {4, 8};
  spec.scenarios = {9};
  SweepTable t = run_sweep(spec, 2);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].converged);
  CHECK(t.rows[1].converged);
  // larger arrays leak more: apparent resistance falls
  CHECK(t.rows[0].apparent_resistance > t.rows[1].apparent_resistance);
}

TEST_CASE("current map cases") {
  RunConfig cfg = small_config(10);
  cfg.selector = SelectorParams{1.7, 1e-12, 300.0};
  cfg.seed = 7;

  CurrentMap a = current_map_case(BiasSides::single, BiasSides::single, cfg);
  REQUIRE(a.solve.converged);
  CurrentMap d = current_map_case(BiasSides::dual, BiasSides::dual, cfg);
  REQUIRE(d.solve.converged);

  StatePattern pattern{StateKind::random, cfg.r_low, cfg.r_high, cfg.seed};
  Grid states = build_state_pattern(pattern, 10, 10);

  SUBCASE("single/single peaks near the source-and-ground corner") {
    // Local state randomness jitters the exact argmax; the envelope pins
    // it to the near-corner region.
    double best = -1.0;
    int bi = -1, bj = -1;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        if (states(i, j) == cfg.r_low && a.i_cell(i, j) > best) {
          best = a.i_cell(i, j);
          bi = i;
          bj = j;
        }
    CHECK(bi + bj <= 6);
    // and the far low corner region carries the least
    double worst = 1e300;
    int wi = -1, wj = -1;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        if (states(i, j) == cfg.r_low && a.i_cell(i, j) < worst) {
          worst = a.i_cell(i, j);
          wi = i;
          wj = j;
        }
    CHECK(wi + wj >= 12);
  }
  SUBCASE("dual/dual is more uniform than single/single") {
    auto low_ratio = [&](const Grid& g) {
      double lo = 1e300, hi = 0.0;
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
          if (states(i, j) == cfg.r_low) {
            lo = std::min(lo, g(i, j));
            hi = std::max(hi, g(i, j));
          }
      return hi / lo;
    };
    CHECK(low_ratio(d.i_cell) < low_ratio(a.i_cell));
  }
  SUBCASE("maps are deterministic") {
    CurrentMap a2 = current_map_case(BiasSides::single, BiasSides::single, cfg);
    CHECK(std::memcmp(a.i_cell.data().data(), a2.i_cell.data().data(),
                      100 * sizeof(double)) == 0);
  }
}

TEST_CASE("uniform-low maps: positions and transposition") {
  // On a uniform grid the spatial trend is exact: dual-biased rows push
  // the weakest cell to the far-ground row's middle column, and the b/c
  // cases are transposes when r_wl == r_bl.
  const int size = 10;
  ArrayConfig array;
  array.m = array.n = size;
  array.cell_resistance = Grid(size, size, 1e4);
  array.r_wl = array.r_bl = 1.0;
  array.selector = SelectorParams{1.7, 1e-12, 300.0};
  TerminalDefaults d;
  IterationSettings s;
  s.rel_tol = 1e-8;

  TerminalConfig ta = map_terminal_config(1.0, size, size, d, BiasSides::single,
                                          BiasSides::single);
  TerminalConfig tb = map_terminal_config(1.0, size, size, d, BiasSides::dual,
                                          BiasSides::single);
  TerminalConfig tc = map_terminal_config(1.0, size, size, d, BiasSides::single,
                                          BiasSides::dual);
  SolveResult ra = solve_nonlinear(array, ta, s);
  SolveResult rb = solve_nonlinear(array, tb, s);
  SolveResult rc = solve_nonlinear(array, tc, s);
  REQUIRE(ra.converged);
  REQUIRE(rb.converged);
  REQUIRE(rc.converged);

  // single/single on the uniform grid: extremes sit exactly on the corners
  int ai = 0, aj = 0, zi = 0, zj = 0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      if (ra.i_cell(i, j) > ra.i_cell(ai, aj)) { ai = i; aj = j; }
      if (ra.i_cell(i, j) < ra.i_cell(zi, zj)) { zi = i; zj = j; }
    }
  CHECK(ai == 0);
  CHECK(aj == 0);
  CHECK(zi == size - 1);
  CHECK(zj == size - 1);

  auto argmin = [&](const Grid& g) {
    int bi = 0, bj = 0;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if (g(i, j) < g(bi, bj)) {
          bi = i;
          bj = j;
        }
    return std::pair{bi, bj};
  };
  auto [bi, bj] = argmin(rb.i_cell);
  CHECK(bi == size - 1);
  CHECK((bj == size / 2 || bj == size / 2 - 1));
  auto [ci, cj] = argmin(rc.i_cell);
  CHECK((ci == size / 2 || ci == size / 2 - 1));
  CHECK(cj == size - 1);

  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      CHECK(rb.i_cell(i, j) == doctest::Approx(rc.i_cell(j, i)).epsilon(1e-4));
}

TEST_CASE("default_jobs honors the environment") {
  setenv("XBARSIM_JOBS", "3", 1);
  CHECK(default_jobs() == 3);
  unsetenv("XBARSIM_JOBS");
  CHECK(default_jobs() >= 1);
}
