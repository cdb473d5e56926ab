#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xbarsim/metrics.hpp"
#include "xbarsim/solver.hpp"

namespace xbarsim {

enum class SchemeKind { half_v, third_v, custom };

/// Read bias scheme. half_v: unselected WLs and BLs at read_voltage/2.
/// third_v: unselected WLs at read_voltage/3, unselected BLs at
/// 2*read_voltage/3. custom: caller-supplied unselected biases.
struct BiasScheme {
  SchemeKind kind = SchemeKind::half_v;
  double read_voltage = 1.0;
  double custom_unselected_wl = 0.0;  // SchemeKind::custom only
  double custom_unselected_bl = 0.0;

  double unselected_wl_bias() const;
  double unselected_bl_bias() const;

  bool operator==(const BiasScheme&) const = default;
};

/// Table-style terminal parameters: sense resistances per side plus
/// optional applied-voltage overrides that replace the scheme-derived
/// biases when set.
struct TerminalDefaults {
  double r_sens_wl1 = 10.0;
  double r_sens_wl2 = 1e8;
  double r_sens_bl1_selected = 1e3;
  double r_sens_bl1_unselected = 10.0;
  double r_sens_bl2 = 1e8;
  std::optional<double> v_app_wl1_selected, v_app_wl1_unselected;
  std::optional<double> v_app_wl2_selected, v_app_wl2_unselected;
  std::optional<double> v_app_bl1_selected, v_app_bl1_unselected;
  std::optional<double> v_app_bl2_selected, v_app_bl2_unselected;

  bool operator==(const TerminalDefaults&) const = default;
};

enum class BiasSides { single, dual };

/// Four-sided terminal configuration for reading cell (sel_i, sel_j):
/// selected WL driven at the read voltage, unselected lines at the
/// scheme biases, selected BL grounded through the selected sense
/// resistor, far sides open unless dual biasing/grounding is requested
/// (which mirrors the near-side voltages and sense resistances).
TerminalConfig terminal_config_for(const BiasScheme& scheme,
                                   std::pair<int, int> selected, int m, int n,
                                   const TerminalDefaults& defaults = {},
                                   BiasSides bias = BiasSides::single,
                                   BiasSides ground = BiasSides::single);

/// Terminals for whole-array current maps: every WL driven at
/// drive_voltage, every BL grounded through the unselected sense value.
TerminalConfig map_terminal_config(double drive_voltage, int m, int n,
                                   const TerminalDefaults& defaults = {},
                                   BiasSides bias = BiasSides::single,
                                   BiasSides ground = BiasSides::single);

enum class Corner { near, far };
enum class CellLevel { high, low };
enum class UnselectPattern { high, low, random };

/// One of the twelve protocol cases. Canonical numbering: within a
/// corner block of six, 1:(high,high) 2:(low,high) 3:(high,low)
/// 4:(low,low) 5:(high,random) 6:(low,random) as (select, unselect);
/// indices 1-6 read the near corner (1,1), 7-12 the far corner (m,n).
struct ScenarioSpec {
  int index = 1;
  Corner corner = Corner::near;
  CellLevel select_state = CellLevel::high;
  UnselectPattern unselect_state = UnselectPattern::high;
  BiasScheme scheme;
  std::uint64_t seed = 0;  // pattern seed, already mixed with the index
};

/// Expand index 1..12 into the canonical spec. The pattern seed is
/// base_seed ^ index so random scenarios draw independently.
ScenarioSpec scenario_spec(int index, const BiasScheme& scheme,
                           std::uint64_t base_seed);

/// Complete simulation configuration (array, cell states, scheme,
/// terminals, solver, seed). This is what the config file parses into.
struct RunConfig {
  int m = 100, n = 100;
  double r_wl = 5.0, r_bl = 5.0;
  double r_low = 1e4, r_high = 1e6;
  std::optional<SelectorParams> selector = SelectorParams{};
  DiodeModel diode_model = DiodeModel::paper_eq2;
  BiasScheme scheme;
  TerminalDefaults terminals;
  IterationSettings solver;
  std::uint64_t seed = 1;

  bool operator==(const RunConfig&) const = default;
};

ArrayConfig make_array_config(const RunConfig& cfg, Grid cell_resistance);

struct ScenarioResult {
  ScenarioSpec spec;
  std::pair<int, int> selected;
  SolveResult solve;
  ReadMetrics metrics;
};

/// Build the state grid (selected cell forced to its level after the
/// unselect pattern is drawn), build terminals, solve, compute metrics.
/// Deterministic for fixed inputs. Convergence failures are reported
/// through solve.converged, not thrown.
ScenarioResult run_scenario(const ScenarioSpec& spec, const RunConfig& cfg);

/// All twelve scenarios in index order; tasks run concurrently but the
/// result order and contents are independent of the worker count.
std::vector<ScenarioResult> run_all_scenarios(const RunConfig& cfg,
                                              int jobs = 0);

struct MarginResult {
  double margin_pct = 0.0;
  ScenarioResult low_read;   // scenario 8: far corner, select low, unselect high
  ScenarioResult high_read;  // scenario 9: far corner, select high, unselect low
};

/// Worst-case read window from scenarios 8 and 9. Throws SolverError
/// tagged with the scenario index if either solve fails to converge.
MarginResult worst_case_margin(const RunConfig& cfg);

enum class SweepAxis {
  line_resistance,
  array_size,
  i_s,
  eta,
  temperature,
  r_sens_ratio,  // r_sens_bl1_selected / r_low on the selected BL
};

struct SweepSpec {
  SweepAxis axis = SweepAxis::i_s;
  std::vector<double> points;   // non-empty, strictly monotone
  RunConfig base;
  std::vector<int> scenarios;   // subset of 1..12, ascending
};

/// One output row. Scenario rows carry the read metrics; a margin row
/// (scenario = 0) follows the scenario rows of a point whenever both
/// scenarios 8 and 9 were run.
struct SweepRow {
  double axis_value = 0.0;
  int scenario = 0;
  bool is_margin = false;
  double margin_pct = 0.0;
  double apparent_resistance = 0.0;
  double v_sense = 0.0;
  double i_select = 0.0;
  double i_leak = 0.0;
  int iterations = 0;
  double kcl_residual = 0.0;
  bool converged = true;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

/// Copy of base with the axis value applied.
RunConfig apply_axis(const RunConfig& base, SweepAxis axis, double value);

/// Run every (point, scenario) task, possibly concurrently, and collect
/// rows in specification order. jobs <= 0 selects the default worker
/// count (XBARSIM_JOBS or hardware concurrency). Output is identical
/// for every jobs value. Failed points stay in the table with
/// converged = false.
SweepTable run_sweep(const SweepSpec& spec, int jobs = 0);

struct CurrentMap {
  Grid i_cell;
  SolveResult solve;
};

/// Whole-array read-current map over a random state pattern with the
/// requested biasing/grounding sides.
CurrentMap current_map_case(BiasSides bias, BiasSides ground,
                            const RunConfig& cfg);

/// Worker count from XBARSIM_JOBS, else hardware concurrency.
int default_jobs();

}  // namespace xbarsim
