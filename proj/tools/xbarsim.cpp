#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "xbarsim/io.hpp"

namespace fs = std::filesystem;
using namespace xbarsim;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return parse_config(fs::path(path));
}

// Empty --out means: primary table to stdout, nothing else written.
struct Output {
  fs::path dir;
  bool to_stdout = false;

  explicit Output(const std::string& out) {
    if (out.empty()) {
      to_stdout = true;
    } else {
      dir = out;
      fs::create_directories(dir);
    }
  }

  void table(const SweepTable& t, const std::string& name) const {
    if (to_stdout) emit_table(t, std::cout);
    else {
      emit_table(t, dir / name);
      std::cerr << "wrote " << (dir / name).string() << "\n";
    }
  }
  void map(const Grid& g, const std::string& name) const {
    if (to_stdout) emit_map(g, std::cout);
    else {
      emit_map(g, dir / name);
      std::cerr << "wrote " << (dir / name).string() << "\n";
    }
  }
  void aux_map(const Grid& g, const std::string& name) const {
    if (to_stdout) return;
    emit_map(g, dir / name);
    std::cerr << "wrote " << (dir / name).string() << "\n";
  }
  void config(const RunConfig& cfg) const {
    if (to_stdout) return;
    write_config(cfg, dir / "resolved_config.json");
    std::cerr << "wrote " << (dir / "resolved_config.json").string() << "\n";
  }
};

std::pair<int, int> parse_select(const std::string& text, int m, int n) {
  int i = 0, j = 0;
  char comma = 0;
  std::istringstream is(text);
  if (!(is >> i >> comma >> j) || comma != ',')
    throw ConfigError("--select expects \"i,j\" (1-based)");
  if (i < 1 || i > m || j < 1 || j > n)
    throw ConfigError("--select out of range for " + std::to_string(m) + "x" +
                      std::to_string(n) + " array");
  return {i - 1, j - 1};
}

std::vector<double> sweep_points(double from, double to, int points, bool log_axis,
                                 const std::string& values) {
  std::vector<double> pts;
  if (!values.empty()) {
    std::istringstream is(values);
    std::string tok;
    while (std::getline(is, tok, ',')) pts.push_back(std::stod(tok));
    return pts;
  }
  if (points < 1) throw ConfigError("--points must be >= 1");
  if (points == 1) return {from};
  if (log_axis && (from <= 0.0 || to <= 0.0))
    throw ConfigError("--log requires positive --from/--to");
  for (int k = 0; k < points; ++k) {
    double t = static_cast<double>(k) / (points - 1);
    pts.push_back(log_axis ? from * std::pow(to / from, t)
                           : from + (to - from) * t);
  }
  return pts;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "line_resistance") return SweepAxis::line_resistance;
  if (name == "array_size") return SweepAxis::array_size;
  if (name == "i_s") return SweepAxis::i_s;
  if (name == "eta") return SweepAxis::eta;
  if (name == "temperature") return SweepAxis::temperature;
  if (name == "r_sens_ratio") return SweepAxis::r_sens_ratio;
  throw ConfigError("unknown sweep axis \"" + name + "\"");
}

BiasSides parse_sides(const std::string& name, const char* flag) {
  if (name == "single") return BiasSides::single;
  if (name == "dual") return BiasSides::dual;
  throw ConfigError(std::string(flag) + " must be \"single\" or \"dual\"");
}

SweepRow scenario_row(const ScenarioResult& r, double axis_value) {
  SweepRow row;
  row.axis_value = axis_value;
  row.scenario = r.spec.index;
  row.apparent_resistance = r.metrics.apparent_resistance;
  row.v_sense = r.metrics.v_sense;
  row.i_select = r.metrics.i_select;
  row.i_leak = r.metrics.i_leak;
  row.iterations = r.solve.iterations;
  row.kcl_residual = r.solve.kcl_residual;
  row.converged = r.solve.converged;
  return row;
}

int run_command(const std::string& config, const std::string& select,
                const std::string& pattern, const std::string& select_state,
                const std::string& out) {
  RunConfig cfg = load_config(config);
  auto selected = parse_select(select, cfg.m, cfg.n);

  StatePattern sp;
  sp.r_low = cfg.r_low;
  sp.r_high = cfg.r_high;
  sp.seed = cfg.seed;
  if (pattern == "all_high") sp.kind = StateKind::all_high;
  else if (pattern == "all_low") sp.kind = StateKind::all_low;
  else if (pattern == "random") sp.kind = StateKind::random;
  else throw ConfigError("--pattern must be all_high, all_low or random");

  Grid states = build_state_pattern(sp, cfg.m, cfg.n);
  if (select_state == "low") states(selected.first, selected.second) = cfg.r_low;
  else if (select_state == "high")
    states(selected.first, selected.second) = cfg.r_high;
  else throw ConfigError("--select-state must be low or high");

  Timer timer;
  ArrayConfig array = make_array_config(cfg, std::move(states));
  TerminalConfig term =
      terminal_config_for(cfg.scheme, selected, cfg.m, cfg.n, cfg.terminals);
  SolveResult solve = solve_nonlinear(array, term, cfg.solver);
  std::cerr << "solve: " << solve.iterations << " iterations, "
            << timer.seconds() << " s, kcl residual " << solve.kcl_residual
            << " A\n";
  ReadMetrics metrics = compute_read_metrics(solve, selected, term);

  Output output(out);
  if (output.to_stdout) {
    emit_run_summary(metrics, solve, std::cout);
  } else {
    emit_run_summary(metrics, solve, output.dir / "summary.csv");
    std::cerr << "wrote " << (output.dir / "summary.csv").string() << "\n";
    output.aux_map(solve.i_cell, "i_cell.csv");
    output.aux_map(solve.v_wl, "v_wl.csv");
    output.aux_map(solve.v_bl, "v_bl.csv");
    output.aux_map(power_map(solve), "power.csv");
    output.config(cfg);
  }
  return solve.converged ? 0 : 2;
}

int scenarios_command(const std::string& config, const std::string& out,
                      int jobs) {
  RunConfig cfg = load_config(config);
  Timer timer;
  auto results = run_all_scenarios(cfg, jobs);
  std::cerr << "12 scenarios in " << timer.seconds() << " s\n";
  SweepTable table;
  bool all_ok = true;
  for (const auto& r : results) {
    table.rows.push_back(scenario_row(r, r.spec.index));
    all_ok = all_ok && r.solve.converged;
  }
  Output output(out);
  output.table(table, "scenarios.csv");
  output.config(cfg);
  return all_ok ? 0 : 2;
}

int sweep_command(const std::string& config, const std::string& axis,
                  double from, double to, int points, bool log_axis,
                  const std::string& values, const std::string& scenarios,
                  const std::string& out, int jobs) {
  SweepSpec spec;
  spec.base = load_config(config);
  spec.axis = parse_axis(axis);
  spec.points = sweep_points(from, to, points, log_axis, values);
  {
    std::istringstream is(scenarios);
    std::string tok;
    while (std::getline(is, tok, ',')) spec.scenarios.push_back(std::stoi(tok));
  }
  Timer timer;
  SweepTable table = run_sweep(spec, jobs);
  std::cerr << spec.points.size() << " points x " << spec.scenarios.size()
            << " scenarios in " << timer.seconds() << " s\n";
  int failed = 0;
  for (const auto& r : table.rows)
    if (!r.converged) ++failed;
  if (failed > 0) std::cerr << failed << " row(s) did not converge\n";
  Output output(out);
  output.table(table, "sweep.csv");
  output.config(spec.base);
  return 0;
}

int map_command(const std::string& config, const std::string& bias,
                const std::string& ground, const std::string& out) {
  RunConfig cfg = load_config(config);
  BiasSides b = parse_sides(bias, "--bias");
  BiasSides g = parse_sides(ground, "--ground");
  Timer timer;
  CurrentMap map = current_map_case(b, g, cfg);
  std::cerr << "map solve: " << map.solve.iterations << " iterations, "
            << timer.seconds() << " s\n";
  Output output(out);
  output.map(map.i_cell, "map_" + bias + "_" + ground + ".csv");
  output.config(cfg);
  return map.solve.converged ? 0 : 2;
}

int margin_command(const std::string& config, const std::string& out) {
  RunConfig cfg = load_config(config);
  Timer timer;
  MarginResult mr = worst_case_margin(cfg);
  std::cerr << "worst-case margin " << mr.margin_pct << " % in "
            << timer.seconds() << " s\n";
  SweepTable table;
  table.rows.push_back(scenario_row(mr.low_read, 0.0));
  table.rows.push_back(scenario_row(mr.high_read, 0.0));
  SweepRow margin;
  margin.is_margin = true;
  margin.margin_pct = mr.margin_pct;
  table.rows.push_back(margin);
  Output output(out);
  output.table(table, "margin.csv");
  output.config(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1D1R crossbar array read simulator"};
  app.require_subcommand(1);

  std::string config, out, select = "1,1", pattern = "all_high";
  std::string select_state = "low", axis = "i_s", values, scenarios = "1,2,3,4,5,6,7,8,9,10,11,12";
  std::string bias = "single", ground = "single";
  double from = 1e-14, to = 1e-10;
  int points = 9, jobs = 0;
  bool log_axis = false;

  auto add_common = [&](CLI::App* cmd, bool with_jobs) {
    cmd->add_option("--config", config, "JSON configuration file");
    cmd->add_option("--out", out,
                    "output directory (omit to print the table to stdout)");
    if (with_jobs)
      cmd->add_option("--jobs", jobs,
                      "worker threads (default: XBARSIM_JOBS or all cores)");
  };

  CLI::App* run = app.add_subcommand("run", "solve one read operation");
  add_common(run, false);
  run->add_option("--select", select, "selected cell \"i,j\", 1-based");
  run->add_option("--pattern", pattern, "unselected states: all_high|all_low|random");
  run->add_option("--select-state", select_state, "selected cell state: low|high");

  CLI::App* scen = app.add_subcommand("scenarios", "run the 12-scenario protocol");
  add_common(scen, true);

  CLI::App* sweep = app.add_subcommand("sweep", "sweep a parameter axis");
  add_common(sweep, true);
  sweep->add_option("--axis", axis,
                    "line_resistance|array_size|i_s|eta|temperature|r_sens_ratio");
  sweep->add_option("--from", from, "first point");
  sweep->add_option("--to", to, "last point");
  sweep->add_option("--points", points, "point count");
  sweep->add_flag("--log", log_axis, "log-spaced points");
  sweep->add_option("--values", values, "explicit comma-separated points");
  sweep->add_option("--scenarios", scenarios, "comma-separated scenario indices");

  CLI::App* map = app.add_subcommand("map", "whole-array read-current map");
  add_common(map, false);
  map->add_option("--bias", bias, "WL biasing sides: single|dual");
  map->add_option("--ground", ground, "BL grounding sides: single|dual");

  CLI::App* margin = app.add_subcommand("margin", "worst-case sense margin");
  add_common(margin, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed())
      return run_command(config, select, pattern, select_state, out);
    if (scen->parsed()) return scenarios_command(config, out, jobs);
    if (sweep->parsed())
      return sweep_command(config, axis, from, to, points, log_axis, values,
                           scenarios, out, jobs);
    if (map->parsed()) return map_command(config, bias, ground, out);
    if (margin->parsed()) return margin_command(config, out);
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
