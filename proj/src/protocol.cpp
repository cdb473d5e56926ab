#include "xbarsim/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace xbarsim {

double BiasScheme::unselected_wl_bias() const {
  switch (kind) {
    case SchemeKind::half_v: return read_voltage / 2.0;
    case SchemeKind::third_v: return read_voltage / 3.0;
    case SchemeKind::custom: return custom_unselected_wl;
  }
  return 0.0;
}

double BiasScheme::unselected_bl_bias() const {
  switch (kind) {
    case SchemeKind::half_v: return read_voltage / 2.0;
    case SchemeKind::third_v: return 2.0 * read_voltage / 3.0;
    case SchemeKind::custom: return custom_unselected_bl;
  }
  return 0.0;
}

TerminalConfig terminal_config_for(const BiasScheme& scheme,
                                   std::pair<int, int> selected, int m, int n,
                                   const TerminalDefaults& d, BiasSides bias,
                                   BiasSides ground) {
  auto [si, sj] = selected;
  if (si < 0 || si >= m || sj < 0 || sj >= n)
    throw std::out_of_range("selected cell outside the array");

  auto pick = [](const std::optional<double>& ovr, double dflt) {
    return ovr.value_or(dflt);
  };
  TerminalConfig t;
  t.v_app_wl1.assign(m, pick(d.v_app_wl1_unselected, scheme.unselected_wl_bias()));
  t.v_app_wl1[si] = pick(d.v_app_wl1_selected, scheme.read_voltage);
  t.r_sens_wl1.assign(m, d.r_sens_wl1);
  t.v_app_wl2.assign(m, pick(d.v_app_wl2_unselected, 0.0));
  t.v_app_wl2[si] = pick(d.v_app_wl2_selected, 0.0);
  t.r_sens_wl2.assign(m, d.r_sens_wl2);

  t.v_app_bl1.assign(n, pick(d.v_app_bl1_unselected, scheme.unselected_bl_bias()));
  t.v_app_bl1[sj] = pick(d.v_app_bl1_selected, 0.0);
  t.r_sens_bl1.assign(n, d.r_sens_bl1_unselected);
  t.r_sens_bl1[sj] = d.r_sens_bl1_selected;
  t.v_app_bl2.assign(n, pick(d.v_app_bl2_unselected, 0.0));
  t.v_app_bl2[sj] = pick(d.v_app_bl2_selected, 0.0);
  t.r_sens_bl2.assign(n, d.r_sens_bl2);

  if (bias == BiasSides::dual) {
    t.v_app_wl2 = t.v_app_wl1;
    t.r_sens_wl2 = t.r_sens_wl1;
  }
  if (ground == BiasSides::dual) {
    t.v_app_bl2 = t.v_app_bl1;
    t.r_sens_bl2 = t.r_sens_bl1;
  }
  return t;
}

TerminalConfig map_terminal_config(double drive_voltage, int m, int n,
                                   const TerminalDefaults& d, BiasSides bias,
                                   BiasSides ground) {
  TerminalConfig t;
  t.v_app_wl1.assign(m, drive_voltage);
  t.r_sens_wl1.assign(m, d.r_sens_wl1);
  t.v_app_wl2.assign(m, bias == BiasSides::dual ? drive_voltage : 0.0);
  t.r_sens_wl2.assign(m, bias == BiasSides::dual ? d.r_sens_wl1 : d.r_sens_wl2);
  t.v_app_bl1.assign(n, 0.0);
  t.r_sens_bl1.assign(n, d.r_sens_bl1_unselected);
  t.v_app_bl2.assign(n, 0.0);
  t.r_sens_bl2.assign(n, ground == BiasSides::dual ? d.r_sens_bl1_unselected
                                                   : d.r_sens_bl2);
  return t;
}

ScenarioSpec scenario_spec(int index, const BiasScheme& scheme,
                           std::uint64_t base_seed) {
  if (index < 1 || index > 12)
    throw std::out_of_range("scenario index must be in 1..12");
  static constexpr CellLevel kSelect[6] = {
      CellLevel::high, CellLevel::low, CellLevel::high,
      CellLevel::low,  CellLevel::high, CellLevel::low};
  static constexpr UnselectPattern kUnselect[6] = {
      UnselectPattern::high,   UnselectPattern::high,   UnselectPattern::low,
      UnselectPattern::low,    UnselectPattern::random, UnselectPattern::random};
  ScenarioSpec s;
  s.index = index;
  s.corner = index <= 6 ? Corner::near : Corner::far;
  s.select_state = kSelect[(index - 1) % 6];
  s.unselect_state = kUnselect[(index - 1) % 6];
  s.scheme = scheme;
  s.seed = base_seed ^ static_cast<std::uint64_t>(index);
  return s;
}

ArrayConfig make_array_config(const RunConfig& cfg, Grid cell_resistance) {
  ArrayConfig a;
  a.m = cfg.m;
  a.n = cfg.n;
  a.cell_resistance = std::move(cell_resistance);
  a.r_wl = cfg.r_wl;
  a.r_bl = cfg.r_bl;
  a.selector = cfg.selector;
  a.diode_model = cfg.diode_model;
  return a;
}

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunConfig& cfg) {
  StatePattern pattern;
  pattern.r_low = cfg.r_low;
  pattern.r_high = cfg.r_high;
  pattern.seed = spec.seed;
  switch (spec.unselect_state) {
    case UnselectPattern::high: pattern.kind = StateKind::all_high; break;
    case UnselectPattern::low: pattern.kind = StateKind::all_low; break;
    case UnselectPattern::random: pattern.kind = StateKind::random; break;
  }
  Grid states = build_state_pattern(pattern, cfg.m, cfg.n);
  std::pair<int, int> selected =
      spec.corner == Corner::near ? std::pair{0, 0}
                                  : std::pair{cfg.m - 1, cfg.n - 1};
  // The random draw at the selected position is discarded by design.
  states(selected.first, selected.second) =
      spec.select_state == CellLevel::low ? cfg.r_low : cfg.r_high;

  ScenarioResult out;
  out.spec = spec;
  out.selected = selected;
  ArrayConfig array = make_array_config(cfg, std::move(states));
  TerminalConfig term =
      terminal_config_for(spec.scheme, selected, cfg.m, cfg.n, cfg.terminals);
  out.solve = solve_nonlinear(array, term, cfg.solver);
  out.metrics = compute_read_metrics(out.solve, selected, term);
  return out;
}

std::vector<ScenarioResult> run_all_scenarios(const RunConfig& cfg, int jobs) {
  if (jobs <= 0) jobs = default_jobs();
  std::vector<ScenarioResult> results(12);
  std::vector<std::exception_ptr> errors(12);
  std::atomic<std::size_t> next{0};
  int workers = std::max(1, std::min(jobs, 12));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < 12; k = next.fetch_add(1)) {
        try {
          results[k] = run_scenario(
              scenario_spec(static_cast<int>(k) + 1, cfg.scheme, cfg.seed), cfg);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

MarginResult worst_case_margin(const RunConfig& cfg) {
  MarginResult mr;
  mr.low_read = run_scenario(scenario_spec(8, cfg.scheme, cfg.seed), cfg);
  mr.high_read = run_scenario(scenario_spec(9, cfg.scheme, cfg.seed), cfg);
  for (const ScenarioResult* r : {&mr.low_read, &mr.high_read}) {
    if (!r->solve.converged) {
      std::ostringstream os;
      os << "scenario " << r->spec.index << ": solver did not converge (last delta "
         << r->solve.max_rel_delta << " after " << r->solve.iterations
         << " iterations)";
      throw SolverError(os.str());
    }
  }
  TerminalConfig term = terminal_config_for(cfg.scheme, mr.low_read.selected,
                                            cfg.m, cfg.n, cfg.terminals);
  mr.margin_pct = sense_margin(mr.low_read.solve, mr.high_read.solve,
                               mr.low_read.selected, term);
  return mr;
}

RunConfig apply_axis(const RunConfig& base, SweepAxis axis, double value) {
  RunConfig cfg = base;
  switch (axis) {
    case SweepAxis::line_resistance:
      cfg.r_wl = cfg.r_bl = value;
      break;
    case SweepAxis::array_size:
      cfg.m = cfg.n = static_cast<int>(value);
      break;
    case SweepAxis::i_s:
      if (!cfg.selector) throw std::invalid_argument("i_s sweep needs a selector");
      cfg.selector->i_s = value;
      break;
    case SweepAxis::eta:
      if (!cfg.selector) throw std::invalid_argument("eta sweep needs a selector");
      cfg.selector->eta = value;
      break;
    case SweepAxis::temperature:
      if (!cfg.selector)
        throw std::invalid_argument("temperature sweep needs a selector");
      cfg.selector->temperature = value;
      break;
    case SweepAxis::r_sens_ratio:
      cfg.terminals.r_sens_bl1_selected = value * cfg.r_low;
      break;
  }
  return cfg;
}

namespace {

void validate_sweep(const SweepSpec& spec) {
  if (spec.points.empty())
    throw std::invalid_argument("sweep points must be non-empty");
  bool inc = true, dec = true;
  for (std::size_t k = 1; k < spec.points.size(); ++k) {
    inc = inc && spec.points[k] > spec.points[k - 1];
    dec = dec && spec.points[k] < spec.points[k - 1];
  }
  if (!inc && !dec)
    throw std::invalid_argument("sweep points must be strictly monotone");
  bool needs_positive = spec.axis != SweepAxis::line_resistance;
  for (double p : spec.points) {
    if (needs_positive && !(p > 0.0))
      throw std::invalid_argument("sweep points must be positive");
    if (spec.axis == SweepAxis::line_resistance && p < 0.0)
      throw std::invalid_argument("line resistance points must be >= 0");
    if (spec.axis == SweepAxis::array_size && static_cast<int>(p) < 1)
      throw std::invalid_argument("array size points must be >= 1");
  }
  std::set<int> seen;
  for (int s : spec.scenarios) {
    if (s < 1 || s > 12)
      throw std::invalid_argument("scenario indices must be in 1..12");
    if (!seen.insert(s).second)
      throw std::invalid_argument("duplicate scenario index");
  }
}

void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& body) {
  int workers = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < count; k = next.fetch_add(1))
        body(k);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

int default_jobs() {
  if (const char* env = std::getenv("XBARSIM_JOBS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

SweepTable run_sweep(const SweepSpec& spec, int jobs) {
  validate_sweep(spec);
  if (jobs <= 0) jobs = default_jobs();

  const auto& scenarios = spec.scenarios;
  const std::size_t npts = spec.points.size();
  const std::size_t nsc = scenarios.size();
  const bool margin_rows =
      std::find(scenarios.begin(), scenarios.end(), 8) != scenarios.end() &&
      std::find(scenarios.begin(), scenarios.end(), 9) != scenarios.end();

  struct Slot {
    bool ok = false;
    std::string error;
    ScenarioResult result;
  };
  std::vector<Slot> slots(npts * nsc);

  parallel_for(npts * nsc, jobs, [&](std::size_t task) {
    std::size_t p = task / nsc, s = task % nsc;
    Slot& slot = slots[task];
    try {
      RunConfig cfg = apply_axis(spec.base, spec.axis, spec.points[p]);
      slot.result =
          run_scenario(scenario_spec(scenarios[s], cfg.scheme, cfg.seed), cfg);
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  });

  SweepTable table;
  table.rows.reserve(npts * (nsc + (margin_rows ? 1 : 0)));
  for (std::size_t p = 0; p < npts; ++p) {
    const ScenarioResult* sc8 = nullptr;
    const ScenarioResult* sc9 = nullptr;
    for (std::size_t s = 0; s < nsc; ++s) {
      const Slot& slot = slots[p * nsc + s];
      SweepRow row;
      row.axis_value = spec.points[p];
      row.scenario = scenarios[s];
      if (slot.ok) {
        row.apparent_resistance = slot.result.metrics.apparent_resistance;
        row.v_sense = slot.result.metrics.v_sense;
        row.i_select = slot.result.metrics.i_select;
        row.i_leak = slot.result.metrics.i_leak;
        row.iterations = slot.result.solve.iterations;
        row.kcl_residual = slot.result.solve.kcl_residual;
        row.converged = slot.result.solve.converged;
        if (scenarios[s] == 8) sc8 = &slot.result;
        if (scenarios[s] == 9) sc9 = &slot.result;
      } else {
        row.converged = false;
      }
      table.rows.push_back(row);
    }
    if (margin_rows) {
      SweepRow row;
      row.axis_value = spec.points[p];
      row.scenario = 0;
      row.is_margin = true;
      if (sc8 && sc9 && sc8->solve.converged && sc9->solve.converged) {
        RunConfig cfg = apply_axis(spec.base, spec.axis, spec.points[p]);
        TerminalConfig term = terminal_config_for(
            cfg.scheme, sc8->selected, cfg.m, cfg.n, cfg.terminals);
        row.margin_pct =
            sense_margin(sc8->solve, sc9->solve, sc8->selected, term);
      } else {
        row.converged = false;
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

CurrentMap current_map_case(BiasSides bias, BiasSides ground,
                            const RunConfig& cfg) {
  StatePattern pattern;
  pattern.kind = StateKind::random;
  pattern.r_low = cfg.r_low;
  pattern.r_high = cfg.r_high;
  pattern.seed = cfg.seed;
  Grid states = build_state_pattern(pattern, cfg.m, cfg.n);
  ArrayConfig array = make_array_config(cfg, std::move(states));
  TerminalConfig term = map_terminal_config(cfg.scheme.read_voltage, cfg.m,
                                            cfg.n, cfg.terminals, bias, ground);
  CurrentMap map;
  map.solve = solve_nonlinear(array, term, cfg.solver);
  map.i_cell = map.solve.i_cell;
  return map;
}

}  // namespace xbarsim
