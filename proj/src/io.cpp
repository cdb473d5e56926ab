#include "xbarsim/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace xbarsim {

using nlohmann::json;

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", value);
  return buf;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

// Pulls known keys out of a JSON object and rejects everything else.
class Section {
 public:
  Section(const json& j, std::string path) : path_(std::move(path)) {
    if (!j.is_object()) fail(path_ + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) fields_[it.key()] = &it.value();
  }

  ~Section() = default;

  const json* take(const std::string& key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) return nullptr;
    const json* v = it->second;
    fields_.erase(it);
    return v;
  }

  void finish() const {
    if (!fields_.empty())
      fail("unknown key \"" + path_ + "." + fields_.begin()->first + "\"");
  }

  double number(const std::string& key, double dflt) {
    const json* v = take(key);
    if (!v) return dflt;
    if (!v->is_number()) fail(path_ + "." + key + " must be a number");
    return v->get<double>();
  }

  int integer(const std::string& key, int dflt) {
    const json* v = take(key);
    if (!v) return dflt;
    if (!v->is_number_integer()) fail(path_ + "." + key + " must be an integer");
    return v->get<int>();
  }

  std::string text(const std::string& key, const std::string& dflt) {
    const json* v = take(key);
    if (!v) return dflt;
    if (!v->is_string()) fail(path_ + "." + key + " must be a string");
    return v->get<std::string>();
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(path_ + "." + key + " must be a number");
    return v->get<double>();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::map<std::string, const json*> fields_;
};

RunConfig parse_config_json(const json& root) {
  RunConfig cfg;
  Section top(root, "$");

  if (const json* j = top.take("array")) {
    Section s(*j, "array");
    cfg.m = s.integer("m", cfg.m);
    cfg.n = s.integer("n", cfg.n);
    cfg.r_wl = s.number("r_wl", cfg.r_wl);
    cfg.r_bl = s.number("r_bl", cfg.r_bl);
    cfg.r_low = s.number("r_low", cfg.r_low);
    cfg.r_high = s.number("r_high", cfg.r_high);
    s.finish();
  }
  if (const json* j = top.take("selector")) {
    if (j->is_null()) {
      cfg.selector.reset();
    } else {
      Section s(*j, "selector");
      SelectorParams sel = cfg.selector.value_or(SelectorParams{});
      sel.eta = s.number("eta", sel.eta);
      sel.i_s = s.number("i_s", sel.i_s);
      sel.temperature = s.number("temperature", sel.temperature);
      std::string model = s.text("model", cfg.diode_model == DiodeModel::paper_eq2
                                              ? "paper_eq2"
                                              : "exact_banwell");
      if (model == "paper_eq2") cfg.diode_model = DiodeModel::paper_eq2;
      else if (model == "exact_banwell") cfg.diode_model = DiodeModel::exact_banwell;
      else fail("selector.model must be \"paper_eq2\" or \"exact_banwell\"");
      cfg.selector = sel;
      s.finish();
    }
  }
  if (const json* j = top.take("scheme")) {
    Section s(*j, "scheme");
    std::string kind = s.text("kind", "half_v");
    if (kind == "half_v") cfg.scheme.kind = SchemeKind::half_v;
    else if (kind == "third_v") cfg.scheme.kind = SchemeKind::third_v;
    else if (kind == "custom") cfg.scheme.kind = SchemeKind::custom;
    else fail("scheme.kind must be \"half_v\", \"third_v\" or \"custom\"");
    cfg.scheme.read_voltage = s.number("read_voltage", cfg.scheme.read_voltage);
    cfg.scheme.custom_unselected_wl =
        s.number("unselected_wl", cfg.scheme.custom_unselected_wl);
    cfg.scheme.custom_unselected_bl =
        s.number("unselected_bl", cfg.scheme.custom_unselected_bl);
    s.finish();
  }
  if (const json* j = top.take("terminals")) {
    Section s(*j, "terminals");
    TerminalDefaults& t = cfg.terminals;
    t.r_sens_wl1 = s.number("r_sens_wl1", t.r_sens_wl1);
    t.r_sens_wl2 = s.number("r_sens_wl2", t.r_sens_wl2);
    t.r_sens_bl1_selected = s.number("r_sens_bl1_selected", t.r_sens_bl1_selected);
    t.r_sens_bl1_unselected =
        s.number("r_sens_bl1_unselected", t.r_sens_bl1_unselected);
    t.r_sens_bl2 = s.number("r_sens_bl2", t.r_sens_bl2);
    t.v_app_wl1_selected = s.optional_number("v_app_wl1_selected");
    t.v_app_wl1_unselected = s.optional_number("v_app_wl1_unselected");
    t.v_app_wl2_selected = s.optional_number("v_app_wl2_selected");
    t.v_app_wl2_unselected = s.optional_number("v_app_wl2_unselected");
    t.v_app_bl1_selected = s.optional_number("v_app_bl1_selected");
    t.v_app_bl1_unselected = s.optional_number("v_app_bl1_unselected");
    t.v_app_bl2_selected = s.optional_number("v_app_bl2_selected");
    t.v_app_bl2_unselected = s.optional_number("v_app_bl2_unselected");
    s.finish();
  }
  if (const json* j = top.take("solver")) {
    Section s(*j, "solver");
    cfg.solver.rel_tol = s.number("rel_tol", cfg.solver.rel_tol);
    cfg.solver.max_iterations =
        s.integer("max_iterations", cfg.solver.max_iterations);
    cfg.solver.damping = s.number("damping", cfg.solver.damping);
    std::string ls = s.text("linear_solver", "automatic");
    if (ls == "automatic") cfg.solver.linear_solver = LinearSolverKind::automatic;
    else if (ls == "direct") cfg.solver.linear_solver = LinearSolverKind::direct;
    else if (ls == "iterative")
      cfg.solver.linear_solver = LinearSolverKind::iterative;
    else fail("solver.linear_solver must be \"automatic\", \"direct\" or \"iterative\"");
    s.finish();
  }
  if (const json* j = top.take("seed")) {
    if (!j->is_number_unsigned() && !j->is_number_integer())
      fail("$.seed must be an integer");
    cfg.seed = j->get<std::uint64_t>();
  }
  top.finish();

  auto errs = validate(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    fail(msg);
  }
  return cfg;
}

}  // namespace

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> errs;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      errs.push_back(std::string(name) + " must be positive and finite");
  };
  if (cfg.m < 1) errs.push_back("array.m must be >= 1");
  if (cfg.n < 1) errs.push_back("array.n must be >= 1");
  if (cfg.r_wl < 0.0) errs.push_back("array.r_wl must be >= 0");
  if (cfg.r_bl < 0.0) errs.push_back("array.r_bl must be >= 0");
  positive(cfg.r_low, "array.r_low");
  positive(cfg.r_high, "array.r_high");
  if (cfg.r_low > 0 && cfg.r_high > 0 && !(cfg.r_low < cfg.r_high))
    errs.push_back("array.r_low must be < array.r_high");
  if (cfg.selector) {
    positive(cfg.selector->eta, "selector.eta");
    positive(cfg.selector->i_s, "selector.i_s");
    positive(cfg.selector->temperature, "selector.temperature");
  }
  positive(cfg.scheme.read_voltage, "scheme.read_voltage");
  positive(cfg.terminals.r_sens_wl1, "terminals.r_sens_wl1");
  positive(cfg.terminals.r_sens_wl2, "terminals.r_sens_wl2");
  positive(cfg.terminals.r_sens_bl1_selected, "terminals.r_sens_bl1_selected");
  positive(cfg.terminals.r_sens_bl1_unselected,
           "terminals.r_sens_bl1_unselected");
  positive(cfg.terminals.r_sens_bl2, "terminals.r_sens_bl2");
  if (!(cfg.solver.rel_tol > 0.0 && cfg.solver.rel_tol < 1.0))
    errs.push_back("solver.rel_tol must be in (0, 1)");
  if (cfg.solver.max_iterations < 1)
    errs.push_back("solver.max_iterations must be >= 1");
  if (!(cfg.solver.damping > 0.0 && cfg.solver.damping <= 1.0))
    errs.push_back("solver.damping must be in (0, 1]");
  return errs;
}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("config syntax error: ") + e.what());
  }
  return parse_config_json(root);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    fail(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const RunConfig& cfg) {
  json root;
  root["array"] = {{"m", cfg.m},        {"n", cfg.n},
                   {"r_wl", cfg.r_wl},  {"r_bl", cfg.r_bl},
                   {"r_low", cfg.r_low}, {"r_high", cfg.r_high}};
  if (cfg.selector) {
    root["selector"] = {
        {"eta", cfg.selector->eta},
        {"i_s", cfg.selector->i_s},
        {"temperature", cfg.selector->temperature},
        {"model", cfg.diode_model == DiodeModel::paper_eq2 ? "paper_eq2"
                                                           : "exact_banwell"}};
  } else {
    root["selector"] = nullptr;
  }
  const char* kind = cfg.scheme.kind == SchemeKind::half_v    ? "half_v"
                     : cfg.scheme.kind == SchemeKind::third_v ? "third_v"
                                                              : "custom";
  root["scheme"] = {{"kind", kind},
                    {"read_voltage", cfg.scheme.read_voltage},
                    {"unselected_wl", cfg.scheme.custom_unselected_wl},
                    {"unselected_bl", cfg.scheme.custom_unselected_bl}};
  json t = {{"r_sens_wl1", cfg.terminals.r_sens_wl1},
            {"r_sens_wl2", cfg.terminals.r_sens_wl2},
            {"r_sens_bl1_selected", cfg.terminals.r_sens_bl1_selected},
            {"r_sens_bl1_unselected", cfg.terminals.r_sens_bl1_unselected},
            {"r_sens_bl2", cfg.terminals.r_sens_bl2}};
  auto put_opt = [&](const char* key, const std::optional<double>& v) {
    if (v) t[key] = *v;
  };
  put_opt("v_app_wl1_selected", cfg.terminals.v_app_wl1_selected);
  put_opt("v_app_wl1_unselected", cfg.terminals.v_app_wl1_unselected);
  put_opt("v_app_wl2_selected", cfg.terminals.v_app_wl2_selected);
  put_opt("v_app_wl2_unselected", cfg.terminals.v_app_wl2_unselected);
  put_opt("v_app_bl1_selected", cfg.terminals.v_app_bl1_selected);
  put_opt("v_app_bl1_unselected", cfg.terminals.v_app_bl1_unselected);
  put_opt("v_app_bl2_selected", cfg.terminals.v_app_bl2_selected);
  put_opt("v_app_bl2_unselected", cfg.terminals.v_app_bl2_unselected);
  root["terminals"] = t;
  const char* ls =
      cfg.solver.linear_solver == LinearSolverKind::automatic ? "automatic"
      : cfg.solver.linear_solver == LinearSolverKind::direct  ? "direct"
                                                              : "iterative";
  root["solver"] = {{"rel_tol", cfg.solver.rel_tol},
                    {"max_iterations", cfg.solver.max_iterations},
                    {"damping", cfg.solver.damping},
                    {"linear_solver", ls}};
  root["seed"] = cfg.seed;
  return root.dump(2) + "\n";
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path.string());
  return out;
}

}  // namespace

void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << config_to_json(cfg);
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_table(const SweepTable& table, std::ostream& os) {
  os << "axis_value,scenario,apparent_resistance_ohm,v_sense_v,"
        "sense_margin_pct,i_select_a,i_leak_a,iterations,kcl_residual_a,"
        "converged\n";
  for (const auto& row : table.rows) {
    os << format_number(row.axis_value) << ',';
    if (row.is_margin) {
      os << "margin,,," << format_number(row.margin_pct) << ",,,,";
    } else {
      os << row.scenario << ',' << format_number(row.apparent_resistance)
         << ',' << format_number(row.v_sense) << ",,"
         << format_number(row.i_select) << ',' << format_number(row.i_leak)
         << ',' << row.iterations << ',' << format_number(row.kcl_residual);
    }
    os << ',' << (row.converged ? 1 : 0) << '\n';
  }
}

void emit_table(const SweepTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  emit_table(table, out);
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_map(const Grid& grid, std::ostream& os) {
  os << "i,j,value\n";
  for (int i = 0; i < grid.rows(); ++i)
    for (int j = 0; j < grid.cols(); ++j)
      os << (i + 1) << ',' << (j + 1) << ',' << format_number(grid(i, j))
         << '\n';
}

void emit_map(const Grid& grid, const std::filesystem::path& path) {
  auto out = open_output(path);
  emit_map(grid, out);
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_run_summary(const ReadMetrics& metrics, const SolveResult& solve,
                      std::ostream& os) {
  os << "apparent_resistance_ohm,v_sense_v,i_select_a,i_leak_a,iterations,"
        "max_rel_delta,kcl_residual_a,converged\n";
  os << format_number(metrics.apparent_resistance) << ','
     << format_number(metrics.v_sense) << ',' << format_number(metrics.i_select)
     << ',' << format_number(metrics.i_leak) << ',' << solve.iterations << ','
     << format_number(solve.max_rel_delta) << ','
     << format_number(solve.kcl_residual) << ',' << (solve.converged ? 1 : 0)
     << '\n';
}

void emit_run_summary(const ReadMetrics& metrics, const SolveResult& solve,
                      const std::filesystem::path& path) {
  auto out = open_output(path);
  emit_run_summary(metrics, solve, out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace xbarsim
