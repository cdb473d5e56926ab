#include "xbarsim/core.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace xbarsim {

double thermal_voltage(double temperature_k) {
  return constants::k_boltzmann * temperature_k / constants::elementary_charge;
}

Grid build_state_pattern(const StatePattern& pattern, int m, int n) {
  Grid grid(m, n);
  switch (pattern.kind) {
    case StateKind::all_high:
      for (auto& v : grid.data()) v = pattern.r_high;
      break;
    case StateKind::all_low:
      for (auto& v : grid.data()) v = pattern.r_low;
      break;
    case StateKind::random: {
      // Raw engine bits rather than a distribution: mt19937_64 output is
      // fully specified by the standard, so grids are portable bit-exact.
      std::mt19937_64 rng(pattern.seed);
      for (auto& v : grid.data())
        v = (rng() & 1u) ? pattern.r_low : pattern.r_high;
      break;
    }
  }
  return grid;
}

namespace {

void check_positive(std::vector<std::string>& errs, double value,
                    const std::string& field) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream os;
    os << field << " must be positive and finite, got " << value;
    errs.push_back(os.str());
  }
}

void check_non_negative(std::vector<std::string>& errs, double value,
                        const std::string& field) {
  if (value < 0.0 || !std::isfinite(value)) {
    std::ostringstream os;
    os << field << " must be non-negative and finite, got " << value;
    errs.push_back(os.str());
  }
}

void check_length(std::vector<std::string>& errs,
                  const std::vector<double>& v, int expected,
                  const std::string& field) {
  if (static_cast<int>(v.size()) != expected) {
    std::ostringstream os;
    os << field << " has length " << v.size() << ", expected " << expected;
    errs.push_back(os.str());
  }
}

void check_sense_vector(std::vector<std::string>& errs,
                        const std::vector<double>& v, int expected,
                        const std::string& field) {
  check_length(errs, v, expected, field);
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(v[k] > 0.0) || !std::isfinite(v[k])) {
      std::ostringstream os;
      os << field << "[" << k << "] must be positive and finite, got " << v[k];
      errs.push_back(os.str());
    }
  }
}

void check_voltage_vector(std::vector<std::string>& errs,
                          const std::vector<double>& v, int expected,
                          const std::string& field) {
  check_length(errs, v, expected, field);
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!std::isfinite(v[k])) {
      std::ostringstream os;
      os << field << "[" << k << "] must be finite, got " << v[k];
      errs.push_back(os.str());
    }
  }
}

}  // namespace

std::vector<std::string> validate(const ArrayConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.m < 1) errs.push_back("m must be >= 1, got " + std::to_string(cfg.m));
  if (cfg.n < 1) errs.push_back("n must be >= 1, got " + std::to_string(cfg.n));
  if (cfg.cell_resistance.rows() != cfg.m ||
      cfg.cell_resistance.cols() != cfg.n) {
    std::ostringstream os;
    os << "cell_resistance is " << cfg.cell_resistance.rows() << "x"
       << cfg.cell_resistance.cols() << ", expected " << cfg.m << "x" << cfg.n;
    errs.push_back(os.str());
  } else {
    for (int i = 0; i < cfg.m; ++i)
      for (int j = 0; j < cfg.n; ++j) {
        double r = cfg.cell_resistance(i, j);
        if (!(r > 0.0) || !std::isfinite(r)) {
          std::ostringstream os;
          os << "cell_resistance(" << i << "," << j
             << ") must be positive and finite, got " << r;
          errs.push_back(os.str());
        }
      }
  }
  check_non_negative(errs, cfg.r_wl, "r_wl");
  check_non_negative(errs, cfg.r_bl, "r_bl");
  if (cfg.selector) {
    check_positive(errs, cfg.selector->eta, "selector.eta");
    check_positive(errs, cfg.selector->i_s, "selector.i_s");
    check_positive(errs, cfg.selector->temperature, "selector.temperature");
  }
  return errs;
}

std::vector<std::string> validate(const ArrayConfig& cfg,
                                  const TerminalConfig& term) {
  std::vector<std::string> errs = validate(cfg);
  check_voltage_vector(errs, term.v_app_wl1, cfg.m, "v_app_wl1");
  check_voltage_vector(errs, term.v_app_wl2, cfg.m, "v_app_wl2");
  check_voltage_vector(errs, term.v_app_bl1, cfg.n, "v_app_bl1");
  check_voltage_vector(errs, term.v_app_bl2, cfg.n, "v_app_bl2");
  check_sense_vector(errs, term.r_sens_wl1, cfg.m, "r_sens_wl1");
  check_sense_vector(errs, term.r_sens_wl2, cfg.m, "r_sens_wl2");
  check_sense_vector(errs, term.r_sens_bl1, cfg.n, "r_sens_bl1");
  check_sense_vector(errs, term.r_sens_bl2, cfg.n, "r_sens_bl2");
  return errs;
}

std::vector<std::string> validate(const StatePattern& pattern) {
  std::vector<std::string> errs;
  check_positive(errs, pattern.r_low, "r_low");
  check_positive(errs, pattern.r_high, "r_high");
  if (errs.empty() && !(pattern.r_low < pattern.r_high)) {
    std::ostringstream os;
    os << "r_low (" << pattern.r_low << ") must be < r_high ("
       << pattern.r_high << ")";
    errs.push_back(os.str());
  }
  return errs;
}

namespace {
[[noreturn]] void throw_joined(const std::vector<std::string>& errs) {
  std::string msg = "invalid configuration:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw std::invalid_argument(msg);
}
}  // namespace

void validate_or_throw(const ArrayConfig& cfg) {
  auto errs = validate(cfg);
  if (!errs.empty()) throw_joined(errs);
}

void validate_or_throw(const ArrayConfig& cfg, const TerminalConfig& term) {
  auto errs = validate(cfg, term);
  if (!errs.empty()) throw_joined(errs);
}

}  // namespace xbarsim
