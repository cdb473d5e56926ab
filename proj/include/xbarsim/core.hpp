#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xbarsim {

namespace constants {
// CODATA 2018 exact values.
inline constexpr double k_boltzmann = 1.380649e-23;        // J/K
inline constexpr double elementary_charge = 1.602176634e-19;  // C
}  // namespace constants

/// k_B * T / q in volts.
double thermal_voltage(double temperature_k);

enum class DiodeModel {
  paper_eq2,      // closed-form diode+resistor without the -I_s floor
  exact_banwell,  // exact series solution including the -I_s term
};

/// Selector diode parameters of the 1D1R cell.
struct SelectorParams {
  double eta = 1.8;           // ideality factor
  double i_s = 1e-12;         // reverse saturation current (A)
  double temperature = 300.0; // device temperature (K)

  double v_t() const { return thermal_voltage(temperature); }

  bool operator==(const SelectorParams&) const = default;
};

/// Dense row-major m x n grid of doubles. Indices are 0-based.
class Grid {
 public:
  Grid() = default;
  Grid(int m, int n, double fill = 0.0)
      : m_(m), n_(n), data_(static_cast<std::size_t>(m) * n, fill) {}

  int rows() const { return m_; }
  int cols() const { return n_; }

  double& operator()(int i, int j) { return data_[idx(i, j)]; }
  double operator()(int i, int j) const { return data_[idx(i, j)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Grid& other) const {
    return m_ == other.m_ && n_ == other.n_;
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * n_ + j;
  }
  int m_ = 0;
  int n_ = 0;
  std::vector<double> data_;
};

/// Crossbar geometry and cell model. Line resistances are per segment
/// between adjacent junctions; scalars here, expanded per segment inside
/// the solver so a future per-segment grid is a local change.
struct ArrayConfig {
  int m = 0;  // word-line (row) count
  int n = 0;  // bit-line (column) count
  Grid cell_resistance;                 // m x n, ohms
  double r_wl = 0.0;                    // WL segment resistance, ohms
  double r_bl = 0.0;                    // BL segment resistance, ohms
  std::optional<SelectorParams> selector;  // absent -> pure resistor cells
  DiodeModel diode_model = DiodeModel::paper_eq2;
};

/// Applied voltages and sense/source resistances on all four array sides.
/// WL1 = left, WL2 = right (length m); BL1 = top / ground side,
/// BL2 = bottom (length n). An "open" side is a large finite resistance.
struct TerminalConfig {
  std::vector<double> v_app_wl1, v_app_wl2;  // volts, length m
  std::vector<double> v_app_bl1, v_app_bl2;  // volts, length n
  std::vector<double> r_sens_wl1, r_sens_wl2;  // ohms, length m
  std::vector<double> r_sens_bl1, r_sens_bl2;  // ohms, length n
};

/// Converged node voltages, cell currents and solver diagnostics.
/// i_cell is evaluated from v_wl - v_bl with the configured cell model
/// (positive WL -> BL). kcl_residual is the max absolute node-current
/// imbalance with those nonlinear cell currents.
struct SolveResult {
  Grid v_wl, v_bl;   // m x n node voltages (V)
  Grid i_cell;       // m x n cell currents (A)
  int iterations = 0;
  double max_rel_delta = 0.0;
  double kcl_residual = 0.0;
  bool converged = false;
  bool damping_reduced = false;  // oscillation guard engaged
};

enum class StateKind { all_high, all_low, random };

/// Recipe for an m x n resistance-state grid.
struct StatePattern {
  StateKind kind = StateKind::all_high;
  double r_low = 1e4;
  double r_high = 1e6;
  std::uint64_t seed = 0;  // used only for StateKind::random
};

/// Expand a pattern to a concrete grid. The random pattern draws each
/// cell independently low/high with probability 1/2 from a mt19937_64
/// seeded generator; bit-exact for fixed (seed, m, n).
Grid build_state_pattern(const StatePattern& pattern, int m, int n);

/// Collect every invariant violation as a human-readable diagnostic
/// naming the offending field (and index where applicable). Empty
/// vector means the configuration is valid.
std::vector<std::string> validate(const ArrayConfig& cfg);
std::vector<std::string> validate(const ArrayConfig& cfg,
                                  const TerminalConfig& term);
std::vector<std::string> validate(const StatePattern& pattern);

/// Throws std::invalid_argument listing all diagnostics.
void validate_or_throw(const ArrayConfig& cfg);
void validate_or_throw(const ArrayConfig& cfg, const TerminalConfig& term);

}  // namespace xbarsim
