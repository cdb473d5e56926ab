#pragma once

#include <utility>

#include "xbarsim/core.hpp"

namespace xbarsim {

/// Figures of merit for one read solve of a selected cell.
struct ReadMetrics {
  double apparent_resistance = 0.0;  // ohms
  double v_sense = 0.0;              // drop across the selected BL1 sense (V)
  double i_select = 0.0;             // selected cell current (A)
  double i_leak = 0.0;               // collected BL current minus i_select (A)
  Grid power_map;                    // m x n per-cell dissipation (W)
};

/// Voltage across the ground-side (BL1) sense resistor of column j.
double sense_voltage(const SolveResult& result, const TerminalConfig& term,
                     int selected_j);

/// Resistance inferred at the array terminals for the selected cell:
/// (applied WL voltage - sense voltage) / current collected through the
/// selected BL's ground-side end.
double apparent_resistance(const SolveResult& result,
                           std::pair<int, int> selected,
                           const TerminalConfig& term);

/// Read window between the worst-case low read (result_low) and the
/// worst-case high read (result_high), in percent of the applied read
/// voltage. Negative values mean the window has closed.
double sense_margin(const SolveResult& result_low,
                    const SolveResult& result_high,
                    std::pair<int, int> selected, const TerminalConfig& term);

/// Per-cell dissipated power i_cell * (v_wl - v_bl).
Grid power_map(const SolveResult& result);

/// RMS thermal noise voltage sqrt(4 k_B T R delta_f). Advisory output
/// only; it never feeds back into margin computations.
double johnson_noise_rms(double r_sens, double temperature, double bandwidth);

ReadMetrics compute_read_metrics(const SolveResult& result,
                                 std::pair<int, int> selected,
                                 const TerminalConfig& term);

}  // namespace xbarsim
