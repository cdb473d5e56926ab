#include "xbarsim/metrics.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace xbarsim {

double sense_voltage(const SolveResult& result, const TerminalConfig& term,
                     int selected_j) {
  return result.v_bl(0, selected_j) - term.v_app_bl1[selected_j];
}

double apparent_resistance(const SolveResult& result,
                           std::pair<int, int> selected,
                           const TerminalConfig& term) {
  auto [si, sj] = selected;
  double v_sens = sense_voltage(result, term, sj);
  double i_collected = v_sens / term.r_sens_bl1[sj];
  assert(i_collected != 0.0 && "no collected current on the selected BL");
  return (term.v_app_wl1[si] - result.v_bl(0, sj)) / i_collected;
}

double sense_margin(const SolveResult& result_low,
                    const SolveResult& result_high,
                    std::pair<int, int> selected, const TerminalConfig& term) {
  if (!result_low.v_bl.same_shape(result_high.v_bl))
    throw std::invalid_argument("sense_margin: mismatched result shapes");
  auto [si, sj] = selected;
  double v_low = sense_voltage(result_low, term, sj);
  double v_high = sense_voltage(result_high, term, sj);
  return 100.0 * (v_low - v_high) / term.v_app_wl1[si];
}

Grid power_map(const SolveResult& result) {
  int m = result.v_wl.rows(), n = result.v_wl.cols();
  Grid p(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      p(i, j) = result.i_cell(i, j) * (result.v_wl(i, j) - result.v_bl(i, j));
  return p;
}

double johnson_noise_rms(double r_sens, double temperature, double bandwidth) {
  if (!(r_sens > 0.0) || !(temperature > 0.0) || bandwidth < 0.0)
    throw std::invalid_argument("johnson_noise_rms: non-positive argument");
  return std::sqrt(4.0 * constants::k_boltzmann * temperature * r_sens *
                   bandwidth);
}

ReadMetrics compute_read_metrics(const SolveResult& result,
                                 std::pair<int, int> selected,
                                 const TerminalConfig& term) {
  auto [si, sj] = selected;
  ReadMetrics mx;
  mx.v_sense = sense_voltage(result, term, sj);
  mx.apparent_resistance = apparent_resistance(result, selected, term);
  mx.i_select = result.i_cell(si, sj);
  mx.i_leak = mx.v_sense / term.r_sens_bl1[sj] - mx.i_select;
  mx.power_map = power_map(result);
  return mx;
}

}  // namespace xbarsim
