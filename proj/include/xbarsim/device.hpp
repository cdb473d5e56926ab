#pragma once

#include "xbarsim/core.hpp"

namespace xbarsim {

/// Principal branch of the Lambert-W function: the w >= -1 solution of
/// w * e^w = x, defined for x >= -1/e. Initial guess (series near the
/// branch point and for small x, log asymptote for large x) refined by
/// Halley iteration to |w e^w - x| <= 1e-12 * max(|x|, DBL_MIN).
/// Throws std::domain_error for x < -1/e.
double lambert_w0(double x);

/// W(e^x) for any finite x, without forming e^x. For x >= 1 solves
/// w + ln w = x directly (w >= 1 there); below that delegates to
/// lambert_w0(exp(x)). Residual contract: |w + ln w - x| <= 1e-12
/// relative for the direct branch.
double lambert_w0_of_exp(double x);

/// Current through one 1D1R cell (selector diode in series with the
/// memristor resistance r) at cell voltage v_c = v_wl - v_bl.
/// The Lambert-W argument is only ever handled in log form, so the
/// evaluation cannot overflow for any finite v_c, eta, or temperature.
double cell_current(double v_c, double r, const SelectorParams& sel,
                    DiodeModel model = DiodeModel::paper_eq2);

/// dI/dV_C = W / (r * (1 + W)), with W the same Lambert value the cell
/// current uses. Strictly positive for all v_c.
double cell_differential_conductance(double v_c, double r,
                                     const SelectorParams& sel);

/// Chord (secant) conductance I(v_c)/v_c used to linearize the cell in
/// the nodal iteration: the linearized branch current equals the
/// nonlinear current at the operating voltage. Below |v_c| = 1e-9 V the
/// removable singularity is replaced by the differential limit; where
/// the quotient would be non-positive (reverse bias under paper_eq2,
/// whose current never crosses zero) the differential conductance at
/// v_c keeps the stamp positive. Always positive and finite.
double cell_chord_conductance(double v_c, double r, const SelectorParams& sel,
                              DiodeModel model = DiodeModel::paper_eq2);

/// Voltage window around zero where the chord uses the differential limit.
inline constexpr double chord_v_eps = 1e-9;

struct CellOperatingPoint {
  double v_c = 0.0;
  double current = 0.0;
  double chord_conductance = 0.0;
  double differential_conductance = 0.0;
};

CellOperatingPoint cell_operating_point(double v_c, double r,
                                        const SelectorParams& sel,
                                        DiodeModel model = DiodeModel::paper_eq2);

}  // namespace xbarsim
