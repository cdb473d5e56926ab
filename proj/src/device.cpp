#include "xbarsim/device.hpp"

#include <cfloat>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xbarsim {

namespace {

// Halley refinement of w*e^w = x. Converges cubically from any decent
// guess; 50-iteration cap is never reached in practice.
double halley_wexp(double w, double x) {
  for (int k = 0; k < 50; ++k) {
    double ew = std::exp(w);
    double f = w * ew - x;
    if (std::abs(f) <= 1e-13 * std::max(std::abs(x), DBL_MIN)) break;
    double denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
    double step = f / denom;
    w -= step;
    if (w < -1.0) w = -1.0 + 1e-16;
  }
  return w;
}

}  // namespace

double lambert_w0(double x) {
  constexpr double inv_e = 0.36787944117144233;  // 1/e
  if (std::isnan(x)) return x;
  if (x < -inv_e) {
    // A hair below the branch point from rounding is still the branch point.
    if (x > -inv_e - 1e-15) return -1.0;
    throw std::domain_error("lambert_w0: argument below -1/e");
  }
  if (x == 0.0) return 0.0;

  double w;
  if (x < -0.3235) {
    // Series around the branch point in p = sqrt(2(1 + e x)).
    double p = std::sqrt(2.0 * (1.0 + x / inv_e));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x < 1.0) {
    // Taylor at 0: x - x^2 + 3/2 x^3 - 8/3 x^4.
    w = x * (1.0 + x * (-1.0 + x * (1.5 - 8.0 / 3.0 * x)));
  } else {
    double l1 = std::log(x);
    double l2 = std::log(l1);
    w = (l1 > 3.0) ? l1 - l2 + l2 / l1 : 0.5 * l1 + 0.35;
  }
  return halley_wexp(w, x);
}

double lambert_w0_of_exp(double x) {
  if (std::isnan(x)) return x;
  if (x < 1.0) return lambert_w0(std::exp(x));

  // Solve w + ln w = x, w >= 1. Newton: f' = 1 + 1/w. Iterate to the
  // rounding floor so the equation residual stays near absolute 1e-13,
  // which keeps |w e^w - e^x| / e^x below 1e-12.
  double w = (x > 3.0) ? x - std::log(x) + std::log(x) / x : 1.0 + (x - 1.0) * 0.5;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 50; ++k) {
    double f = w + std::log(w) - x;
    double af = std::abs(f);
    if (af <= 1e-13 || af >= prev) break;
    prev = af;
    w -= f * w / (w + 1.0);
  }
  return w;
}

namespace {

// Log of the Lambert argument of the closed-form cell solution:
// ln(i_s r / (eta v_t)) + v_c / (eta v_t), plus the i_s r shift for the
// exact series model.
double log_w_argument(double v_c, double r, const SelectorParams& sel,
                      DiodeModel model) {
  double nvt = sel.eta * sel.v_t();
  double x = std::log(sel.i_s * r / nvt) + v_c / nvt;
  if (model == DiodeModel::exact_banwell) x += sel.i_s * r / nvt;
  return x;
}

}  // namespace

double cell_current(double v_c, double r, const SelectorParams& sel,
                    DiodeModel model) {
  double nvt = sel.eta * sel.v_t();
  double w = lambert_w0_of_exp(log_w_argument(v_c, r, sel, model));
  double i = nvt / r * w;
  if (model == DiodeModel::exact_banwell) i -= sel.i_s;
  return i;
}

double cell_differential_conductance(double v_c, double r,
                                     const SelectorParams& sel) {
  double w = lambert_w0_of_exp(log_w_argument(v_c, r, sel, DiodeModel::paper_eq2));
  return w / (r * (1.0 + w));
}

double cell_chord_conductance(double v_c, double r, const SelectorParams& sel,
                              DiodeModel model) {
  if (std::abs(v_c) <= chord_v_eps)
    return cell_differential_conductance(0.0, r, sel);
  double g = cell_current(v_c, r, sel, model) / v_c;
  if (g <= 0.0 || !std::isfinite(g)) {
    // paper_eq2 keeps a vanishing positive current at reverse bias, so the
    // quotient flips sign there; the differential slope is the consistent
    // positive stand-in and the current it implies is below any residual
    // of interest.
    return cell_differential_conductance(v_c, r, sel);
  }
  return g;
}

CellOperatingPoint cell_operating_point(double v_c, double r,
                                        const SelectorParams& sel,
                                        DiodeModel model) {
  CellOperatingPoint op;
  op.v_c = v_c;
  op.current = cell_current(v_c, r, sel, model);
  op.chord_conductance = cell_chord_conductance(v_c, r, sel, model);
  op.differential_conductance = cell_differential_conductance(v_c, r, sel);
  return op;
}

}  // namespace xbarsim
