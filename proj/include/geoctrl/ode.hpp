#pragma once

#include <algorithm>
#include <cmath>

#include "geoctrl/error.hpp"
#include "geoctrl/vector_field.hpp"

namespace geoctrl {

/// Tolerances and step bounds for adaptive integration.
struct StepControl {
  double abs_tol = 1e-9;
  double rel_tol = 1e-9;
  double initial_step = 1e-2;
  double min_step = 1e-12;
  double max_step = 0.25;
  long max_steps = 2'000'000;
};

/// Dormand-Prince 5(4) on an autonomous system y' = rhs(y), from time 0 to
/// `t` (negative `t` integrates backwards). `inside(y)` is checked after every
/// accepted step; a false result raises kWindowEscape. `step_hint`, when
/// given, seeds and receives the step magnitude so consecutive calls can
/// continue without restarting step selection.
template <class Rhs, class Inside>
Vector IntegrateRK45(Rhs&& rhs, Vector y, double t, const StepControl& control,
                     Inside&& inside, double* step_hint = nullptr) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  if (t == 0.0) return y;
  const double dir = t > 0 ? 1.0 : -1.0;
  const double span = std::abs(t);
  double h = std::min({step_hint && *step_hint > 0 ? *step_hint : control.initial_step,
                       control.max_step, span});
  double done = 0.0;
  Vector k1 = rhs(y);
  long steps = 0;
  while (done < span) {
    if (++steps > control.max_steps) {
      throw Error(ErrorCode::kStepUnderflow, "integration exceeded the step budget");
    }
    bool last = false;
    const double proposed = h;
    if (done + h >= span) {
      h = span - done;
      last = true;
    }
    const double hs = dir * h;
    const Vector k2 = rhs(y + hs * (a21 * k1));
    const Vector k3 = rhs(y + hs * (a31 * k1 + a32 * k2));
    const Vector k4 = rhs(y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = rhs(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 =
        rhs(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vector y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = rhs(y_new);
    const Vector err =
        hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err_norm = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double scale = control.abs_tol +
                           control.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err_norm = std::max(err_norm, std::abs(err[i]) / scale);
    }
    if (!std::isfinite(err_norm)) err_norm = 1e10;
    if (err_norm <= 1.0) {
      done = last ? span : done + h;
      y = std::move(y_new);
      k1 = k7;
      if (!inside(y)) {
        throw Error(ErrorCode::kWindowEscape, "trajectory left the integration window");
      }
      const double grow = err_norm == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err_norm, -0.2));
      h = std::min(control.max_step, h * grow);
      if (step_hint) {
        *step_hint = last ? std::max(proposed, h) : h;
      }
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
      if (h < control.min_step) {
        throw Error(ErrorCode::kStepUnderflow, "step size underflow (stiff or singular field)");
      }
    }
  }
  return y;
}

}  // namespace geoctrl
