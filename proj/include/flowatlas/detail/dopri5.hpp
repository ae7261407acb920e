#pragma once

// Embedded Dormand-Prince 5(4) pair with the 4th-order continuous extension,
// following Hairer & Wanner's DOPRI5. The driver is templated on the state
// dimension and the right-hand side so the same core serves the plain flow
// (N = 3) and the joint variational flow (N = 12).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "flowatlas/types.hpp"

namespace flowatlas::integrator::detail {

template <int N>
struct DenseStep {
  using VecN = Eigen::Matrix<double, N, 1>;
  double t0 = 0.0;
  double h = 0.0;  // signed
  VecN r1, r2, r3, r4, r5;

  VecN eval(double t) const {
    const double theta = (t - t0) / h;
    return eval_theta(theta);
  }
  VecN eval_theta(double theta) const {
    const double th1 = 1.0 - theta;
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
  }
  // d/dt of the interpolant, for Newton event polishing.
  VecN deriv(double t) const {
    const double theta = (t - t0) / h;
    const double th1 = 1.0 - theta;
    // d/dtheta of r1 + th*(r2 + th1*(r3 + th*(r4 + th1*r5)))
    VecN inner = r4 + th1 * r5;
    VecN dinner = -r5;
    VecN mid = r3 + theta * inner;
    VecN dmid = inner + theta * dinner;
    return (r2 + th1 * dmid - mid) * (1.0 / h);
  }
};

enum class DriveOutcome : std::uint8_t { ReachedEnd, StoppedByObserver };

struct StepControl {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = 1.0;
  double min_step = 1e-12;
};

// Observer callback contract:
//   bool operator()(const DenseStep<N>&, const VecN& y_new, double t_new)
// returning false stops the integration after that step.
template <int N, typename Rhs, typename Observer>
DriveOutcome drive_dopri5(Rhs&& f, Eigen::Matrix<double, N, 1>& y, double& t,
                          double t_end, const StepControl& ctl, Observer&& observe) {
  using VecN = Eigen::Matrix<double, N, 1>;

  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                          a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                          a65 = -5103.0 / 18656.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                          b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
  static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
                          c5 = 8.0 / 9.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
  static constexpr double d1 = -12715105075.0 / 11282082432.0,
                          d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0,
                          d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0,
                          d7 = 69997945.0 / 29380423.0;

  const double dir = (t_end >= t) ? 1.0 : -1.0;
  if (t_end == t) return DriveOutcome::ReachedEnd;

  VecN k1, k2, k3, k4, k5, k6, k7, y_new, y_stage, err_vec;
  f(t, y, k1);
  if (!k1.allFinite())
    throw IntegrationFailure("dopri5: non-finite derivative at the initial state", t, y.template head<3>());

  // Initial step size: a conservative guess from the first derivative scale,
  // refined by the controller within a few steps.
  double h;
  {
    double dnf = 0.0, dny = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sc = ctl.abs_tol + ctl.rel_tol * std::abs(y[i]);
      dnf += (k1[i] / sc) * (k1[i] / sc);
      dny += (y[i] / sc) * (y[i] / sc);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dny / dnf);
    h = std::min(h, ctl.max_step);
    h = std::min(h, std::abs(t_end - t));
    h *= dir;
  }

  const double safe = 0.9, facmin = 0.2, facmax_normal = 10.0;
  double facmax = facmax_normal;
  bool last_step = false;

  for (long step_count = 0;; ++step_count) {
    if (step_count > 100000000L)
      throw IntegrationFailure("dopri5: step count overflow", t, y.template head<3>());

    if (dir * (t + h - t_end) >= 0.0) {
      h = t_end - t;
      last_step = true;
    } else {
      last_step = false;
    }

    const double hmin = std::max(ctl.min_step, 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t));
    if (std::abs(h) < hmin && !last_step)
      throw IntegrationFailure("dopri5: step size underflow", t, y.template head<3>());

    y_stage = y + h * (a21 * k1);
    f(t + c2 * h, y_stage, k2);
    y_stage = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, y_stage, k3);
    y_stage = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, y_stage, k4);
    y_stage = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, y_stage, k5);
    y_stage = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, y_stage, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, y_new, k7);

    bool finite = y_new.allFinite() && k7.allFinite();
    double err = std::numeric_limits<double>::infinity();
    if (finite) {
      err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double sum = 0.0;
      for (int i = 0; i < N; ++i) {
        const double sc = ctl.abs_tol + ctl.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        const double q = err_vec[i] / sc;
        sum += q * q;
      }
      err = std::sqrt(sum / N);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    }

    if (err <= 1.0) {
      DenseStep<N> dense;
      dense.t0 = t;
      dense.h = h;
      dense.r1 = y;
      dense.r2 = y_new - y;
      dense.r3 = h * k1 - dense.r2;
      dense.r4 = dense.r2 - h * k7 - dense.r3;
      dense.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

      const double t_new = last_step ? t_end : t + h;
      y = y_new;
      t = t_new;
      k1 = k7;  // FSAL

      const double fac = std::min(facmax, std::max(facmin, safe * std::pow(std::max(err, 1e-16), -0.2)));
      h = (last_step ? dense.h : h) * fac;
      h = dir * std::min(std::abs(h), ctl.max_step);
      facmax = facmax_normal;

      if (!observe(dense, y, t)) return DriveOutcome::StoppedByObserver;
      if (last_step) return DriveOutcome::ReachedEnd;
    } else {
      const double fac = finite
          ? std::min(1.0, std::max(facmin, safe * std::pow(err, -0.2)))
          : 0.25;
      h *= fac;
      facmax = 1.0;
      if (std::abs(h) < hmin)
        throw IntegrationFailure("dopri5: step size underflow (local error cannot be met)",
                                 t, y.template head<3>());
    }
  }
}

}  // namespace flowatlas::integrator::detail
