#include "flowatlas/integrator.hpp"

#include <algorithm>
#include <cmath>

namespace flowatlas::integrator {

using detail::DenseStep;
using detail::DriveOutcome;
using detail::StepControl;
using systems::SystemDef;

void Tolerances::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
    throw DomainError("tolerances: abs_tol and rel_tol must be > 0");
  if (!(min_step < max_step)) throw DomainError("tolerances: min_step must be < max_step");
  if (!(escape_radius > 0.0)) throw DomainError("tolerances: escape_radius must be > 0");
}

Tolerances Tolerances::tightened(double factor) const {
  Tolerances t = *this;
  t.abs_tol /= factor;
  t.rel_tol /= factor;
  return t;
}

PlaneEvent PlaneEvent::make(const Vec3& normal, double offset, CrossDirection direction) {
  const double n = normal.norm();
  if (!(n > 0.0) || !is_finite(normal) || !std::isfinite(offset))
    throw DomainError("plane: normal must be finite and nonzero");
  PlaneEvent p;
  p.normal = normal / n;
  p.offset = offset / n;
  p.direction = direction;
  return p;
}

namespace {

StepControl to_control(const Tolerances& tol) {
  tol.validate();
  StepControl ctl;
  ctl.abs_tol = tol.abs_tol;
  ctl.rel_tol = tol.rel_tol;
  ctl.max_step = tol.max_step;
  ctl.min_step = tol.min_step;
  return ctl;
}

struct FieldRhs {
  const SystemDef& sys;
  void operator()(double, const Vec3& y, Vec3& dy) const {
    // Inlined per family to keep the hot loop free of dispatch overhead
    // beyond one switch.
    dy = systems::eval_field(sys, y);
  }
};

// 12-dim augmented right-hand side: state plus the three tangent columns.
struct VariationalRhs {
  const SystemDef& sys;
  using Vec12 = Eigen::Matrix<double, 12, 1>;
  void operator()(double, const Vec12& v, Vec12& dv) const {
    const Vec3 y = v.head<3>();
    dv.head<3>() = systems::eval_field(sys, y);
    const Mat3 j = systems::eval_jacobian(sys, y);
    for (int col = 0; col < 3; ++col) {
      const Vec3 phi = v.segment<3>(3 + 3 * col);
      dv.segment<3>(3 + 3 * col) = j * phi;
    }
  }
};

}  // namespace

State Trajectory::at(double t) const {
  if (steps.empty()) throw Error("trajectory: no dense steps stored");
  const double lo = std::min(times.front(), times.back());
  const double hi = std::max(times.front(), times.back());
  if (t < lo - 1e-12 || t > hi + 1e-12)
    throw DomainError("trajectory: evaluation time outside the covered span");
  // Steps are ordered in traversal order; locate by signed offset from t0.
  const double dir = backward ? -1.0 : 1.0;
  std::size_t a = 0, b = steps.size();
  while (b - a > 1) {
    std::size_t mid = (a + b) / 2;
    if (dir * (t - steps[mid].t0) >= 0.0) a = mid;
    else b = mid;
  }
  const auto& st = steps[a];
  double theta = (t - st.t0) / st.h;
  theta = std::clamp(theta, 0.0, 1.0);
  return st.eval_theta(theta);
}

Trajectory integrate_until(const SystemDef& sys, const State& s0, double t0,
                           double t1, const Tolerances& tol, const StopPredicate& stop) {
  if (!is_finite(s0)) throw InvalidStateError("integrate: non-finite initial state");
  if (t0 == t1) throw DomainError("integrate: empty time span");
  const StepControl ctl = to_control(tol);

  Trajectory traj;
  traj.backward = t1 < t0;
  traj.times.push_back(t0);
  traj.states.push_back(s0);
  traj.termination.kind = TerminationKind::TimeLimit;
  traj.termination.t = t1;

  State y = s0;
  double t = t0;
  FieldRhs rhs{sys};
  auto observer = [&](const DenseStep<3>& dense, const Vec3& y_new, double t_new) {
    traj.steps.push_back(dense);
    traj.times.push_back(t_new);
    traj.states.push_back(y_new);
    if (y_new.norm() >= tol.escape_radius) {
      traj.termination.kind = TerminationKind::Escaped;
      traj.termination.t = t_new;
      traj.termination.radius = tol.escape_radius;
      traj.termination.exit_state = y_new;
      return false;
    }
    if (stop) {
      if (auto term = stop(t_new, y_new)) {
        traj.termination = *term;
        traj.termination.t = t_new;
        return false;
      }
    }
    return true;
  };

  try {
    detail::drive_dopri5<3>(rhs, y, t, t1, ctl, observer);
  } catch (const IntegrationFailure& fail) {
    // Step-size underflow past the escape radius is blow-up of an already
    // escaping orbit; report it as the escape it is.
    if (fail.last_state.norm() >= tol.escape_radius && traj.times.size() >= 2) {
      traj.termination.kind = TerminationKind::Escaped;
      traj.termination.t = fail.t;
      traj.termination.radius = tol.escape_radius;
      traj.termination.exit_state = fail.last_state;
      return traj;
    }
    throw;
  }
  return traj;
}

Trajectory integrate(const SystemDef& sys, const State& s0, double t0, double t1,
                     const Tolerances& tol) {
  return integrate_until(sys, s0, t0, t1, tol, nullptr);
}

Termination integrate_observe(const SystemDef& sys, const State& s0, double t0,
                              double t1, const Tolerances& tol,
                              const std::function<bool(const StepView&)>& cb) {
  if (!is_finite(s0)) throw InvalidStateError("integrate: non-finite initial state");
  const StepControl ctl = to_control(tol);
  State y = s0;
  double t = t0;
  FieldRhs rhs{sys};
  Termination term;
  term.kind = TerminationKind::TimeLimit;
  term.t = t1;
  auto observer = [&](const DenseStep<3>& dense, const Vec3& y_new, double t_new) {
    return cb(StepView{dense, y_new, t_new});
  };
  DriveOutcome outcome = detail::drive_dopri5<3>(rhs, y, t, t1, ctl, observer);
  if (outcome == DriveOutcome::StoppedByObserver) {
    term.kind = TerminationKind::Event;
    term.t = t;
  }
  return term;
}

namespace {

// Refine a sign change of g on one dense step by bisection plus a Newton
// polish on the interpolant.
double refine_crossing(const DenseStep<3>& dense, const PlaneEvent& plane,
                       double ta, double tb) {
  auto g = [&](double t) { return plane.eval(dense.eval(t)); };
  double ga = g(ta);
  if (ga == 0.0) return ta;
  for (int i = 0; i < 60 && std::abs(tb - ta) > 1e-15 * std::max(1.0, std::abs(ta)); ++i) {
    const double tm = 0.5 * (ta + tb);
    const double gm = g(tm);
    if (gm == 0.0) return tm;
    if ((gm > 0.0) == (ga > 0.0)) {
      ta = tm;
      ga = gm;
    } else {
      tb = tm;
    }
  }
  double t = 0.5 * (ta + tb);
  for (int i = 0; i < 3; ++i) {
    const double gv = g(t);
    const double dg = plane.normal.dot(dense.deriv(t));
    if (dg == 0.0) break;
    const double t_next = t - gv / dg;
    const double lo = std::min(ta, tb), hi = std::max(ta, tb);
    if (t_next < lo || t_next > hi) break;
    t = t_next;
  }
  return t;
}

}  // namespace

CrossingSequence crossings(const SystemDef& sys, const State& s0, const PlaneEvent& plane,
                           double t0, double t1, const Tolerances& tol) {
  CrossingSequence out;
  constexpr int kScanSubdivisions = 8;

  Trajectory traj = integrate(sys, s0, t0, t1, tol);
  out.termination = traj.termination;

  for (const auto& st : traj.steps) {
    double prev_theta = 0.0;
    double prev_g = plane.eval(st.eval_theta(0.0));
    for (int k = 1; k <= kScanSubdivisions; ++k) {
      const double theta = static_cast<double>(k) / kScanSubdivisions;
      const double gv = plane.eval(st.eval_theta(theta));
      const bool sign_change = (prev_g < 0.0 && gv >= 0.0) || (prev_g > 0.0 && gv <= 0.0);
      if (sign_change) {
        const double ta = st.t0 + prev_theta * st.h;
        const double tb = st.t0 + theta * st.h;
        const double tc = refine_crossing(st, plane, ta, tb);
        const State sc = st.eval(tc);
        const double dg = plane.normal.dot(systems::eval_field(sys, sc));
        const int dir = dg >= 0.0 ? +1 : -1;
        const bool keep = plane.direction == CrossDirection::Both ||
                          (plane.direction == CrossDirection::Up && dir > 0) ||
                          (plane.direction == CrossDirection::Down && dir < 0);
        const bool at_start = std::abs(tc - t0) < 1e-12 * std::max(1.0, std::abs(t0)) + 1e-300;
        const bool duplicate = !out.crossings.empty() &&
            std::abs(tc - out.crossings.back().t) < 1e-10 * std::max(1.0, std::abs(tc));
        if (keep && !at_start && !duplicate) out.crossings.push_back({tc, sc, dir});
      }
      prev_theta = theta;
      prev_g = gv;
    }
  }
  return out;
}

State flow(const SystemDef& sys, const State& s0, double T, const Tolerances& tol) {
  if (!is_finite(s0)) throw InvalidStateError("flow: non-finite initial state");
  if (T == 0.0) return s0;
  const StepControl ctl = to_control(tol);
  State y = s0;
  double t = 0.0;
  FieldRhs rhs{sys};
  detail::drive_dopri5<3>(rhs, y, t, T, ctl,
                          [](const DenseStep<3>&, const Vec3&, double) { return true; });
  return y;
}

Monodromy flow_with_monodromy(const SystemDef& sys, const State& s0, double T,
                              const Tolerances& tol) {
  if (!is_finite(s0)) throw InvalidStateError("flow_with_monodromy: non-finite initial state");
  if (!std::isfinite(T)) throw DomainError("flow_with_monodromy: T must be finite");
  Monodromy m;
  if (T == 0.0) {
    m.final_state = s0;
    return m;
  }
  const StepControl ctl = to_control(tol);
  VariationalRhs rhs{sys};
  Eigen::Matrix<double, 12, 1> v;
  v.head<3>() = s0;
  Mat3 eye = Mat3::Identity();
  for (int col = 0; col < 3; ++col) v.segment<3>(3 + 3 * col) = eye.col(col);
  double t = 0.0;
  detail::drive_dopri5<12>(rhs, v, t, T, ctl,
                           [](const DenseStep<12>&, const Eigen::Matrix<double, 12, 1>&, double) {
                             return true;
                           });
  m.final_state = v.head<3>();
  for (int col = 0; col < 3; ++col) m.matrix.col(col) = v.segment<3>(3 + 3 * col);
  return m;
}

void advance_with_tangent(const SystemDef& sys, State& y, Mat3& frame, double t0,
                          double dt, const Tolerances& tol) {
  const StepControl ctl = to_control(tol);
  VariationalRhs rhs{sys};
  Eigen::Matrix<double, 12, 1> v;
  v.head<3>() = y;
  for (int col = 0; col < 3; ++col) v.segment<3>(3 + 3 * col) = frame.col(col);
  double t = t0;
  detail::drive_dopri5<12>(rhs, v, t, t0 + dt, ctl,
                           [](const DenseStep<12>&, const Eigen::Matrix<double, 12, 1>&, double) {
                             return true;
                           });
  y = v.head<3>();
  for (int col = 0; col < 3; ++col) frame.col(col) = v.segment<3>(3 + 3 * col);
}

}  // namespace flowatlas::integrator
