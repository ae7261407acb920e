#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flowatlas/detail/dopri5.hpp"
#include "flowatlas/systems.hpp"
#include "flowatlas/types.hpp"

namespace flowatlas::integrator {

struct Tolerances {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = 1.0;
  double min_step = 1e-12;
  double escape_radius = 10.0;
  double max_time = 200.0;

  void validate() const;
  Tolerances tightened(double factor) const;  // divides abs/rel tolerances
};

enum class TerminationKind { TimeLimit, Escaped, Event, Converged };

struct Termination {
  TerminationKind kind = TerminationKind::TimeLimit;
  double t = 0.0;
  // Escaped
  double radius = 0.0;
  State exit_state = State::Zero();
  // Event / Converged
  int event_id = -1;
  int target = -1;
};

// Time-stamped state sequence with per-step interpolation coefficients, so
// the solution is evaluable at any interior time. Times decrease for
// backward integration.
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<detail::DenseStep<3>> steps;
  Termination termination;
  bool backward = false;

  double t_front() const { return times.front(); }
  double t_back() const { return times.back(); }
  const State& front() const { return states.front(); }
  const State& back() const { return states.back(); }

  // Dense-output evaluation; t must lie between t_front() and t_back().
  State at(double t) const;
};

enum class CrossDirection { Up, Down, Both };

// Plane n . s = offset with |n| = 1 after construction.
struct PlaneEvent {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;
  CrossDirection direction = CrossDirection::Both;

  static PlaneEvent make(const Vec3& normal, double offset,
                         CrossDirection direction = CrossDirection::Both);
  double eval(const State& s) const { return normal.dot(s) - offset; }
};

struct Crossing {
  double t = 0.0;
  State state = State::Zero();
  int direction = 0;  // +1 for Up, -1 for Down
};

struct CrossingSequence {
  std::vector<Crossing> crossings;
  Termination termination;
};

struct Monodromy {
  State final_state = State::Zero();
  Mat3 matrix = Mat3::Identity();
};

Trajectory integrate(const systems::SystemDef& sys, const State& s0,
                     double t0, double t1, const Tolerances& tol);

// Like integrate(), but a caller-supplied predicate may end the run after
// any accepted step by returning a Termination (used for convergence stops).
using StopPredicate = std::function<std::optional<Termination>(double t, const State& y)>;
Trajectory integrate_until(const systems::SystemDef& sys, const State& s0,
                           double t0, double t1, const Tolerances& tol,
                           const StopPredicate& stop);

// Low-level step observation without trajectory storage; the callback
// returns false to stop. No escape handling.
struct StepView {
  const detail::DenseStep<3>& dense;
  const State& y;
  double t;
};
Termination integrate_observe(const systems::SystemDef& sys, const State& s0,
                              double t0, double t1, const Tolerances& tol,
                              const std::function<bool(const StepView&)>& cb);

// Plane crossings refined on the dense output to |n.s - offset| < 1e-10,
// filtered by crossing direction. Stops early on escape.
CrossingSequence crossings(const systems::SystemDef& sys, const State& s0,
                           const PlaneEvent& plane, double t0, double t1,
                           const Tolerances& tol);

// Endpoint of the flow map (no storage, no escape termination).
State flow(const systems::SystemDef& sys, const State& s0, double T,
           const Tolerances& tol);

// Joint integration of the variational equation dPhi/dt = J(y(t)) Phi,
// Phi(0) = I; `matrix` is the linearization of the time-T flow map at s0.
Monodromy flow_with_monodromy(const systems::SystemDef& sys, const State& s0,
                              double T, const Tolerances& tol);

// Advances a state and a tangent frame jointly by dt (in place); the frame
// columns evolve under the variational equation. Used by the Lyapunov loop.
void advance_with_tangent(const systems::SystemDef& sys, State& y, Mat3& frame,
                          double t0, double dt, const Tolerances& tol);

}  // namespace flowatlas::integrator
