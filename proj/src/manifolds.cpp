#include "flowatlas/manifolds.hpp"

#include <cmath>

namespace flowatlas::manifolds {

using integrator::Termination;
using integrator::TerminationKind;
using spectral::Equilibrium;
using systems::SystemDef;

std::string fate_name(FateKind k) {
  switch (k) {
    case FateKind::EscapesPositiveX: return "escapes+x";
    case FateKind::EscapesNegativeX: return "escapes-x";
    case FateKind::ConvergesToEquilibrium: return "converges-to-equilibrium";
    case FateKind::ConvergesToBoundedSet: return "converges-to-bounded-set";
    case FateKind::Undecided: return "undecided";
  }
  return "?";
}

namespace {

double real_eigenvalue_checked(const Equilibrium& eq, Stability stability) {
  auto split = spectral::saddle_focus_split(eq);
  const bool want_negative = stability == Stability::Stable;
  if (want_negative != (split.real_eigenvalue < 0.0)) {
    throw StructureMismatch("trace_1d: equilibrium has no 1D " +
                            std::string(want_negative ? "stable" : "unstable") +
                            " manifold (real eigenvalue sign mismatch)");
  }
  return split.real_eigenvalue;
}

struct ConvergenceWatch {
  std::vector<State> locations;
  std::vector<bool> contracting;  // in the integration time direction

  ConvergenceWatch(const SystemDef& sys, bool forward) {
    for (const auto& eq : spectral::equilibria(sys)) {
      locations.push_back(eq.location);
      bool contracts = true;
      for (const auto& p : eq.eigen.pairs) {
        const double re = forward ? p.value.real() : -p.value.real();
        if (re >= 0.0) contracts = false;
      }
      contracting.push_back(contracts);
    }
  }

  std::optional<Termination> operator()(double, const State& y, double dist) const {
    for (std::size_t i = 0; i < locations.size(); ++i) {
      if (contracting[i] && (y - locations[i]).norm() < dist) {
        Termination term;
        term.kind = TerminationKind::Converged;
        term.target = static_cast<int>(i);
        return term;
      }
    }
    return std::nullopt;
  }
};

ManifoldBranch trace_from_seed(const SystemDef& sys, const State& seed, int eq_id,
                               Stability stability, int dim, BranchTag tag, double angle,
                               const TraceSettings& settings) {
  const bool forward = stability == Stability::Unstable;
  ManifoldBranch branch;
  branch.equilibrium_id = eq_id;
  branch.stability = stability;
  branch.dim = dim;
  branch.branch_tag = tag;
  branch.seed_angle = angle;
  branch.backward_time = !forward;

  ConvergenceWatch watch(sys, forward);
  const double t_end = forward ? settings.tol.max_time : -settings.tol.max_time;
  integrator::Trajectory traj;
  try {
    traj = integrator::integrate_until(
        sys, seed, 0.0, t_end, settings.tol,
        [&](double t, const State& y) { return watch(t, y, settings.converge_distance); });
  } catch (const IntegrationFailure& fail) {
    branch.fate.kind = FateKind::Undecided;
    branch.fate.exit_state = fail.last_state;
    branch.fate.exit_time = fail.t;
    return branch;
  }

  branch.times = traj.times;
  branch.polyline = traj.states;
  switch (traj.termination.kind) {
    case TerminationKind::Escaped:
      branch.fate.kind = traj.termination.exit_state.x() > 0.0 ? FateKind::EscapesPositiveX
                                                               : FateKind::EscapesNegativeX;
      branch.fate.exit_state = traj.termination.exit_state;
      branch.fate.exit_time = traj.termination.t;
      break;
    case TerminationKind::Converged:
      branch.fate.kind = FateKind::ConvergesToEquilibrium;
      branch.fate.equilibrium_id = traj.termination.target;
      break;
    case TerminationKind::TimeLimit:
      branch.fate.kind = FateKind::ConvergesToBoundedSet;
      break;
    case TerminationKind::Event:
      branch.fate.kind = FateKind::Undecided;
      break;
  }
  return branch;
}

}  // namespace

State branch_seed(const Equilibrium& eq, Stability stability, BranchTag tag, double seed_offset) {
  real_eigenvalue_checked(eq, stability);
  auto split = spectral::saddle_focus_split(eq);
  const double sign = tag == BranchTag::Plus ? 1.0 : -1.0;
  return eq.location + sign * seed_offset * split.real_eigenvector;
}

ManifoldBranch trace_1d(const SystemDef& sys, const Equilibrium& eq, Stability stability,
                        BranchTag tag, const TraceSettings& settings) {
  const State seed = branch_seed(eq, stability, tag, settings.seed_offset);
  return trace_from_seed(sys, seed, eq.id, stability, 1, tag, 0.0, settings);
}

std::vector<ManifoldBranch> expand_2d(const SystemDef& sys, const Equilibrium& eq,
                                      Stability stability, int ring_count, double ring_radius,
                                      const TraceSettings& settings) {
  if (ring_count < 1) throw DomainError("expand_2d: ring_count must be >= 1");
  auto split = spectral::saddle_focus_split(eq);
  const bool want_negative = stability == Stability::Stable;
  if (want_negative != (split.pair_eigenvalue.real() < 0.0)) {
    throw StructureMismatch("expand_2d: equilibrium has no 2D " +
                            std::string(want_negative ? "stable" : "unstable") + " manifold");
  }
  std::vector<ManifoldBranch> fan;
  fan.reserve(ring_count);
  for (int k = 0; k < ring_count; ++k) {
    const double angle = 2.0 * M_PI * k / ring_count;
    const State seed = eq.location + ring_radius * (std::cos(angle) * split.plane_u +
                                                    std::sin(angle) * split.plane_v);
    fan.push_back(trace_from_seed(sys, seed, eq.id, stability, 2, BranchTag::Plus, angle, settings));
  }
  return fan;
}

RotationSense rotation_direction(const SystemDef& sys, const Equilibrium& eq,
                                 const TraceSettings& settings) {
  auto split = spectral::saddle_focus_split(eq);
  const double omega = std::abs(split.pair_eigenvalue.imag());
  if (!(omega > 0.0)) throw StructureMismatch("rotation_direction: equilibrium is not a focus");

  const State seed = eq.location + settings.ring_radius * split.plane_u;
  const double arc_time = 3.0 * 2.0 * M_PI / omega;
  integrator::Tolerances tol = settings.tol;
  tol.max_step = std::min(tol.max_step, 0.05 * 2.0 * M_PI / omega);
  auto traj = integrator::integrate(sys, seed, 0.0, arc_time, tol);

  int sign = 0;
  for (const auto& s : traj.states) {
    const State rel = s - eq.location;
    const State f = systems::eval_field(sys, s);
    const double w = rel.y() * f.z() - rel.z() * f.y();
    if (w == 0.0) continue;
    const int ws = w > 0.0 ? +1 : -1;
    if (sign == 0) sign = ws;
    if (ws != sign)
      throw UndecidedError("rotation_direction: angular speed changes sign along the sampled arc");
  }
  if (sign == 0) throw UndecidedError("rotation_direction: no angular motion detected");
  return sign > 0 ? RotationSense::PositiveAngular : RotationSense::NegativeAngular;
}

BranchTag branch_toward_origin(const Equilibrium& eq, Stability stability) {
  real_eigenvalue_checked(eq, stability);
  auto split = spectral::saddle_focus_split(eq);
  const double vx = split.real_eigenvector.x();
  const double ex = eq.location.x();
  if (vx == 0.0 || ex == 0.0)
    throw StructureMismatch("branch_toward_origin: direction toward the origin is ambiguous");
  return (vx > 0.0) == (ex < 0.0) ? BranchTag::Plus : BranchTag::Minus;
}

}  // namespace flowatlas::manifolds
