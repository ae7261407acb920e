#pragma once

#include <optional>
#include <vector>

#include "flowatlas/integrator.hpp"
#include "flowatlas/spectral.hpp"
#include "flowatlas/systems.hpp"

namespace flowatlas::manifolds {

enum class Stability { Stable, Unstable };
enum class BranchTag { Plus, Minus };

enum class FateKind {
  EscapesPositiveX,
  EscapesNegativeX,
  ConvergesToEquilibrium,
  ConvergesToBoundedSet,
  Undecided,
};

std::string fate_name(FateKind k);

struct Fate {
  FateKind kind = FateKind::Undecided;
  int equilibrium_id = -1;                 // ConvergesToEquilibrium
  double dwell_time_near_attractor = 0.0;  // filled by the atlas dwell analysis
  State exit_state = State::Zero();        // escaping fates
  double exit_time = 0.0;
};

// One traced branch: a 1D manifold half (branch_tag) or one trajectory of a
// 2D manifold fan (seed_angle). Stable branches are computed in backward
// time and stored in backward-time order (backward_time = true).
struct ManifoldBranch {
  int equilibrium_id = 0;
  Stability stability = Stability::Unstable;
  int dim = 1;
  BranchTag branch_tag = BranchTag::Plus;
  double seed_angle = 0.0;  // dim == 2 only
  std::vector<double> times;
  std::vector<State> polyline;
  bool backward_time = false;
  Fate fate;
};

struct TraceSettings {
  double seed_offset = 1e-6;     // 1D seed displacement along the eigenvector
  double ring_radius = 1e-4;     // 2D fan seed radius
  double converge_distance = 1e-6;
  integrator::Tolerances tol = [] {
    integrator::Tolerances t;
    t.max_time = 500.0;
    return t;
  }();
};

// Seed state of a 1D branch: location +/- seed_offset * (unit real eigenvector).
State branch_seed(const spectral::Equilibrium& eq, Stability stability, BranchTag tag,
                  double seed_offset);

ManifoldBranch trace_1d(const systems::SystemDef& sys, const spectral::Equilibrium& eq,
                        Stability stability, BranchTag tag, const TraceSettings& settings);

std::vector<ManifoldBranch> expand_2d(const systems::SystemDef& sys,
                                      const spectral::Equilibrium& eq, Stability stability,
                                      int ring_count, double ring_radius,
                                      const TraceSettings& settings);

enum class RotationSense { PositiveAngular, NegativeAngular };

// Sign of d/dt atan2(z~, y~) transverse to the x-axis through the
// equilibrium, sampled along a short arc seeded on the spiral eigen-plane.
// A sign change along the arc raises UndecidedError.
RotationSense rotation_direction(const systems::SystemDef& sys, const spectral::Equilibrium& eq,
                                 const TraceSettings& settings);

// For the cubic families at p1/p2: the 1D unstable branch that initially
// heads toward the origin (the "first" branch in the two-branch naming).
BranchTag branch_toward_origin(const spectral::Equilibrium& eq, Stability stability);

}  // namespace flowatlas::manifolds
