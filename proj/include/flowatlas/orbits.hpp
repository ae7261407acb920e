#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "flowatlas/integrator.hpp"
#include "flowatlas/manifolds.hpp"
#include "flowatlas/spectral.hpp"
#include "flowatlas/systems.hpp"

namespace flowatlas::orbits {

enum class SymmetryKind { SelfSymmetric, TwinOf };

struct SymmetryInfo {
  SymmetryKind kind = SymmetryKind::SelfSymmetric;
  State partner_anchor = State::Zero();  // TwinOf: anchor of the mirror orbit
  double image_distance = 0.0;           // Hausdorff distance to the symmetry image
};

// A refined periodic orbit. flow(anchor, period) returns to anchor within
// 1e-8; samples cover one period uniformly in time.
struct ClosedOrbit {
  double period = 0.0;
  State anchor = State::Zero();
  std::vector<State> samples;
  int rotation_number = 0;
  SymmetryInfo symmetry;
  std::array<Complex, 3> floquet{};
  double return_residual = 0.0;
  double amplitude = 0.0;  // max distance of the orbit from the origin
};

// The 1D stable manifold of p0 as one open polyline (both branches, traced
// backward and truncated at trunc_radius), with a rotation-minimizing frame
// and a far-field closure path for the linking integral.
struct ReferenceCurve {
  std::vector<State> points;
  std::vector<Vec3> tangent;  // per segment
  std::vector<Vec3> frame_u;  // per segment, rotation-minimizing
  std::vector<Vec3> frame_v;
  std::vector<State> closure;  // from points.back() around radius closure_radius to points.front()
  double trunc_radius = 50.0;
  double closure_radius = 100.0;
};

ReferenceCurve reference_curve_p0(const systems::SystemDef& sys,
                                  const integrator::Tolerances& tol,
                                  double trunc_radius = 50.0, double closure_radius = 100.0);

struct DetectSettings {
  double transient = 300.0;        // discard before the recurrence scan
  double search_window = 700.0;    // scan length after the transient
  double recurrence_dist = 1e-3;   // near-return threshold
  double velocity_cos = 0.99;      // velocity alignment at the near-return
  int newton_max_iter = 30;
  double newton_tol = 1e-10;       // in-plane residual target
  int sample_count = 8192;
  bool require_attracting = true;  // reject orbits with |multiplier| > 1 + floquet_slack
  double floquet_slack = 1e-3;
  int max_retries = 3;             // recurrence_dist /= 10 per retry
  integrator::Tolerances tol;

  DetectSettings() { tol.max_time = 1e9; }
};

struct DetectOutcome {
  std::optional<ClosedOrbit> orbit;
  std::string diagnostics;
  bool found() const { return orbit.has_value(); }
};

// Recurrence scan plus Newton shooting on a flow-normal section. The
// reference curve (for the rotation count) is built on demand when null.
DetectOutcome detect_closed_orbit(const systems::SystemDef& sys, const State& s0,
                                  const DetectSettings& settings,
                                  const ReferenceCurve* ref = nullptr);

// Newton shooting from an explicit near-orbit guess and period estimate,
// skipping the transient and recurrence scan. Useful for polishing weakly
// unstable orbits (the attractivity gate does not apply here).
DetectOutcome refine_orbit(const systems::SystemDef& sys, const State& guess, double t_guess,
                           const DetectSettings& settings, const ReferenceCurve* ref = nullptr);

// Accumulated winding of the orbit around the reference curve, measured in
// transverse planes with a rotation-minimizing frame. The pre-rounding value
// must be within 0.05 of an integer (else AmbiguousWindingError).
int rotation_number(const ClosedOrbit& orbit, const ReferenceCurve& ref);

// Gauss linking number of the orbit with the closed reference polyline;
// the mandatory independent cross-check for rotation_number.
int linking_oracle(const ClosedOrbit& orbit, const ReferenceCurve& ref);

// Exact polyline linking number (sum of signed segment-pair solid angles).
// Exposed for direct use on synthetic curves.
double gauss_linking(const std::vector<State>& loop_a, const std::vector<State>& loop_b);

SymmetryInfo classify_symmetry(const systems::SystemDef& sys, const ClosedOrbit& orbit,
                               const integrator::Tolerances& tol, double threshold = 1e-5);

std::array<Complex, 3> floquet(const systems::SystemDef& sys, const ClosedOrbit& orbit,
                               const integrator::Tolerances& tol);

struct LyapunovSpectrum {
  std::array<double, 3> exponents{};  // descending
  double integration_time = 0.0;
  std::vector<std::pair<double, std::array<double, 3>>> convergence_history;
};

struct LyapunovSettings {
  double transient = 200.0;
  double renorm_dt = 1.0;
  integrator::Tolerances tol;

  LyapunovSettings() {
    tol.abs_tol = tol.rel_tol = 1e-10;
    tol.max_time = 1e9;
    tol.escape_radius = 50.0;
  }
};

// Benettin tangent-flow evolution with periodic reorthonormalization.
// Raises EscapeError if the trajectory leaves the escape radius.
LyapunovSpectrum lyapunov_spectrum(const systems::SystemDef& sys, const State& s0,
                                   double t_total, const LyapunovSettings& settings);

}  // namespace flowatlas::orbits
