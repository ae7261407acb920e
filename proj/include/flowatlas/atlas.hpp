#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowatlas/manifolds.hpp"
#include "flowatlas/orbits.hpp"
#include "flowatlas/systems.hpp"

namespace flowatlas::atlas {

struct AtlasSettings {
  int seeds = 8;               // fan size on p0's unstable eigen-plane (even: symmetric pairs)
  double seed_radius = 1e-4;
  double transient = 300.0;    // discarded before sampling
  double sample_window = 300.0;
  double sample_dt = 0.05;
  bool adaptive_transient = true;  // stretch the transient when Re(pair at p0) is small

  double delta_visit = 0.1;    // dwell distance to the cloud
  double t_visit_min = 10.0;   // dwell below this is "no visit"
  double faint_max_time = 40000.0;

  double small_cycle_amplitude = 0.1;

  orbits::DetectSettings detect = [] {
    orbits::DetectSettings d;
    d.transient = 50.0;  // detection seeds are already post-transient cloud states
    return d;
  }();
  integrator::Tolerances tol;
  int jobs = 1;
};

struct EscapeRecord {
  int seed_index = -1;
  double t = 0.0;
  State exit_state = State::Zero();
};

// Trajectory-sampled stand-in for the attractor class: the recorded tail of a
// fan of trajectories started on p0's unstable eigen-plane.
struct AttractorSample {
  double b = 0.0;
  std::string system;
  bool bounded = false;
  double bounding_radius = 0.0;
  std::vector<State> points;
  std::vector<State> seed_points;  // fan seeds
  std::vector<State> end_states;   // final state per surviving seed (detection seeds)
  std::vector<EscapeRecord> escapes;
  double transient_used = 0.0;
  double window_used = 0.0;
};

AttractorSample sample_attractor_class(const systems::SystemDef& sys, const AtlasSettings& settings);

struct SectionPoints {
  integrator::PlaneEvent plane;
  Vec3 axis_u = Vec3::UnitY();
  Vec3 axis_v = Vec3::UnitZ();
  std::vector<Eigen::Vector2d> uv;
  std::vector<State> states;
  std::vector<int> direction;
};

// Re-integrates the sampling trajectories and collects refined plane
// crossings inside the sampling window. Requires a bounded sample.
SectionPoints cross_section(const systems::SystemDef& sys, const AttractorSample& sample,
                            const integrator::PlaneEvent& plane, const AtlasSettings& settings);

enum class FaintnessVerdict { Faint, Attracting, NoVisit };
std::string faintness_name(FaintnessVerdict v);

struct DwellReport {
  double dwell = 0.0;
  bool escaped = false;
  double t_end = 0.0;
  State exit_state = State::Zero();
};

// Time a trajectory spends within delta_visit of the cloud before escaping.
DwellReport dwell_analysis(const systems::SystemDef& sys, const State& seed,
                           const AttractorSample& sample, double max_time,
                           const AtlasSettings& settings);

struct FaintnessResult {
  FaintnessVerdict verdict = FaintnessVerdict::NoVisit;
  DwellReport report;
};

// Traces the p1 unstable branch that heads toward the origin and measures its
// dwell near the sampled cloud.
FaintnessResult faintness_test(const systems::SystemDef& sys, const AttractorSample& sample,
                               const AtlasSettings& settings);

enum class Verdict {
  Unbounded,
  FaintAttractor,
  ComplexAttractor,
  ClosedOrbits,
  SmallCycleNearHopf,
  StableEquilibrium,
};
std::string verdict_name(Verdict v);

enum class Arrangement { None, Single, Twin };
std::string arrangement_name(Arrangement a);

struct Classification {
  double b = 0.0;
  Verdict verdict = Verdict::Unbounded;
  int rotation = 0;
  Arrangement arrangement = Arrangement::None;
  std::string evidence;
  std::optional<orbits::ClosedOrbit> orbit;
  std::optional<AttractorSample> sample;
  std::optional<FaintnessResult> faintness;
};

Classification classify_system(const systems::SystemDef& sys, const AtlasSettings& settings);
Classification classify_parameter(double a, double b, const AtlasSettings& settings);

struct ScanRow {
  double b = 0.0;
  bool failed = false;
  std::string error;
  Verdict verdict = Verdict::Unbounded;
  int rotation = 0;
  Arrangement arrangement = Arrangement::None;
  std::string evidence;
};

// classify_parameter at each b; per-point failures are recorded and the scan
// continues. Points are distributed over `settings.jobs` workers.
std::vector<ScanRow> scan(double a, const std::vector<double>& b_values,
                          const AtlasSettings& settings);

enum class BifurcationKind { RotationNumberChange, HomoclinicFateFlip, TwinMerge, Hopf };
std::string bifurcation_name(BifurcationKind k);

struct BifurcationResult {
  BifurcationKind kind = BifurcationKind::RotationNumberChange;
  double b_lo = 0.0;
  double b_hi = 0.0;
  double resolved = 0.0;
  std::string lo_value;
  std::string hi_value;
  std::vector<std::pair<double, std::string>> steps;  // midpoint evaluations
  std::vector<std::string> findings;                  // off-cascade values etc.
};

BifurcationResult bisect_rotation(double a, double b_lo, double b_hi, double resolution,
                                  const AtlasSettings& settings);
BifurcationResult bisect_branch_fate(double a, double b_lo, double b_hi, double resolution,
                                     const AtlasSettings& settings);
BifurcationResult bisect_twin_merge(double a, double b_lo, double b_hi, double resolution,
                                    const AtlasSettings& settings);

}  // namespace flowatlas::atlas
