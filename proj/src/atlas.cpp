#include <mutex>
#include "flowatlas/atlas.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace flowatlas::atlas {

using integrator::PlaneEvent;
using integrator::TerminationKind;
using integrator::Tolerances;
using systems::SystemDef;

namespace {

void run_parallel(int jobs, int n, const std::function<void(int)>& fn) {
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double cubic_b(const SystemDef& sys) {
  switch (sys.family()) {
    case systems::Family::Cubic2:
    case systems::Family::Cubic2Prime: return sys.cubic().b;
    case systems::Family::Silnikov7: return sys.silnikov().beta;
    case systems::Family::Lorenz: return sys.lorenz().beta;
  }
  return 0.0;
}

// Transient long enough for a 1e-4 eigen-plane seed to reach the nonlinear
// regime; matters near the Hopf point where Re(pair) -> 0.
double effective_transient(const AtlasSettings& st, const spectral::Equilibrium& eq0) {
  if (!st.adaptive_transient) return st.transient;
  try {
    auto split = spectral::saddle_focus_split(eq0);
    const double re = split.pair_eigenvalue.real();
    if (re > 1e-12) return std::max(st.transient, 15.0 / re);
  } catch (const Error&) {
  }
  return st.transient;
}

// Uniform hash grid for dwell queries against the cloud.
class PointGrid {
 public:
  PointGrid(const std::vector<State>& pts, double cell) : cell_(cell) {
    for (const auto& p : pts) cells_[key(p)].push_back(p);
  }
  bool empty() const { return cells_.empty(); }

  bool within(const State& p, double dist) const {
    if (cells_.empty()) return false;
    const double d2 = dist * dist;
    const std::int64_t cx = coord(p.x()), cy = coord(p.y()), cz = coord(p.z());
    for (std::int64_t ix = cx - 1; ix <= cx + 1; ++ix)
      for (std::int64_t iy = cy - 1; iy <= cy + 1; ++iy)
        for (std::int64_t iz = cz - 1; iz <= cz + 1; ++iz) {
          auto it = cells_.find(pack(ix, iy, iz));
          if (it == cells_.end()) continue;
          for (const auto& q : it->second)
            if ((q - p).squaredNorm() <= d2) return true;
        }
    return false;
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::int64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    return ((x & 0x1fffff) << 42) | ((y & 0x1fffff) << 21) | (z & 0x1fffff);
  }
  std::int64_t key(const State& p) const { return pack(coord(p.x()), coord(p.y()), coord(p.z())); }
  double cell_;
  std::unordered_map<std::int64_t, std::vector<State>> cells_;
};

}  // namespace

std::string faintness_name(FaintnessVerdict v) {
  switch (v) {
    case FaintnessVerdict::Faint: return "faint";
    case FaintnessVerdict::Attracting: return "attracting";
    case FaintnessVerdict::NoVisit: return "no-visit";
  }
  return "?";
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Unbounded: return "unbounded";
    case Verdict::FaintAttractor: return "faint-attractor";
    case Verdict::ComplexAttractor: return "complex-attractor";
    case Verdict::ClosedOrbits: return "closed-orbits";
    case Verdict::SmallCycleNearHopf: return "small-cycle-near-hopf";
    case Verdict::StableEquilibrium: return "stable-equilibrium";
  }
  return "?";
}

std::string arrangement_name(Arrangement a) {
  switch (a) {
    case Arrangement::None: return "none";
    case Arrangement::Single: return "single";
    case Arrangement::Twin: return "twin";
  }
  return "?";
}

std::string bifurcation_name(BifurcationKind k) {
  switch (k) {
    case BifurcationKind::RotationNumberChange: return "rotation-number-change";
    case BifurcationKind::HomoclinicFateFlip: return "homoclinic-fate-flip";
    case BifurcationKind::TwinMerge: return "twin-merge";
    case BifurcationKind::Hopf: return "hopf";
  }
  return "?";
}

AttractorSample sample_attractor_class(const SystemDef& sys, const AtlasSettings& settings) {
  if (settings.seeds < 2) throw DomainError("sample_attractor_class: need at least 2 seeds");
  if (!(settings.sample_window > 0.0))
    throw DomainError("sample_attractor_class: sample window must be positive");

  auto eqs = spectral::equilibria(sys);
  const auto& eq0 = eqs.front();
  auto split = spectral::saddle_focus_split(eq0);
  if (split.pair_eigenvalue.real() <= 0.0)
    throw StructureMismatch("sample_attractor_class: p0 has no unstable eigen-plane");

  AttractorSample sample;
  sample.b = cubic_b(sys);
  sample.system = sys.describe();
  sample.transient_used = effective_transient(settings, eq0);
  sample.window_used = settings.sample_window;

  const double t_end = sample.transient_used + settings.sample_window;
  std::vector<std::vector<State>> per_seed(settings.seeds);
  std::vector<State> end_states(settings.seeds);
  std::vector<char> survived(settings.seeds, 0);
  std::vector<EscapeRecord> escapes;
  std::mutex esc_mutex;

  std::vector<State> seeds;
  for (int k = 0; k < settings.seeds; ++k) {
    const double th = 2.0 * M_PI * k / settings.seeds;
    seeds.push_back(eq0.location + settings.seed_radius * (std::cos(th) * split.plane_u +
                                                           std::sin(th) * split.plane_v));
  }
  sample.seed_points = seeds;

  run_parallel(settings.jobs, settings.seeds, [&](int k) {
    double next_sample = sample.transient_used + settings.sample_dt;
    std::vector<State>& bucket = per_seed[k];
    State last = seeds[k];
    bool escaped = false;
    integrator::integrate_observe(
        sys, seeds[k], 0.0, t_end, settings.tol, [&](const integrator::StepView& sv) {
          while (next_sample <= sv.t + 1e-14) {
            State s = sv.dense.eval(std::min(next_sample, sv.t));
            if (s.norm() < settings.tol.escape_radius) bucket.push_back(s);
            next_sample += settings.sample_dt;
          }
          last = sv.y;
          if (sv.y.norm() >= settings.tol.escape_radius) {
            escaped = true;
            std::lock_guard<std::mutex> lock(esc_mutex);
            escapes.push_back({k, sv.t, sv.y});
            return false;
          }
          return true;
        });
    if (!escaped) {
      survived[k] = 1;
      end_states[k] = last;
    }
  });

  sample.escapes = std::move(escapes);
  sample.bounded = sample.escapes.empty();
  for (int k = 0; k < settings.seeds; ++k) {
    if (survived[k]) sample.end_states.push_back(end_states[k]);
    for (const auto& p : per_seed[k]) {
      sample.bounding_radius = std::max(sample.bounding_radius, p.norm());
      sample.points.push_back(p);
    }
  }
  return sample;
}

SectionPoints cross_section(const SystemDef& sys, const AttractorSample& sample,
                            const PlaneEvent& plane, const AtlasSettings& settings) {
  if (!sample.bounded || sample.points.empty())
    throw DomainError("cross_section: sample is unbounded or empty");

  SectionPoints out;
  out.plane = plane;
  {
    Vec3 n = plane.normal;
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(n[i]) < std::abs(n[k])) k = i;
    Vec3 e = Vec3::Unit(k);
    e -= e.dot(n) * n;
    out.axis_u = e.normalized();
    out.axis_v = n.cross(out.axis_u);
  }

  const double t_end = sample.transient_used + sample.window_used;
  for (const auto& seed : sample.seed_points) {
    auto seq = integrator::crossings(sys, seed, plane, 0.0, t_end, settings.tol);
    for (const auto& c : seq.crossings) {
      if (c.t <= sample.transient_used) continue;
      out.states.push_back(c.state);
      out.direction.push_back(c.direction);
      const Vec3 rel = c.state - plane.offset * plane.normal;
      out.uv.emplace_back(rel.dot(out.axis_u), rel.dot(out.axis_v));
    }
  }
  return out;
}

DwellReport dwell_analysis(const SystemDef& sys, const State& seed, const AttractorSample& sample,
                           double max_time, const AtlasSettings& settings) {
  PointGrid grid(sample.points, settings.delta_visit);
  DwellReport report;
  integrator::integrate_observe(sys, seed, 0.0, max_time, settings.tol,
                                [&](const integrator::StepView& sv) {
                                  report.t_end = sv.t;
                                  if (sv.y.norm() >= settings.tol.escape_radius) {
                                    report.escaped = true;
                                    report.exit_state = sv.y;
                                    return false;
                                  }
                                  if (!grid.empty() && grid.within(sv.y, settings.delta_visit))
                                    report.dwell += std::abs(sv.dense.h);
                                  return true;
                                });
  return report;
}

FaintnessResult faintness_test(const SystemDef& sys, const AttractorSample& sample,
                               const AtlasSettings& settings) {
  auto eqs = spectral::equilibria(sys);
  if (eqs.size() < 3) throw StructureMismatch("faintness_test: expected three equilibria");
  const auto& eq1 = eqs[1];
  auto tag = manifolds::branch_toward_origin(eq1, manifolds::Stability::Unstable);
  const State seed = manifolds::branch_seed(eq1, manifolds::Stability::Unstable, tag, 1e-6);

  FaintnessResult out;
  out.report = dwell_analysis(sys, seed, sample, settings.faint_max_time, settings);
  if (!out.report.escaped) {
    out.verdict = FaintnessVerdict::Attracting;
  } else if (out.report.dwell > settings.t_visit_min) {
    out.verdict = FaintnessVerdict::Faint;
  } else {
    out.verdict = FaintnessVerdict::NoVisit;
  }
  return out;
}

Classification classify_system(const SystemDef& sys, const AtlasSettings& settings) {
  Classification cls;
  cls.b = cubic_b(sys);
  std::ostringstream ev;

  auto eqs = spectral::equilibria(sys);
  const auto& eq0 = eqs.front();
  bool p0_unstable_plane = false;
  try {
    p0_unstable_plane = spectral::saddle_focus_split(eq0).pair_eigenvalue.real() > 0.0;
  } catch (const Error&) {
  }
  if (!p0_unstable_plane) {
    bool stable = true;
    for (const auto& p : eq0.eigen.pairs)
      if (p.value.real() >= 0.0) stable = false;
    cls.verdict = stable ? Verdict::StableEquilibrium : Verdict::Unbounded;
    ev << "p0 has no unstable eigen-plane (" << spectral::kind_name(eq0.kind) << ")";
    cls.evidence = ev.str();
    return cls;
  }

  AttractorSample sample = sample_attractor_class(sys, settings);
  ev << "sample: bounded=" << (sample.bounded ? "yes" : "no") << " points=" << sample.points.size()
     << " radius=" << sample.bounding_radius << "; ";

  if (!sample.bounded) {
    FaintnessResult faint = faintness_test(sys, sample, settings);
    ev << "branch dwell=" << faint.report.dwell << " verdict=" << faintness_name(faint.verdict)
       << "; ";
    cls.verdict =
        faint.verdict == FaintnessVerdict::Faint ? Verdict::FaintAttractor : Verdict::Unbounded;
    cls.faintness = faint;
    cls.evidence = ev.str();
    cls.sample = std::move(sample);
    return cls;
  }

  // Bounded: try closed-orbit detection from the post-transient cloud states
  // (symmetric seed pairs land on both twins when there are two).
  orbits::ReferenceCurve ref;
  bool have_ref = false;
  try {
    ref = orbits::reference_curve_p0(sys, settings.tol);
    have_ref = true;
  } catch (const Error& e) {
    ev << "no reference curve (" << e.what() << "); ";
  }

  for (const auto& s0 : sample.end_states) {
    auto outcome = orbits::detect_closed_orbit(sys, s0, settings.detect,
                                               have_ref ? &ref : nullptr);
    if (outcome.found()) {
      const auto& orbit = *outcome.orbit;
      cls.rotation = orbit.rotation_number;
      cls.arrangement = orbit.symmetry.kind == orbits::SymmetryKind::SelfSymmetric
                            ? Arrangement::Single
                            : Arrangement::Twin;
      cls.verdict = orbit.amplitude < settings.small_cycle_amplitude
                        ? Verdict::SmallCycleNearHopf
                        : Verdict::ClosedOrbits;
      ev << "orbit: period=" << orbit.period << " rotation=" << orbit.rotation_number
         << " arrangement=" << arrangement_name(cls.arrangement)
         << " amplitude=" << orbit.amplitude << " residual=" << orbit.return_residual;
      cls.orbit = orbit;
      cls.evidence = ev.str();
      cls.sample = std::move(sample);
      return cls;
    }
    ev << "detect: " << outcome.diagnostics << "; ";
  }

  FaintnessResult faint = faintness_test(sys, sample, settings);
  ev << "branch dwell=" << faint.report.dwell << " verdict=" << faintness_name(faint.verdict);
  cls.faintness = faint;
  if (faint.verdict == FaintnessVerdict::Faint) {
    cls.verdict = Verdict::FaintAttractor;
  } else {
    cls.verdict = Verdict::ComplexAttractor;
  }
  cls.evidence = ev.str();
  cls.sample = std::move(sample);
  return cls;
}

Classification classify_parameter(double a, double b, const AtlasSettings& settings) {
  return classify_system(systems::make_cubic2(a, b), settings);
}

std::vector<ScanRow> scan(double a, const std::vector<double>& b_values,
                          const AtlasSettings& settings) {
  if (b_values.empty()) throw DomainError("scan: empty parameter sequence");
  std::vector<ScanRow> rows(b_values.size());
  AtlasSettings point_settings = settings;
  point_settings.jobs = 1;  // parallelism across parameter points

  run_parallel(settings.jobs, static_cast<int>(b_values.size()), [&](int i) {
    ScanRow& row = rows[i];
    row.b = b_values[i];
    try {
      Classification cls = classify_parameter(a, b_values[i], point_settings);
      row.verdict = cls.verdict;
      row.rotation = cls.rotation;
      row.arrangement = cls.arrangement;
      row.evidence = cls.evidence;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  });
  return rows;
}

namespace {

BifurcationResult bisect_on_predicate(BifurcationKind kind, double lo, double hi,
                                      double resolution,
                                      const std::function<std::string(double)>& value_at,
                                      const std::function<bool(const std::string&,
                                                               const std::string&,
                                                               const std::string&)>& is_hi_side) {
  if (!(resolution > 0.0)) throw DomainError("bisect: resolution must be positive");
  if (!(lo < hi)) throw DomainError("bisect: need lo < hi");

  BifurcationResult out;
  out.kind = kind;
  out.lo_value = value_at(lo);
  out.hi_value = value_at(hi);
  if (out.lo_value == out.hi_value)
    throw NotBracketedError("bisect: identical predicate value '" + out.lo_value +
                            "' at both endpoints");

  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    const std::string v = value_at(mid);
    out.steps.emplace_back(mid, v);
    if (v != out.lo_value && v != out.hi_value) {
      std::ostringstream os;
      os << "non-endpoint value '" << v << "' at b=" << mid;
      out.findings.push_back(os.str());
    }
    if (is_hi_side(v, out.lo_value, out.hi_value)) hi = mid;
    else lo = mid;
  }
  out.b_lo = lo;
  out.b_hi = hi;
  out.resolved = 0.5 * (lo + hi);
  return out;
}

}  // namespace

BifurcationResult bisect_rotation(double a, double b_lo, double b_hi, double resolution,
                                  const AtlasSettings& settings) {
  auto rotation_at = [&](double b) -> std::string {
    SystemDef sys = systems::make_cubic2(a, b);
    orbits::DetectSettings ds = settings.detect;
    ds.transient = std::max(ds.transient, 600.0);
    std::string last;
    for (double factor : {1.0, 3.0, 9.0}) {
      orbits::DetectSettings tryset = ds;
      tryset.transient = ds.transient * factor;
      auto outcome = orbits::detect_closed_orbit(sys, State(1.2, 0.0, -1.5), tryset);
      if (outcome.found()) return std::to_string(outcome.orbit->rotation_number);
      last = outcome.diagnostics;
    }
    throw Error("bisect_rotation: no verified orbit at b=" + std::to_string(b) + " (" + last + ")");
  };
  // The cascade is monotone non-increasing in b: any rotation above the high
  // endpoint's value belongs to the low side.
  auto is_hi_side = [](const std::string& v, const std::string&, const std::string& hi_v) {
    return std::stoi(v) <= std::stoi(hi_v);
  };
  return bisect_on_predicate(BifurcationKind::RotationNumberChange, b_lo, b_hi, resolution,
                             rotation_at, is_hi_side);
}

BifurcationResult bisect_branch_fate(double a, double b_lo, double b_hi, double resolution,
                                     const AtlasSettings& settings) {
  auto fate_at = [&](double b) -> std::string {
    SystemDef sys = systems::make_cubic2(a, b);
    auto eqs = spectral::equilibria(sys);
    manifolds::TraceSettings ts;
    ts.tol = settings.tol;
    ts.tol.max_time = 4000.0;
    auto tag = manifolds::branch_toward_origin(eqs[1], manifolds::Stability::Unstable);
    auto branch = manifolds::trace_1d(sys, eqs[1], manifolds::Stability::Unstable, tag, ts);
    return manifolds::fate_name(branch.fate.kind);
  };
  auto is_hi_side = [](const std::string& v, const std::string&, const std::string& hi_v) {
    return v == hi_v;
  };
  return bisect_on_predicate(BifurcationKind::HomoclinicFateFlip, b_lo, b_hi, resolution, fate_at,
                             is_hi_side);
}

BifurcationResult bisect_twin_merge(double a, double b_lo, double b_hi, double resolution,
                                    const AtlasSettings& settings) {
  auto arrangement_at = [&](double b) -> std::string {
    SystemDef sys = systems::make_cubic2(a, b);
    orbits::DetectSettings ds = settings.detect;
    ds.transient = std::max(ds.transient, 600.0);
    std::string last;
    for (double factor : {1.0, 3.0, 9.0}) {
      orbits::DetectSettings tryset = ds;
      tryset.transient = ds.transient * factor;
      auto outcome = orbits::detect_closed_orbit(sys, State(1.2, 0.0, -1.5), tryset);
      if (outcome.found()) {
        return outcome.orbit->symmetry.kind == orbits::SymmetryKind::SelfSymmetric ? "single"
                                                                                   : "twin";
      }
      last = outcome.diagnostics;
    }
    throw Error("bisect_twin_merge: no verified orbit at b=" + std::to_string(b) + " (" + last +
                ")");
  };
  auto is_hi_side = [](const std::string& v, const std::string&, const std::string& hi_v) {
    return v == hi_v;
  };
  return bisect_on_predicate(BifurcationKind::TwinMerge, b_lo, b_hi, resolution, arrangement_at,
                             is_hi_side);
}

}  // namespace flowatlas::atlas
