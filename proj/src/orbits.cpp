#include "flowatlas/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowatlas::orbits {

using integrator::CrossDirection;
using integrator::PlaneEvent;
using integrator::TerminationKind;
using integrator::Tolerances;
using integrator::Trajectory;
using systems::SystemDef;

namespace {

Vec3 any_unit_orthogonal(const Vec3& n) {
  // Axis least aligned with n, projected and normalized.
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(n[i]) < std::abs(n[k])) k = i;
  Vec3 e = Vec3::Unit(k);
  e -= e.dot(n) * n;
  return e.normalized();
}

std::vector<State> resample_polyline(const std::vector<State>& pts, double ds) {
  std::vector<State> out;
  if (pts.size() < 2) return pts;
  out.push_back(pts.front());
  double carried = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    Vec3 seg = pts[i] - pts[i - 1];
    double len = seg.norm();
    if (len <= 0.0) continue;
    double s = ds - carried;
    while (s <= len) {
      out.push_back(pts[i - 1] + (s / len) * seg);
      s += ds;
    }
    carried = len - (s - ds);
  }
  if ((out.back() - pts.back()).norm() > 1e-12) out.push_back(pts.back());
  return out;
}

void append_arc_on_sphere(std::vector<State>& path, const Vec3& from, const Vec3& to,
                          double radius, int segments) {
  Vec3 a = from.normalized();
  Vec3 b = to.normalized();
  double c = std::clamp(a.dot(b), -1.0, 1.0);
  double omega = std::acos(c);
  if (omega < 1e-12) {
    path.push_back(radius * b);
    return;
  }
  if (M_PI - omega < 1e-6) {
    // Antipodal: route through a deterministic waypoint.
    Vec3 mid = any_unit_orthogonal(a);
    append_arc_on_sphere(path, radius * a, radius * mid, radius, segments / 2 + 1);
    append_arc_on_sphere(path, radius * mid, radius * b, radius, segments / 2 + 1);
    return;
  }
  const double so = std::sin(omega);
  for (int k = 1; k <= segments; ++k) {
    double t = static_cast<double>(k) / segments;
    Vec3 p = (std::sin((1.0 - t) * omega) * a + std::sin(t * omega) * b) / so;
    path.push_back(radius * p);
  }
}

struct FootPoint {
  std::size_t segment = 0;
  double param = 0.0;
  State point = State::Zero();
  double dist2 = 0.0;
};

FootPoint foot_on_segment(const std::vector<State>& pts, std::size_t i, const State& p) {
  const Vec3 a = pts[i];
  const Vec3 seg = pts[i + 1] - pts[i];
  const double len2 = seg.squaredNorm();
  double t = len2 > 0.0 ? std::clamp((p - a).dot(seg) / len2, 0.0, 1.0) : 0.0;
  FootPoint f;
  f.segment = i;
  f.param = t;
  f.point = a + t * seg;
  f.dist2 = (p - f.point).squaredNorm();
  return f;
}

FootPoint nearest_foot(const std::vector<State>& pts, const State& p, std::size_t lo,
                       std::size_t hi) {
  FootPoint best = foot_on_segment(pts, lo, p);
  for (std::size_t i = lo + 1; i < hi; ++i) {
    FootPoint f = foot_on_segment(pts, i, p);
    if (f.dist2 < best.dist2) best = f;
  }
  return best;
}

}  // namespace

ReferenceCurve reference_curve_p0(const SystemDef& sys, const Tolerances& tol,
                                  double trunc_radius, double closure_radius) {
  auto eqs = spectral::equilibria(sys);
  if (eqs.empty()) throw StructureMismatch("reference curve: no equilibria");
  const auto& eq0 = eqs.front();

  manifolds::TraceSettings ts;
  ts.tol = tol;
  ts.tol.escape_radius = trunc_radius;
  ts.tol.max_time = 2000.0;
  ts.tol.max_step = std::min(ts.tol.max_step, 0.05);  // dense polyline for the frame transport

  auto trace = [&](manifolds::BranchTag tag) {
    auto branch = manifolds::trace_1d(sys, eq0, manifolds::Stability::Stable, tag, ts);
    if (branch.fate.kind != manifolds::FateKind::EscapesPositiveX &&
        branch.fate.kind != manifolds::FateKind::EscapesNegativeX) {
      throw StructureMismatch("reference curve: stable branch did not reach the truncation radius");
    }
    return branch.polyline;
  };
  std::vector<State> plus = trace(manifolds::BranchTag::Plus);
  std::vector<State> minus = trace(manifolds::BranchTag::Minus);

  std::vector<State> combined;
  combined.reserve(plus.size() + minus.size() + 1);
  for (auto it = minus.rbegin(); it != minus.rend(); ++it) combined.push_back(*it);
  combined.push_back(eq0.location);
  for (const auto& s : plus) combined.push_back(s);

  ReferenceCurve ref;
  ref.trunc_radius = trunc_radius;
  ref.closure_radius = closure_radius;
  ref.points = resample_polyline(combined, 0.05);

  const std::size_t nseg = ref.points.size() - 1;
  ref.tangent.resize(nseg);
  ref.frame_u.resize(nseg);
  ref.frame_v.resize(nseg);
  for (std::size_t i = 0; i < nseg; ++i) {
    Vec3 d = ref.points[i + 1] - ref.points[i];
    ref.tangent[i] = d.norm() > 0.0 ? d.normalized() : (i > 0 ? ref.tangent[i - 1] : Vec3::UnitX());
  }
  ref.frame_u[0] = any_unit_orthogonal(ref.tangent[0]);
  ref.frame_v[0] = ref.tangent[0].cross(ref.frame_u[0]);
  for (std::size_t i = 1; i < nseg; ++i) {
    Vec3 u = ref.frame_u[i - 1];
    u -= u.dot(ref.tangent[i]) * ref.tangent[i];
    double n = u.norm();
    ref.frame_u[i] = n > 1e-12 ? Vec3(u / n) : any_unit_orthogonal(ref.tangent[i]);
    ref.frame_v[i] = ref.tangent[i].cross(ref.frame_u[i]);
  }

  // Far-field closure: radially out from both truncation ends, joined by an
  // arc on the closure sphere. Contributes O(1/trunc_radius) to the linking
  // integral, well inside the rounding margin.
  const State& end_b = ref.points.back();
  const State& end_a = ref.points.front();
  State out_b = closure_radius * end_b.normalized();
  State out_a = closure_radius * end_a.normalized();
  for (int k = 1; k <= 8; ++k)
    ref.closure.push_back(end_b + (out_b - end_b) * (static_cast<double>(k) / 8));
  append_arc_on_sphere(ref.closure, out_b, out_a, closure_radius, 64);
  for (int k = 1; k < 8; ++k)
    ref.closure.push_back(out_a + (end_a - out_a) * (static_cast<double>(k) / 8));
  return ref;
}

namespace {

double winding_turns(const std::vector<State>& samples, const ReferenceCurve& ref) {
  if (samples.size() < 8) throw DomainError("rotation_number: too few orbit samples");
  const std::size_t nseg = ref.points.size() - 1;
  const std::size_t window = 800;  // segments; ds = 0.05 so +-40 length units

  FootPoint foot = nearest_foot(ref.points, samples[0], 0, nseg);
  auto angle_at = [&](const FootPoint& f, const State& p, bool& ok) {
    const Vec3 d = p - f.point;
    const double du = d.dot(ref.frame_u[f.segment]);
    const double dv = d.dot(ref.frame_v[f.segment]);
    ok = du * du + dv * dv > 1e-24;
    return std::atan2(dv, du);
  };

  bool ok = true;
  double theta_prev = angle_at(foot, samples[0], ok);
  if (!ok) throw AmbiguousWindingError("rotation_number: orbit touches the reference curve");
  double total = 0.0;
  const std::size_t n = samples.size();
  for (std::size_t k = 1; k <= n; ++k) {
    const State& p = samples[k % n];
    const std::size_t lo = foot.segment > window ? foot.segment - window : 0;
    const std::size_t hi = std::min(nseg, foot.segment + window);
    foot = nearest_foot(ref.points, p, lo, hi);
    const double theta = angle_at(foot, p, ok);
    if (!ok) throw AmbiguousWindingError("rotation_number: orbit touches the reference curve");
    double d = theta - theta_prev;
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    total += d;
    theta_prev = theta;
  }
  return total / (2.0 * M_PI);
}

}  // namespace

int rotation_number(const ClosedOrbit& orbit, const ReferenceCurve& ref) {
  const double turns = winding_turns(orbit.samples, ref);
  const double nearest = std::round(turns);
  if (std::abs(turns - nearest) >= 0.05) {
    std::ostringstream os;
    os << "rotation_number: winding " << turns << " is not within 0.05 of an integer";
    throw AmbiguousWindingError(os.str());
  }
  return static_cast<int>(std::llround(std::abs(nearest)));
}

namespace {

// Signed solid angle subtended between two segments; summed over all pairs
// and divided by 4*pi this is the exact linking number of the two polygons.
double segment_pair_solid_angle(const Vec3& a1, const Vec3& a2, const Vec3& b1, const Vec3& b2) {
  const Vec3 r13 = b1 - a1, r14 = b2 - a1, r23 = b1 - a2, r24 = b2 - a2;
  Vec3 n1 = r13.cross(r14);
  Vec3 n2 = r14.cross(r24);
  Vec3 n3 = r24.cross(r23);
  Vec3 n4 = r23.cross(r13);
  const double l1 = n1.norm(), l2 = n2.norm(), l3 = n3.norm(), l4 = n4.norm();
  if (l1 < 1e-300 || l2 < 1e-300 || l3 < 1e-300 || l4 < 1e-300) return 0.0;
  n1 /= l1;
  n2 /= l2;
  n3 /= l3;
  n4 /= l4;
  auto s = [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)); };
  const double omega = s(n1.dot(n2)) + s(n2.dot(n3)) + s(n3.dot(n4)) + s(n4.dot(n1));
  const double orient = (b2 - b1).cross(a2 - a1).dot(r13);
  return orient > 0.0 ? omega : -omega;
}

}  // namespace

double gauss_linking(const std::vector<State>& loop_a, const std::vector<State>& loop_b) {
  if (loop_a.size() < 3 || loop_b.size() < 3)
    throw DomainError("gauss_linking: loops need at least 3 vertices");
  double total = 0.0;
  const std::size_t na = loop_a.size(), nb = loop_b.size();
  for (std::size_t i = 0; i < na; ++i) {
    const Vec3& a1 = loop_a[i];
    const Vec3& a2 = loop_a[(i + 1) % na];
    for (std::size_t j = 0; j < nb; ++j) {
      total += segment_pair_solid_angle(a1, a2, loop_b[j], loop_b[(j + 1) % nb]);
    }
  }
  return total / (4.0 * M_PI);
}

int linking_oracle(const ClosedOrbit& orbit, const ReferenceCurve& ref) {
  std::vector<State> loop_a;
  const std::size_t stride = std::max<std::size_t>(1, orbit.samples.size() / 2048);
  for (std::size_t i = 0; i < orbit.samples.size(); i += stride) loop_a.push_back(orbit.samples[i]);

  std::vector<State> loop_b;
  loop_b.reserve(ref.points.size() + ref.closure.size());
  for (const auto& p : ref.points) loop_b.push_back(p);
  for (const auto& p : ref.closure) loop_b.push_back(p);

  const double lk = gauss_linking(loop_a, loop_b);
  const double nearest = std::round(lk);
  if (std::abs(lk - nearest) >= 0.05) {
    std::ostringstream os;
    os << "linking_oracle: Gauss integral " << lk << " is not within 0.05 of an integer";
    throw AmbiguousWindingError(os.str());
  }
  return static_cast<int>(std::llround(std::abs(nearest)));
}

SymmetryInfo classify_symmetry(const SystemDef& sys, const ClosedOrbit& orbit,
                               const Tolerances& tol, double threshold) {
  SymmetryInfo info;
  info.partner_anchor = systems::symmetry_image(sys, orbit.anchor);

  Trajectory one_period = integrator::integrate(sys, orbit.anchor, 0.0, orbit.period, tol);
  const std::size_t n = orbit.samples.size();
  const double dt = orbit.period / static_cast<double>(n);

  auto orbit_point = [&](double t) {
    t = std::fmod(t, orbit.period);
    if (t < 0.0) t += orbit.period;
    return one_period.at(t);
  };

  const std::size_t test_count = 256;
  const std::size_t stride = std::max<std::size_t>(1, n / test_count);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    const State p = systems::symmetry_image(sys, orbit.samples[i]);
    // Coarse nearest sample, then golden-section refinement on the dense orbit.
    std::size_t jbest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = (orbit.samples[j] - p).squaredNorm();
      if (d2 < best) {
        best = d2;
        jbest = j;
      }
    }
    double lo = (static_cast<double>(jbest) - 2.0) * dt;
    double hi = (static_cast<double>(jbest) + 2.0) * dt;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = (orbit_point(x1) - p).norm(), f2 = (orbit_point(x2) - p).norm();
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = (orbit_point(x1) - p).norm();
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = (orbit_point(x2) - p).norm();
      }
    }
    worst = std::max(worst, std::min(f1, f2));
    if (worst > 10.0 * threshold) break;  // clearly a twin
  }
  info.image_distance = worst;
  info.kind = worst < threshold ? SymmetryKind::SelfSymmetric : SymmetryKind::TwinOf;
  return info;
}

namespace {

// Multipliers of the monodromy via the flow direction (eigenvalue 1) and the
// section-projected 2x2 map. The characteristic cubic of the raw matrix loses
// the unit multiplier to cancellation for long, strongly sheared orbits.
std::array<Complex, 3> multipliers_from_monodromy(const SystemDef& sys, const State& anchor,
                                                  const Mat3& mono) {
  const Vec3 f = systems::eval_field(sys, anchor);
  const double fn = f.norm();
  if (fn < 1e-12) throw StructureMismatch("floquet: anchor is an equilibrium");
  const Vec3 n = f / fn;
  Vec3 e1 = Vec3::Zero();
  {
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(n[i]) < std::abs(n[k])) k = i;
    e1 = Vec3::Unit(k);
    e1 -= e1.dot(n) * n;
    e1.normalize();
  }
  const Vec3 e2 = n.cross(e1);

  const Complex mu0(n.dot(mono * n), 0.0);

  const Mat3 proj = Mat3::Identity() - f * n.transpose() / n.dot(f);
  const Mat3 pm = proj * mono;
  const double a11 = e1.dot(pm * e1), a12 = e1.dot(pm * e2);
  const double a21 = e2.dot(pm * e1), a22 = e2.dot(pm * e2);
  const double tr = a11 + a22;
  const double det = a11 * a22 - a12 * a21;
  const double disc = tr * tr - 4.0 * det;
  Complex mu1, mu2;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    // Cancellation-safe pairing for real roots.
    const double q = 0.5 * (tr + (tr >= 0.0 ? s : -s));
    mu1 = Complex(q, 0.0);
    mu2 = Complex(q != 0.0 ? det / q : 0.5 * (tr - s), 0.0);
  } else {
    const double im = 0.5 * std::sqrt(-disc);
    mu1 = Complex(0.5 * tr, im);
    mu2 = Complex(0.5 * tr, -im);
  }

  std::array<Complex, 3> out = {mu0, mu1, mu2};
  std::sort(out.begin(), out.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return out;
}

}  // namespace

std::array<Complex, 3> floquet(const SystemDef& sys, const ClosedOrbit& orbit,
                               const Tolerances& tol) {
  auto mono = integrator::flow_with_monodromy(sys, orbit.anchor, orbit.period, tol);
  return multipliers_from_monodromy(sys, orbit.anchor, mono.matrix);
}

namespace {

struct Attempt {
  bool ok = false;
  bool unstable = false;
  State anchor = State::Zero();
  double period = 0.0;
  double residual = 0.0;
  std::array<Complex, 3> multipliers{};
  std::string note;
};

struct SectionFrame {
  Vec3 normal, e1, e2;
};

SectionFrame section_at(const SystemDef& sys, const State& anchor) {
  const Vec3 f = systems::eval_field(sys, anchor);
  const double fn = f.norm();
  if (fn < 1e-10) throw StructureMismatch("section: anchor is (numerically) an equilibrium");
  SectionFrame s;
  s.normal = f / fn;
  s.e1 = any_unit_orthogonal(s.normal);
  s.e2 = s.normal.cross(s.e1);
  return s;
}

// First Up-crossing of the section near the expected return time.
std::optional<integrator::Crossing> section_return(const SystemDef& sys, const State& q,
                                                   const PlaneEvent& plane, double t_expect,
                                                   const Tolerances& tol) {
  auto seq = integrator::crossings(sys, q, plane, 0.0, 1.35 * t_expect, tol);
  std::optional<integrator::Crossing> best;
  for (const auto& c : seq.crossings) {
    if (c.direction <= 0) continue;
    if (std::abs(c.t - t_expect) > 0.3 * t_expect) continue;
    if (!best || std::abs(c.t - t_expect) < std::abs(best->t - t_expect)) best = c;
  }
  return best;
}

Attempt newton_refine(const SystemDef& sys, const State& anchor0, double t_cand,
                      const DetectSettings& st) {
  Attempt out;
  const SectionFrame sec = section_at(sys, anchor0);
  const PlaneEvent plane =
      PlaneEvent::make(sec.normal, sec.normal.dot(anchor0), CrossDirection::Up);

  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  double period = t_cand;
  double prev_res = std::numeric_limits<double>::infinity();
  Eigen::Vector2d u_prev = u;
  int damping_left = 4;

  for (int iter = 0; iter < st.newton_max_iter; ++iter) {
    const State q = anchor0 + u[0] * sec.e1 + u[1] * sec.e2;
    auto ret = section_return(sys, q, plane, t_cand, st.tol);
    if (!ret) {
      out.note = "newton: section return lost";
      return out;
    }
    period = ret->t;
    const Vec3 diff = ret->state - q;
    const Eigen::Vector2d r(diff.dot(sec.e1), diff.dot(sec.e2));
    const double res = r.norm();

    if (res > prev_res && damping_left > 0) {
      u = u_prev + 0.5 * (u - u_prev);
      --damping_left;
      continue;
    }
    if (res < st.newton_tol) {
      out.ok = true;
      out.anchor = q;
      out.period = period;
      out.residual = res;
      return out;
    }
    prev_res = res;
    u_prev = u;
    damping_left = 4;

    const Mat3 mono = integrator::flow_with_monodromy(sys, q, period, st.tol).matrix;
    const Vec3 f_ret = systems::eval_field(sys, ret->state);
    const double denom = sec.normal.dot(f_ret);
    if (std::abs(denom) < 1e-12) {
      out.note = "newton: return tangent to the section";
      return out;
    }
    const Mat3 proj = Mat3::Identity() - f_ret * sec.normal.transpose() / denom;
    const Mat3 pm = proj * mono;
    Eigen::Matrix2d a;
    a(0, 0) = sec.e1.dot(pm * sec.e1) - 1.0;
    a(0, 1) = sec.e1.dot(pm * sec.e2);
    a(1, 0) = sec.e2.dot(pm * sec.e1);
    a(1, 1) = sec.e2.dot(pm * sec.e2) - 1.0;
    if (std::abs(a.determinant()) < 1e-14) {
      out.note = "newton: singular section jacobian";
      return out;
    }
    u += a.colPivHouseholderQr().solve(-r);
  }
  out.note = "newton: no convergence within the iteration budget";
  return out;
}

// Shared by the recurrence-scan path and refine_orbit: strip period
// multiples, enforce the return residual, and compute the multipliers.
Attempt verify_attempt(const SystemDef& sys, Attempt a, const DetectSettings& st,
                       std::string& diag) {
  Attempt fail;
  // Verification runs at tightened tolerances: over long periods the base
  // tolerance cannot resolve the unit multiplier to 1e-5.
  const Tolerances verify_tol = st.tol.tightened(100.0);
  bool shrunk = true;
  while (shrunk) {
    shrunk = false;
    for (int k : {2, 3}) {
      const double t_sub = a.period / k;
      if (t_sub < 0.5) continue;
      const State back = integrator::flow(sys, a.anchor, t_sub, st.tol);
      if ((back - a.anchor).norm() < 1e-4) {
        Attempt sub = newton_refine(sys, a.anchor, t_sub, st);
        if (sub.ok) {
          diag += "period reduced by factor " + std::to_string(k) + "; ";
          a = sub;
          shrunk = true;
          break;
        }
      }
    }
  }

  // Final polish against the tightened flow so the anchor is a fixed point of
  // the same map the residual is measured with.
  {
    DetectSettings polish = st;
    polish.tol = verify_tol;
    Attempt polished = newton_refine(sys, a.anchor, a.period, polish);
    if (polished.ok) {
      polished.unstable = a.unstable;
      a = polished;
    }
  }

  const State ret = integrator::flow(sys, a.anchor, a.period, verify_tol);
  a.residual = (ret - a.anchor).norm();
  if (a.residual > 1e-8) {
    fail.note = "refined orbit fails the 1e-8 return residual (" + std::to_string(a.residual) + ")";
    return fail;
  }

  const Mat3 mono = integrator::flow_with_monodromy(sys, a.anchor, a.period, verify_tol).matrix;
  a.multipliers = multipliers_from_monodromy(sys, a.anchor, mono);
  int trivial = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double d = std::abs(a.multipliers[i] - Complex(1.0, 0.0));
    if (d < best) {
      best = d;
      trivial = i;
    }
  }
  if (best > 1e-5) {
    fail.note = "no Floquet multiplier within 1e-5 of 1 (closest offset " + std::to_string(best) + ")";
    return fail;
  }
  for (int i = 0; i < 3; ++i) {
    if (i == trivial) continue;
    if (std::abs(a.multipliers[i]) > 1.0 + st.floquet_slack) a.unstable = true;
  }
  a.ok = true;
  return a;
}

Attempt attempt_detection(const SystemDef& sys, const State& s0, double transient, double delta,
                          const DetectSettings& st, std::string& diag) {
  Attempt fail;

  Trajectory tr = integrator::integrate(sys, s0, 0.0, transient, st.tol);
  if (tr.termination.kind == TerminationKind::Escaped) {
    fail.note = "escaped during the transient (t=" + std::to_string(tr.termination.t) + ")";
    return fail;
  }
  const State anchor0 = tr.back();
  const Vec3 f0 = systems::eval_field(sys, anchor0);
  if (f0.norm() < 1e-8) {
    fail.note = "transient converged to an equilibrium";
    return fail;
  }
  const SectionFrame sec = section_at(sys, anchor0);
  const PlaneEvent plane =
      PlaneEvent::make(sec.normal, sec.normal.dot(anchor0), CrossDirection::Up);

  auto seq = integrator::crossings(sys, anchor0, plane, 0.0, st.search_window, st.tol);
  double t_cand = -1.0;
  const Vec3 fhat0 = f0.normalized();
  for (const auto& c : seq.crossings) {
    if (c.t < 0.1) continue;
    if ((c.state - anchor0).norm() >= delta) continue;
    const Vec3 fc = systems::eval_field(sys, c.state);
    if (fc.norm() == 0.0) continue;
    if (fc.normalized().dot(fhat0) <= st.velocity_cos) continue;
    t_cand = c.t;
    break;
  }
  if (t_cand < 0.0) {
    fail.note = "no recurrence within " + std::to_string(st.search_window) +
                " time units (threshold " + std::to_string(delta) + ")";
    return fail;
  }

  Attempt a = newton_refine(sys, anchor0, t_cand, st);
  if (!a.ok) return a;
  return verify_attempt(sys, a, st, diag);
}

DetectOutcome finalize_orbit(const SystemDef& sys, const Attempt& a,
                             const DetectSettings& settings, const ReferenceCurve* ref,
                             std::string diag) {
  DetectOutcome out;
  ClosedOrbit orbit;
  orbit.anchor = a.anchor;
  orbit.period = a.period;
  orbit.return_residual = a.residual;
  orbit.floquet = a.multipliers;

  Trajectory one_period = integrator::integrate(sys, a.anchor, 0.0, a.period, settings.tol);
  orbit.samples.reserve(settings.sample_count);
  for (int i = 0; i < settings.sample_count; ++i) {
    const double t = a.period * static_cast<double>(i) / settings.sample_count;
    State s = one_period.at(t);
    orbit.samples.push_back(s);
    orbit.amplitude = std::max(orbit.amplitude, s.norm());
  }

  ReferenceCurve local_ref;
  const ReferenceCurve* use_ref = ref;
  if (!use_ref) {
    try {
      local_ref = reference_curve_p0(sys, settings.tol);
      use_ref = &local_ref;
    } catch (const Error&) {
      use_ref = nullptr;  // family without the saddle structure; skip the count
    }
  }
  if (use_ref) {
    const int turns = rotation_number(orbit, *use_ref);
    const int link = linking_oracle(orbit, *use_ref);
    if (turns != link) {
      std::ostringstream os;
      os << "rotation count disagrees with the linking oracle (" << turns << " vs " << link
         << ") at anchor (" << a.anchor.transpose() << ")";
      throw OracleMismatchError(os.str());
    }
    orbit.rotation_number = turns;
  }

  if (systems::has_point_symmetry(sys)) {
    orbit.symmetry = classify_symmetry(sys, orbit, settings.tol);
  }
  out.orbit = std::move(orbit);
  out.diagnostics = std::move(diag);
  return out;
}

}  // namespace

DetectOutcome detect_closed_orbit(const SystemDef& sys, const State& s0,
                                  const DetectSettings& settings, const ReferenceCurve* ref) {
  if (!is_finite(s0)) throw InvalidStateError("detect_closed_orbit: non-finite seed");
  DetectOutcome out;
  std::string diag;

  Attempt a;
  double delta = settings.recurrence_dist;
  double transient = settings.transient;
  for (int attempt_idx = 0; attempt_idx <= settings.max_retries; ++attempt_idx) {
    a = attempt_detection(sys, s0, transient, delta, settings, diag);
    if (!a.ok) {
      out.diagnostics = diag + a.note;
      return out;
    }
    if (!a.unstable || !settings.require_attracting) break;
    diag += "unstable orbit at recurrence threshold " + std::to_string(delta) + "; ";
    if (attempt_idx == settings.max_retries) {
      out.diagnostics = diag + "only an unstable orbit was found";
      return out;
    }
    delta /= 10.0;
    transient *= 1.5;
  }
  return finalize_orbit(sys, a, settings, ref, diag);
}

DetectOutcome refine_orbit(const SystemDef& sys, const State& guess, double t_guess,
                           const DetectSettings& settings, const ReferenceCurve* ref) {
  if (!is_finite(guess)) throw InvalidStateError("refine_orbit: non-finite guess");
  if (!(t_guess > 0.0)) throw DomainError("refine_orbit: period guess must be positive");
  std::string diag;
  Attempt a = newton_refine(sys, guess, t_guess, settings);
  if (a.ok) a = verify_attempt(sys, a, settings, diag);
  if (!a.ok) {
    DetectOutcome out;
    out.diagnostics = diag + a.note;
    return out;
  }
  return finalize_orbit(sys, a, settings, ref, diag);
}

LyapunovSpectrum lyapunov_spectrum(const SystemDef& sys, const State& s0, double t_total,
                                   const LyapunovSettings& settings) {
  if (!(t_total > 0.0)) throw DomainError("lyapunov_spectrum: t_total must be > 0");
  const Tolerances& tol = settings.tol;

  // Pre-check boundedness of the base trajectory over the whole run.
  {
    auto probe = integrator::integrate(sys, s0, 0.0, settings.transient + t_total, tol);
    if (probe.termination.kind == TerminationKind::Escaped) {
      throw EscapeError("lyapunov_spectrum: trajectory escapes at t=" +
                            std::to_string(probe.termination.t),
                        probe.termination.t, probe.termination.exit_state);
    }
  }

  State y = s0;
  if (settings.transient > 0.0) {
    y = integrator::flow(sys, y, settings.transient, tol);
  }

  Mat3 frame = Mat3::Identity();
  Vec3 sums = Vec3::Zero();
  const long n_steps = std::max(1L, std::lround(t_total / settings.renorm_dt));
  const long history_stride = std::max(1L, n_steps / 256);

  LyapunovSpectrum out;
  double t = 0.0;
  for (long k = 1; k <= n_steps; ++k) {
    integrator::advance_with_tangent(sys, y, frame, t, settings.renorm_dt, tol);
    t += settings.renorm_dt;
    if (y.norm() >= tol.escape_radius)
      throw EscapeError("lyapunov_spectrum: trajectory escapes at t=" + std::to_string(t), t, y);

    // Modified Gram-Schmidt; the diagonal norms carry the stretch factors.
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < i; ++j) frame.col(i) -= frame.col(j).dot(frame.col(i)) * frame.col(j);
      const double r = frame.col(i).norm();
      if (!(r > 0.0)) throw Error("lyapunov_spectrum: tangent frame collapsed");
      sums[i] += std::log(r);
      frame.col(i) /= r;
    }
    if (k % history_stride == 0 || k == n_steps) {
      out.convergence_history.push_back({t, {sums[0] / t, sums[1] / t, sums[2] / t}});
    }
  }
  out.integration_time = t;
  std::array<double, 3> ex = {sums[0] / t, sums[1] / t, sums[2] / t};
  std::sort(ex.begin(), ex.end(), std::greater<double>());
  out.exponents = ex;
  return out;
}

}  // namespace flowatlas::orbits
