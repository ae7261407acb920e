#include "flowatlas/spectral.hpp"

#include <algorithm>
#include <cmath>

namespace flowatlas::spectral {

using systems::Family;
using systems::SystemDef;

namespace {

constexpr double kDegenerateDisc = 1e-10;
constexpr double kAxisTol = 1e-9;

Complex newton_polish(Complex x, double c2, double c1, double c0) {
  // One Newton step on p(x) = x^3 + c2 x^2 + c1 x + c0.
  Complex p = ((x + c2) * x + c1) * x + c0;
  Complex dp = (3.0 * x + 2.0 * c2) * x + c1;
  if (std::abs(dp) > 0.0) x -= p / dp;
  return x;
}

void sort_roots(std::array<Complex, 3>& r) {
  std::sort(r.begin(), r.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
}

}  // namespace

CubicRoots solve_cubic(double c2, double c1, double c0) {
  if (!std::isfinite(c2) || !std::isfinite(c1) || !std::isfinite(c0))
    throw InvalidStateError("solve_cubic: non-finite coefficients");

  CubicRoots out;
  // Discriminant of the monic cubic.
  out.discriminant = 18.0 * c2 * c1 * c0 - 4.0 * c2 * c2 * c2 * c0 +
                     c2 * c2 * c1 * c1 - 4.0 * c1 * c1 * c1 - 27.0 * c0 * c0;
  out.degenerate = std::abs(out.discriminant) < kDegenerateDisc;

  // Depressed form t^3 + p t + q with x = t - c2/3.
  const double shift = c2 / 3.0;
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;

  std::array<Complex, 3> r;
  if (out.discriminant > 0.0) {
    // Three distinct real roots: trigonometric form.
    const double m = 2.0 * std::sqrt(-p / 3.0);
    double arg = 3.0 * q / (p * m);
    arg = std::clamp(arg, -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) {
      double t = m * std::cos(theta - 2.0 * M_PI * k / 3.0);
      r[k] = Complex(t - shift, 0.0);
    }
  } else {
    // One real root (Cardano, cancellation-safe) plus a conjugate pair.
    const double half_q = q / 2.0;
    const double disc = half_q * half_q + p * p * p / 27.0;  // >= 0 here
    const double sq = std::sqrt(std::max(disc, 0.0));
    const double u3 = -half_q - std::copysign(sq, q);
    const double u = std::cbrt(u3);
    const double v = (u != 0.0) ? -p / (3.0 * u) : 0.0;
    const double t1 = u + v;
    const double x1 = t1 - shift;
    // Deflate: x^3 + c2 x^2 + c1 x + c0 = (x - x1)(x^2 + B x + C).
    const double B = c2 + x1;
    const double C = c1 + x1 * B;
    const double qd = B * B - 4.0 * C;
    if (qd >= 0.0) {
      // Discriminant said complex pair but deflation disagrees (borderline
      // repeated roots); fall back to two real roots.
      const double s = std::sqrt(qd);
      r = {Complex(x1, 0.0), Complex((-B + s) / 2.0, 0.0), Complex((-B - s) / 2.0, 0.0)};
    } else {
      const double im = std::sqrt(-qd) / 2.0;
      r = {Complex(x1, 0.0), Complex(-B / 2.0, im), Complex(-B / 2.0, -im)};
    }
  }

  for (auto& root : r) {
    root = newton_polish(root, c2, c1, c0);
    if (std::abs(root.imag()) < 1e-14 * std::max(1.0, std::abs(root.real())))
      root = Complex(root.real(), 0.0);
  }
  // Re-pair conjugates exactly after polishing.
  if (r[0].imag() != 0.0 || r[1].imag() != 0.0 || r[2].imag() != 0.0) {
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        if (r[i].imag() > 0.0 && r[j].imag() < 0.0) {
          Complex mean(0.5 * (r[i].real() + r[j].real()), 0.5 * (r[i].imag() - r[j].imag()));
          r[i] = mean;
          r[j] = std::conj(mean);
        }
      }
    }
  }
  sort_roots(r);
  out.roots = r;
  return out;
}

namespace {

CVec3 eigenvector_for(const Mat3& m, Complex lambda) {
  Mat3T<Complex> a = m.cast<Complex>();
  for (int i = 0; i < 3; ++i) a(i, i) -= lambda;

  // Kernel vector of the (numerically) rank-2 matrix: the cross product of
  // its two most independent rows.
  CVec3 rows[3] = {a.row(0).transpose(), a.row(1).transpose(), a.row(2).transpose()};
  CVec3 best = CVec3::Zero();
  double best_norm = -1.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      CVec3 c = rows[i].cross(rows[j]);
      double n = c.norm();
      if (n > best_norm) {
        best_norm = n;
        best = c;
      }
    }
  }
  if (best_norm <= 0.0) {
    // All rows parallel (triple root); any kernel direction will do.
    best = CVec3(1.0, 0.0, 0.0);
  }
  best /= best.norm();
  // Fix the phase: the largest-magnitude component is made real positive.
  int imax = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(best[i]) > std::abs(best[imax])) imax = i;
  Complex phase = best[imax] / std::abs(best[imax]);
  best /= phase;
  return best;
}

bool is_real_root(const Complex& z) { return z.imag() == 0.0; }

}  // namespace

Eigen3Result eigen3(const Mat3& m) {
  if (!is_finite(m)) throw InvalidStateError("eigen3: non-finite matrix");
  const double tr = m.trace();
  const double m2 = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) +
                    m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0) +
                    m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  const double det = m.determinant();
  CubicRoots roots = solve_cubic(-tr, m2, -det);

  Eigen3Result out;
  out.degenerate = roots.degenerate;
  for (int i = 0; i < 3; ++i) {
    out.pairs[i].value = roots.roots[i];
    out.pairs[i].vector = eigenvector_for(m, roots.roots[i]);
  }
  return out;
}

std::string kind_name(EquilibriumKind k) {
  switch (k) {
    case EquilibriumKind::SaddleFocus1: return "saddle-focus(stable_dim=1)";
    case EquilibriumKind::SaddleFocus2: return "saddle-focus(stable_dim=2)";
    case EquilibriumKind::StableFocusNode: return "stable";
    case EquilibriumKind::UnstableFocusNode: return "unstable";
    case EquilibriumKind::Saddle: return "saddle";
    case EquilibriumKind::Degenerate: return "degenerate";
  }
  return "?";
}

EquilibriumKind classify(const Eigen3Result& eigen) {
  if (eigen.degenerate) return EquilibriumKind::Degenerate;
  int n_complex = 0;
  for (const auto& p : eigen.pairs) {
    if (std::abs(p.value.real()) < kAxisTol) return EquilibriumKind::Degenerate;
    if (!is_real_root(p.value)) ++n_complex;
  }
  if (n_complex == 2) {
    Complex real_ev, pair_ev;
    for (const auto& p : eigen.pairs) {
      if (is_real_root(p.value)) real_ev = p.value;
      else pair_ev = p.value;
    }
    if (real_ev.real() < 0.0 && pair_ev.real() > 0.0) return EquilibriumKind::SaddleFocus1;
    if (real_ev.real() > 0.0 && pair_ev.real() < 0.0) return EquilibriumKind::SaddleFocus2;
    if (real_ev.real() < 0.0 && pair_ev.real() < 0.0) return EquilibriumKind::StableFocusNode;
    return EquilibriumKind::UnstableFocusNode;
  }
  int n_neg = 0;
  for (const auto& p : eigen.pairs)
    if (p.value.real() < 0.0) ++n_neg;
  if (n_neg == 3) return EquilibriumKind::StableFocusNode;
  if (n_neg == 0) return EquilibriumKind::UnstableFocusNode;
  return EquilibriumKind::Saddle;
}

namespace {

Equilibrium make_equilibrium(const SystemDef& sys, int id, const State& loc) {
  Equilibrium eq;
  eq.id = id;
  eq.location = loc;
  eq.eigen = eigen3(systems::eval_jacobian(sys, loc));
  eq.kind = classify(eq.eigen);
  return eq;
}

}  // namespace

std::vector<Equilibrium> equilibria(const SystemDef& sys) {
  std::vector<Equilibrium> out;
  switch (sys.family()) {
    case Family::Cubic2:
    case Family::Cubic2Prime: {
      const double a = sys.cubic().a;
      out.push_back(make_equilibrium(sys, 0, State(0, 0, 0)));
      out.push_back(make_equilibrium(sys, 1, State(-a, 0, 0)));
      out.push_back(make_equilibrium(sys, 2, State(a, 0, 0)));
      break;
    }
    case Family::Lorenz: {
      const auto& p = sys.lorenz();
      out.push_back(make_equilibrium(sys, 0, State(0, 0, 0)));
      if (p.rho > 1.0) {
        const double c = std::sqrt(p.beta * (p.rho - 1.0));
        out.push_back(make_equilibrium(sys, 1, State(-c, -c, p.rho - 1.0)));
        out.push_back(make_equilibrium(sys, 2, State(c, c, p.rho - 1.0)));
      }
      break;
    }
    case Family::Silnikov7: {
      const auto& p = sys.silnikov();
      if (p.alpha == 0.0)
        throw DomainError("equilibria: alpha = 0 makes the whole x-axis stationary");
      // Real roots of delta x^3 - gamma x^2 - x = x (delta x^2 - gamma x - 1).
      std::vector<double> xs = {0.0};
      if (p.delta != 0.0) {
        const double d = p.gamma * p.gamma + 4.0 * p.delta;
        if (d >= 0.0) {
          const double s = std::sqrt(d);
          xs.push_back((p.gamma + s) / (2.0 * p.delta));
          xs.push_back((p.gamma - s) / (2.0 * p.delta));
        }
      } else if (p.gamma != 0.0) {
        xs.push_back(-1.0 / p.gamma);
      }
      std::sort(xs.begin(), xs.end(), [](double l, double r) {
        double al = std::abs(l), ar = std::abs(r);
        if (al != ar) return al < ar;
        return l < r;
      });
      int id = 0;
      for (double x : xs) out.push_back(make_equilibrium(sys, id++, State(x, 0, 0)));
      break;
    }
  }
  return out;
}

SaddleFocusSplit saddle_focus_split(const Equilibrium& eq) {
  SaddleFocusSplit out;
  bool have_real = false, have_pair = false;
  CVec3 pair_vec;
  for (const auto& p : eq.eigen.pairs) {
    if (is_real_root(p.value) && !have_real) {
      out.real_eigenvalue = p.value.real();
      out.real_eigenvector = p.vector.real();
      // The phase fix leaves a tiny imaginary residue at most; renormalize.
      out.real_eigenvector.normalize();
      have_real = true;
    } else if (p.value.imag() > 0.0) {
      out.pair_eigenvalue = p.value;
      pair_vec = p.vector;
      have_pair = true;
    }
  }
  if (!have_real || !have_pair)
    throw StructureMismatch("saddle_focus_split: spectrum is not one real root plus a pair");
  Vec3 u = pair_vec.real();
  Vec3 v = pair_vec.imag();
  u.normalize();
  v -= v.dot(u) * u;
  v.normalize();
  out.plane_u = u;
  out.plane_v = v;
  return out;
}

double hopf_locus(double a, double b_lo, double b_hi) {
  auto pair_re = [&](double b) {
    SystemDef sys = systems::make_cubic2(a, b);
    Eigen3Result e = eigen3(systems::eval_jacobian(sys, State(0, 0, 0)));
    for (const auto& p : e.pairs)
      if (p.value.imag() > 0.0) return p.value.real();
    throw StructureMismatch("hopf_locus: no complex pair at p0 for b in the range");
  };
  double f_lo = pair_re(b_lo);
  double f_hi = pair_re(b_hi);
  if (f_lo == 0.0) return b_lo;
  if (f_hi == 0.0) return b_hi;
  if ((f_lo > 0.0) == (f_hi > 0.0))
    throw NotBracketedError("hopf_locus: Re(pair) does not change sign on the range");
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (b_lo + b_hi);
    double f_mid = pair_re(mid);
    if (std::abs(f_mid) < kAxisTol || b_hi - b_lo < 1e-14) return mid;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      b_lo = mid;
      f_lo = f_mid;
    } else {
      b_hi = mid;
    }
  }
  return 0.5 * (b_lo + b_hi);
}

}  // namespace flowatlas::spectral
