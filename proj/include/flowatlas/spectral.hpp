#pragma once

#include <array>
#include <vector>

#include "flowatlas/systems.hpp"
#include "flowatlas/types.hpp"

namespace flowatlas::spectral {

struct EigenPair {
  Complex value;
  CVec3 vector;  // unit norm, phase fixed: largest-magnitude component real positive
};

// Roots and eigenpairs are sorted by real part descending (ties: imaginary
// part descending), so a conjugate pair is always adjacent with the +i member
// first.
struct Eigen3Result {
  std::array<EigenPair, 3> pairs;
  bool degenerate = false;  // cubic discriminant within 1e-10 of zero
};

enum class EquilibriumKind {
  SaddleFocus1,  // 1D stable manifold: one real negative eigenvalue, pair with Re > 0
  SaddleFocus2,  // 2D stable manifold: one real positive eigenvalue, pair with Re < 0
  StableFocusNode,
  UnstableFocusNode,
  Saddle,
  Degenerate,
};

std::string kind_name(EquilibriumKind k);

struct Equilibrium {
  int id = 0;  // index in the equilibria() order (p0, p1, p2 for the cubic families)
  State location = State::Zero();
  Eigen3Result eigen;
  EquilibriumKind kind = EquilibriumKind::Degenerate;
};

// Roots of x^3 + c2 x^2 + c1 x + c0, via the trigonometric form when all
// three roots are real and Cardano otherwise, each polished by one Newton
// step. Sorted as in Eigen3Result.
struct CubicRoots {
  std::array<Complex, 3> roots;
  double discriminant = 0.0;
  bool degenerate = false;
};
CubicRoots solve_cubic(double c2, double c1, double c0);

Eigen3Result eigen3(const Mat3& m);

EquilibriumKind classify(const Eigen3Result& eigen);

// Closed-form equilibria per family, each with its spectrum and kind.
std::vector<Equilibrium> equilibria(const systems::SystemDef& sys);

// Real eigenvalue/eigenvector of a saddle-focus (the 1D manifold direction)
// and the real plane spanned by the complex pair (the 2D manifold tangent).
struct SaddleFocusSplit {
  double real_eigenvalue = 0.0;
  Vec3 real_eigenvector = Vec3::Zero();   // unit
  Complex pair_eigenvalue;                // the +i member
  Vec3 plane_u = Vec3::Zero();            // orthonormal basis of the eigen-plane
  Vec3 plane_v = Vec3::Zero();
};
SaddleFocusSplit saddle_focus_split(const Equilibrium& eq);

// Parameter at which the complex pair at p0 of the Cubic2 family crosses the
// imaginary axis, located by bisection on Re(pair) over [b_lo, b_hi].
// For a = 1 the analytic answer is b = a^2 = 1.
double hopf_locus(double a, double b_lo, double b_hi);

}  // namespace flowatlas::spectral
