#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace flowatlas {

// Dense scalar-templated aliases; everything downstream works in double.
template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3T = Eigen::Matrix<Scalar, 3, 3>;

using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;
using CVec3 = Vec3T<std::complex<double>>;
using Complex = std::complex<double>;

// Phase-space point. NaN/inf never enters the data model; APIs reject it.
using State = Vec3;

inline bool is_finite(const State& s) {
  return std::isfinite(s.x()) && std::isfinite(s.y()) && std::isfinite(s.z());
}

inline bool is_finite(const Mat3& m) {
  return m.allFinite();
}

// Error hierarchy. Expected negative results (orbit not found, bisection
// bracket missing) travel as values; these exceptions mark contract
// violations and numerical breakdowns.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidStateError : Error {
  explicit InvalidStateError(const std::string& what) : Error(what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(what) {}
};

struct IntegrationFailure : Error {
  IntegrationFailure(const std::string& what, double t_last, const State& s_last)
      : Error(what), t(t_last), last_state(s_last) {}
  double t;
  State last_state;
};

struct StructureMismatch : Error {
  explicit StructureMismatch(const std::string& what) : Error(what) {}
};

struct NoSymmetryError : Error {
  explicit NoSymmetryError(const std::string& what) : Error(what) {}
};

struct NotBracketedError : Error {
  explicit NotBracketedError(const std::string& what) : Error(what) {}
};

struct AmbiguousWindingError : Error {
  explicit AmbiguousWindingError(const std::string& what) : Error(what) {}
};

struct OracleMismatchError : Error {
  explicit OracleMismatchError(const std::string& what) : Error(what) {}
};

struct UndecidedError : Error {
  explicit UndecidedError(const std::string& what) : Error(what) {}
};

struct EscapeError : Error {
  EscapeError(const std::string& what, double t_esc, const State& s)
      : Error(what), t(t_esc), exit_state(s) {}
  double t;
  State exit_state;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace flowatlas
