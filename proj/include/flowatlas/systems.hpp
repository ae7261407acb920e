#pragma once

#include <map>
#include <string>
#include <variant>

#include "flowatlas/types.hpp"

namespace flowatlas::systems {

enum class Family { Cubic2, Cubic2Prime, Lorenz, Silnikov7 };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct CubicParams {
  double a = 1.0;
  double b = 0.3;
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct SilnikovParams {
  double alpha = 1.0;
  double beta = 0.4;
  double gamma = 0.0;
  double delta = 1.0;
};

using ParamRecord = std::variant<CubicParams, LorenzParams, SilnikovParams>;

// One ODE family plus its parameters. Immutable after construction; a scan
// builds a fresh SystemDef per parameter point.
class SystemDef {
 public:
  SystemDef(Family family, ParamRecord params);

  Family family() const { return family_; }
  const ParamRecord& params() const { return params_; }

  const CubicParams& cubic() const;
  const LorenzParams& lorenz() const;
  const SilnikovParams& silnikov() const;

  // Damping coefficient of the z-equation (b or beta); the negated constant
  // divergence for the cubic and Silnikov families.
  double damping() const;

  std::string describe() const;

 private:
  Family family_;
  ParamRecord params_;
};

SystemDef make_cubic2(double a, double b);
SystemDef make_cubic2_prime(double a, double b);
SystemDef make_lorenz(double sigma, double rho, double beta);
SystemDef make_silnikov7(double alpha, double beta, double gamma, double delta);

// Construction from a key-value config section, e.g.
//   family = "cubic2"
//   a = 1.0
//   b = 0.312
// Unknown keys and domain violations raise ConfigError naming the key.
SystemDef system_from_config(const std::map<std::string, std::string>& kv);

State eval_field(const SystemDef& sys, const State& s);
Mat3 eval_jacobian(const SystemDef& sys, const State& s);
double divergence(const SystemDef& sys, const State& s);

// The point symmetry of the family: (x,y,z) -> (-x,-y,-z) for the cubic and
// gamma=0 Silnikov systems, (x,y,z) -> (-x,-y,z) for Lorenz. Silnikov with
// gamma != 0 has no such symmetry and raises NoSymmetryError.
State symmetry_image(const SystemDef& sys, const State& s);
bool has_point_symmetry(const SystemDef& sys);

}  // namespace flowatlas::systems
