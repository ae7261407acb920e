#include "flowatlas/systems.hpp"

#include <cmath>
#include <sstream>

namespace flowatlas::systems {

namespace {

void require_finite(const State& s, const char* op) {
  if (!is_finite(s)) {
    throw InvalidStateError(std::string(op) + ": non-finite state");
  }
}

void validate(Family family, const ParamRecord& params) {
  auto finite = [](double v) { return std::isfinite(v); };
  switch (family) {
    case Family::Cubic2:
    case Family::Cubic2Prime: {
      const auto& p = std::get<CubicParams>(params);
      if (!finite(p.a) || !finite(p.b)) throw DomainError("cubic params must be finite");
      if (p.a <= 0.0) throw DomainError("a: must be > 0");
      if (p.b < 0.0) throw DomainError("b: must be >= 0");
      break;
    }
    case Family::Lorenz: {
      const auto& p = std::get<LorenzParams>(params);
      if (!finite(p.sigma) || !finite(p.rho) || !finite(p.beta))
        throw DomainError("lorenz params must be finite");
      if (p.sigma <= 0.0) throw DomainError("sigma: must be > 0");
      if (p.rho <= 0.0) throw DomainError("rho: must be > 0");
      if (p.beta <= 0.0) throw DomainError("beta: must be > 0");
      break;
    }
    case Family::Silnikov7: {
      const auto& p = std::get<SilnikovParams>(params);
      if (!finite(p.alpha) || !finite(p.beta) || !finite(p.gamma) || !finite(p.delta))
        throw DomainError("silnikov params must be finite");
      if (p.beta < 0.0) throw DomainError("beta: must be >= 0");
      break;
    }
  }
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Cubic2: return "cubic2";
    case Family::Cubic2Prime: return "cubic2prime";
    case Family::Lorenz: return "lorenz";
    case Family::Silnikov7: return "silnikov7";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "cubic2") return Family::Cubic2;
  if (name == "cubic2prime" || name == "cubic2'") return Family::Cubic2Prime;
  if (name == "lorenz") return Family::Lorenz;
  if (name == "silnikov7" || name == "silnikov") return Family::Silnikov7;
  throw ConfigError("family: unknown value '" + name + "'");
}

SystemDef::SystemDef(Family family, ParamRecord params)
    : family_(family), params_(std::move(params)) {
  const bool cubic_like = family_ == Family::Cubic2 || family_ == Family::Cubic2Prime;
  if (cubic_like && !std::holds_alternative<CubicParams>(params_))
    throw DomainError("cubic family needs {a, b}");
  if (family_ == Family::Lorenz && !std::holds_alternative<LorenzParams>(params_))
    throw DomainError("lorenz family needs {sigma, rho, beta}");
  if (family_ == Family::Silnikov7 && !std::holds_alternative<SilnikovParams>(params_))
    throw DomainError("silnikov family needs {alpha, beta, gamma, delta}");
  validate(family_, params_);
}

const CubicParams& SystemDef::cubic() const { return std::get<CubicParams>(params_); }
const LorenzParams& SystemDef::lorenz() const { return std::get<LorenzParams>(params_); }
const SilnikovParams& SystemDef::silnikov() const { return std::get<SilnikovParams>(params_); }

double SystemDef::damping() const {
  switch (family_) {
    case Family::Cubic2:
    case Family::Cubic2Prime: return cubic().b;
    case Family::Silnikov7: return silnikov().beta;
    case Family::Lorenz: return lorenz().sigma + 1.0 + lorenz().beta;
  }
  return 0.0;
}

std::string SystemDef::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << family_name(family_);
  switch (family_) {
    case Family::Cubic2:
    case Family::Cubic2Prime:
      os << "(a=" << cubic().a << ", b=" << cubic().b << ")";
      break;
    case Family::Lorenz:
      os << "(sigma=" << lorenz().sigma << ", rho=" << lorenz().rho
         << ", beta=" << lorenz().beta << ")";
      break;
    case Family::Silnikov7:
      os << "(alpha=" << silnikov().alpha << ", beta=" << silnikov().beta
         << ", gamma=" << silnikov().gamma << ", delta=" << silnikov().delta << ")";
      break;
  }
  return os.str();
}

SystemDef make_cubic2(double a, double b) {
  return SystemDef(Family::Cubic2, CubicParams{a, b});
}

SystemDef make_cubic2_prime(double a, double b) {
  return SystemDef(Family::Cubic2Prime, CubicParams{a, b});
}

SystemDef make_lorenz(double sigma, double rho, double beta) {
  return SystemDef(Family::Lorenz, LorenzParams{sigma, rho, beta});
}

SystemDef make_silnikov7(double alpha, double beta, double gamma, double delta) {
  return SystemDef(Family::Silnikov7, SilnikovParams{alpha, beta, gamma, delta});
}

SystemDef system_from_config(const std::map<std::string, std::string>& kv) {
  auto it = kv.find("family");
  if (it == kv.end()) throw ConfigError("family: missing");
  Family family = family_from_name(it->second);

  auto parse = [&](const std::string& key, double fallback) {
    auto k = kv.find(key);
    if (k == kv.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(k->second, &pos);
      if (pos != k->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": not a number ('" + k->second + "')");
    }
  };

  std::map<std::string, bool> known = {{"family", true}};
  auto allow = [&](const char* key) { known[key] = true; };

  ParamRecord params;
  switch (family) {
    case Family::Cubic2:
    case Family::Cubic2Prime: {
      allow("a");
      allow("b");
      CubicParams p;
      params = CubicParams{parse("a", p.a), parse("b", p.b)};
      break;
    }
    case Family::Lorenz: {
      allow("sigma");
      allow("rho");
      allow("beta");
      LorenzParams p;
      params = LorenzParams{parse("sigma", p.sigma), parse("rho", p.rho), parse("beta", p.beta)};
      break;
    }
    case Family::Silnikov7: {
      allow("alpha");
      allow("beta");
      allow("gamma");
      allow("delta");
      SilnikovParams p;
      params = SilnikovParams{parse("alpha", p.alpha), parse("beta", p.beta),
                              parse("gamma", p.gamma), parse("delta", p.delta)};
      break;
    }
  }
  for (const auto& [key, value] : kv) {
    (void)value;
    if (!known.count(key)) throw ConfigError(key + ": unknown key for " + family_name(family));
  }
  try {
    return SystemDef(family, params);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

State eval_field(const SystemDef& sys, const State& s) {
  require_finite(s, "eval_field");
  const double x = s.x(), y = s.y(), z = s.z();
  switch (sys.family()) {
    case Family::Cubic2: {
      const auto& p = sys.cubic();
      return State(y, z, x * x * x - p.a * p.a * x - y - p.b * z);
    }
    case Family::Cubic2Prime: {
      const auto& p = sys.cubic();
      return State(y, z, p.a * p.a * x - x * x * x - y - p.b * z);
    }
    case Family::Lorenz: {
      const auto& p = sys.lorenz();
      return State(p.sigma * (y - x), p.rho * x - y - x * z, -p.beta * z + x * y);
    }
    case Family::Silnikov7: {
      const auto& p = sys.silnikov();
      return State(y, z, p.alpha * (p.delta * x * x * x - p.gamma * x * x - x) - y - p.beta * z);
    }
  }
  throw Error("eval_field: unreachable");
}

Mat3 eval_jacobian(const SystemDef& sys, const State& s) {
  require_finite(s, "eval_jacobian");
  const double x = s.x(), y = s.y(), z = s.z();
  Mat3 j = Mat3::Zero();
  switch (sys.family()) {
    case Family::Cubic2: {
      const auto& p = sys.cubic();
      j(0, 1) = 1.0;
      j(1, 2) = 1.0;
      j(2, 0) = 3.0 * x * x - p.a * p.a;
      j(2, 1) = -1.0;
      j(2, 2) = -p.b;
      break;
    }
    case Family::Cubic2Prime: {
      const auto& p = sys.cubic();
      j(0, 1) = 1.0;
      j(1, 2) = 1.0;
      j(2, 0) = p.a * p.a - 3.0 * x * x;
      j(2, 1) = -1.0;
      j(2, 2) = -p.b;
      break;
    }
    case Family::Lorenz: {
      const auto& p = sys.lorenz();
      j(0, 0) = -p.sigma;
      j(0, 1) = p.sigma;
      j(1, 0) = p.rho - z;
      j(1, 1) = -1.0;
      j(1, 2) = -x;
      j(2, 0) = y;
      j(2, 1) = x;
      j(2, 2) = -p.beta;
      break;
    }
    case Family::Silnikov7: {
      const auto& p = sys.silnikov();
      j(0, 1) = 1.0;
      j(1, 2) = 1.0;
      j(2, 0) = p.alpha * (3.0 * p.delta * x * x - 2.0 * p.gamma * x - 1.0);
      j(2, 1) = -1.0;
      j(2, 2) = -p.beta;
      break;
    }
  }
  return j;
}

double divergence(const SystemDef& sys, const State& s) {
  require_finite(s, "divergence");
  switch (sys.family()) {
    case Family::Cubic2:
    case Family::Cubic2Prime:
      return -sys.cubic().b;
    case Family::Silnikov7:
      return -sys.silnikov().beta;
    case Family::Lorenz: {
      const auto& p = sys.lorenz();
      return -(p.sigma + 1.0 + p.beta);
    }
  }
  throw Error("divergence: unreachable");
}

bool has_point_symmetry(const SystemDef& sys) {
  if (sys.family() == Family::Silnikov7) return sys.silnikov().gamma == 0.0;
  return true;
}

State symmetry_image(const SystemDef& sys, const State& s) {
  require_finite(s, "symmetry_image");
  switch (sys.family()) {
    case Family::Cubic2:
    case Family::Cubic2Prime:
      return -s;
    case Family::Lorenz:
      return State(-s.x(), -s.y(), s.z());
    case Family::Silnikov7:
      if (sys.silnikov().gamma != 0.0) {
        throw NoSymmetryError("symmetry_image: the x^2 term (gamma != 0) breaks the point symmetry");
      }
      return -s;
  }
  throw Error("symmetry_image: unreachable");
}

}  // namespace flowatlas::systems
