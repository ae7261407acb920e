#include "flowatlas/io.hpp"

#include <cstdio>
#include <fstream>

namespace flowatlas::io {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io: cannot write '" + path + "'");
  out << text;
}

void write_csv(const std::string& path, const std::vector<std::string>& header_lines,
               const std::string& column_row, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io: cannot write '" + path + "'");
  for (const auto& line : header_lines) out << "# " << line << "\n";
  out << column_row << "\n";
  for (const auto& row : rows) out << row << "\n";
}

std::vector<std::string> trajectory_rows(const integrator::Trajectory& traj, int stride) {
  std::vector<std::string> rows;
  if (stride < 1) stride = 1;
  for (std::size_t i = 0; i < traj.times.size(); i += stride) {
    rows.push_back(g17(traj.times[i]) + "," + g17(traj.states[i].x()) + "," +
                   g17(traj.states[i].y()) + "," + g17(traj.states[i].z()));
  }
  return rows;
}

std::vector<std::string> crossing_rows(const integrator::CrossingSequence& seq) {
  std::vector<std::string> rows;
  for (const auto& c : seq.crossings) {
    rows.push_back(g17(c.t) + "," + g17(c.state.x()) + "," + g17(c.state.y()) + "," +
                   g17(c.state.z()) + "," + (c.direction > 0 ? "+1" : "-1"));
  }
  return rows;
}

Json meta_json(const std::vector<std::string>& config_lines) {
  Json meta;
  meta["build"] = kBuildId;
  Json cfg = Json::object();
  for (const auto& line : config_lines) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  meta["config"] = cfg;
  return meta;
}

namespace {

Json complex_json(const Complex& z) {
  Json j;
  j["re"] = z.real();
  j["im"] = z.imag();
  return j;
}

Json state_json(const State& s) { return Json::array({s.x(), s.y(), s.z()}); }

}  // namespace

Json equilibria_json(const std::vector<spectral::Equilibrium>& eqs) {
  Json arr = Json::array();
  for (const auto& eq : eqs) {
    Json j;
    j["id"] = eq.id;
    j["location"] = state_json(eq.location);
    Json evs = Json::array();
    for (const auto& p : eq.eigen.pairs) evs.push_back(complex_json(p.value));
    j["eigenvalues"] = evs;
    Json vecs = Json::array();
    for (const auto& p : eq.eigen.pairs) {
      Json v = Json::array();
      for (int i = 0; i < 3; ++i) v.push_back(complex_json(p.vector[i]));
      vecs.push_back(v);
    }
    j["eigenvectors"] = vecs;
    j["kind"] = spectral::kind_name(eq.kind);
    arr.push_back(j);
  }
  return arr;
}

Json orbit_json(const orbits::ClosedOrbit& orbit) {
  Json j;
  j["period"] = orbit.period;
  j["anchor"] = state_json(orbit.anchor);
  j["rotation_number"] = orbit.rotation_number;
  j["symmetry"] =
      orbit.symmetry.kind == orbits::SymmetryKind::SelfSymmetric ? "self-symmetric" : "twin";
  j["partner_anchor"] = state_json(orbit.symmetry.partner_anchor);
  j["symmetry_image_distance"] = orbit.symmetry.image_distance;
  Json mult = Json::array();
  for (const auto& m : orbit.floquet) mult.push_back(complex_json(m));
  j["floquet_multipliers"] = mult;
  j["return_residual"] = orbit.return_residual;
  j["amplitude"] = orbit.amplitude;
  return j;
}

Json lyapunov_json(const orbits::LyapunovSpectrum& spec) {
  Json j;
  j["exponents"] = Json::array({spec.exponents[0], spec.exponents[1], spec.exponents[2]});
  j["sum"] = spec.exponents[0] + spec.exponents[1] + spec.exponents[2];
  j["integration_time"] = spec.integration_time;
  Json hist = Json::array();
  for (const auto& [t, ex] : spec.convergence_history) {
    hist.push_back(Json::array({t, ex[0], ex[1], ex[2]}));
  }
  j["convergence_history"] = hist;
  return j;
}

Json bifurcation_json(const atlas::BifurcationResult& result) {
  Json j;
  j["kind"] = atlas::bifurcation_name(result.kind);
  j["bracket"] = Json::array({result.b_lo, result.b_hi});
  j["resolved"] = result.resolved;
  j["lo_value"] = result.lo_value;
  j["hi_value"] = result.hi_value;
  Json steps = Json::array();
  for (const auto& [b, v] : result.steps) steps.push_back(Json::array({b, v}));
  j["steps"] = steps;
  j["findings"] = result.findings;
  return j;
}

Json classification_json(const atlas::Classification& cls) {
  Json j;
  j["b"] = cls.b;
  j["verdict"] = atlas::verdict_name(cls.verdict);
  j["rotation"] = cls.rotation;
  j["arrangement"] = atlas::arrangement_name(cls.arrangement);
  j["evidence"] = cls.evidence;
  if (cls.orbit) j["orbit"] = orbit_json(*cls.orbit);
  if (cls.sample) {
    Json s;
    s["bounded"] = cls.sample->bounded;
    s["points"] = cls.sample->points.size();
    s["bounding_radius"] = cls.sample->bounding_radius;
    s["transient"] = cls.sample->transient_used;
    s["window"] = cls.sample->window_used;
    Json esc = Json::array();
    for (const auto& e : cls.sample->escapes) {
      Json rec;
      rec["seed"] = e.seed_index;
      rec["t"] = e.t;
      rec["exit_state"] = state_json(e.exit_state);
      esc.push_back(rec);
    }
    s["escapes"] = esc;
    j["sample"] = s;
  }
  if (cls.faintness) {
    Json f;
    f["verdict"] = atlas::faintness_name(cls.faintness->verdict);
    f["dwell"] = cls.faintness->report.dwell;
    f["escaped"] = cls.faintness->report.escaped;
    f["t_end"] = cls.faintness->report.t_end;
    j["faintness"] = f;
  }
  return j;
}

}  // namespace flowatlas::io
