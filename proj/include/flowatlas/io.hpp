#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flowatlas/atlas.hpp"
#include "flowatlas/integrator.hpp"
#include "flowatlas/orbits.hpp"
#include "flowatlas/spectral.hpp"

namespace flowatlas::io {

using Json = nlohmann::ordered_json;

inline const char* kBuildId = "flowatlas 1.0.0";

// 17 significant digits, enough to round-trip a double.
std::string g17(double v);

// CSV writers; every file starts with '#'-prefixed header lines recording the
// effective configuration (reproducibility contract: no timestamps).
void write_csv(const std::string& path, const std::vector<std::string>& header_lines,
               const std::string& column_row, const std::vector<std::string>& rows);

std::vector<std::string> trajectory_rows(const integrator::Trajectory& traj, int stride);
std::vector<std::string> crossing_rows(const integrator::CrossingSequence& seq);

Json meta_json(const std::vector<std::string>& config_lines);
Json equilibria_json(const std::vector<spectral::Equilibrium>& eqs);
Json orbit_json(const orbits::ClosedOrbit& orbit);
Json lyapunov_json(const orbits::LyapunovSpectrum& spec);
Json bifurcation_json(const atlas::BifurcationResult& result);
Json classification_json(const atlas::Classification& cls);

void write_text(const std::string& path, const std::string& text);

}  // namespace flowatlas::io
