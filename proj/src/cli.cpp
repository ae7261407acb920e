#include "flowatlas/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "flowatlas/atlas.hpp"
#include "flowatlas/config.hpp"
#include "flowatlas/io.hpp"
#include "flowatlas/manifolds.hpp"
#include "flowatlas/orbits.hpp"
#include "flowatlas/spectral.hpp"
#include "flowatlas/systems.hpp"

namespace flowatlas::cli {

namespace fs = std::filesystem;
using config::RunConfig;
using io::Json;

namespace {

State parse_state(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> vals;
  while (std::getline(ss, item, ',')) {
    try {
      vals.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("seed: not a number ('" + item + "')");
    }
  }
  if (vals.size() != 3) throw ConfigError("seed: expected three comma-separated values");
  State s(vals[0], vals[1], vals[2]);
  if (!is_finite(s)) throw ConfigError("seed: must be finite");
  return s;
}

struct FlagCapture {
  CLI::App* app;
  std::map<std::string, std::string>* overrides;
  std::map<std::string, std::string> staging;

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = staging[key];
    app->add_option_function<std::string>(
           flag, [&slot](const std::string& v) { slot = v; }, help)
        ->group("Configuration");
  }
  void collect() {
    for (auto& [key, value] : staging)
      if (!value.empty()) (*overrides)[key] = value;
  }
};

void register_config_flags(CLI::App* cmd, std::map<std::string, std::string>* overrides,
                           std::vector<std::unique_ptr<FlagCapture>>& captures) {
  auto cap = std::make_unique<FlagCapture>();
  cap->app = cmd;
  cap->overrides = overrides;
  cap->add("--family", "family", "ODE family: cubic2|cubic2prime|lorenz|silnikov7");
  cap->add("--a", "a", "cubic parameter a (> 0)");
  cap->add("--b", "b", "cubic damping b (>= 0)");
  cap->add("--sigma", "sigma", "Lorenz sigma");
  cap->add("--rho", "rho", "Lorenz rho");
  cap->add("--beta", "beta", "Lorenz/Silnikov beta");
  cap->add("--alpha", "alpha", "Silnikov alpha");
  cap->add("--gamma", "gamma", "Silnikov gamma");
  cap->add("--delta", "delta", "Silnikov delta");
  cap->add("--abs-tol", "abs_tol", "integrator absolute tolerance");
  cap->add("--rel-tol", "rel_tol", "integrator relative tolerance");
  cap->add("--max-step", "max_step", "integrator max step");
  cap->add("--min-step", "min_step", "integrator min step");
  cap->add("--escape-radius", "escape_radius", "escape radius");
  cap->add("--max-time", "max_time", "default time horizon");
  cap->add("--seeds", "seeds", "fan size on p0's unstable eigen-plane");
  cap->add("--seed-radius", "seed_radius", "fan seed radius");
  cap->add("--transient", "transient", "sampling transient");
  cap->add("--sample-window", "sample_window", "sampling window");
  cap->add("--sample-dt", "sample_dt", "cloud sampling interval");
  cap->add("--delta-visit", "delta_visit", "dwell distance threshold");
  cap->add("--t-visit-min", "t_visit_min", "minimum dwell that counts as a visit");
  cap->add("--faint-max-time", "faint_max_time", "horizon of the faintness test");
  cap->add("--detect-transient", "detect_transient", "orbit detection transient");
  cap->add("--detect-window", "detect_window", "orbit detection search window");
  cap->add("--recurrence-dist", "recurrence_dist", "near-return threshold");
  cap->add("--out", "out", "output directory");
  cap->add("--stride", "stride", "CSV row thinning");
  cap->add("--jobs", "jobs", "scan worker count");
  captures.push_back(std::move(cap));
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.get("out"));
  fs::create_directories(dir);
  return dir;
}

std::string format_b(double b) {
  std::ostringstream os;
  os.precision(10);
  os << b;
  std::string s = os.str();
  for (auto& c : s)
    if (c == '.' || c == '-') c = '_';
  return s;
}

struct CommandContext {
  RunConfig cfg;
  fs::path out_dir;
  std::vector<std::string> header;
};

CommandContext make_context(const std::string& config_path,
                            const std::map<std::string, std::string>& overrides) {
  CommandContext ctx{RunConfig::load(config_path, overrides), {}, {}};
  ctx.out_dir = ensure_out_dir(ctx.cfg);
  ctx.header.push_back(io::kBuildId);
  for (const auto& line : ctx.cfg.echo_lines()) ctx.header.push_back(line);
  return ctx;
}

void write_json(const fs::path& path, const CommandContext& ctx, const char* kind, Json body) {
  Json doc;
  doc["meta"] = io::meta_json(ctx.header);
  doc[kind] = std::move(body);
  io::write_text(path.string(), doc.dump(2) + "\n");
}

int cmd_simulate(const CommandContext& ctx, const std::string& seed_text, double t0, double t1) {
  auto sys = ctx.cfg.make_system();
  auto tol = ctx.cfg.tolerances();
  const State s0 = parse_state(seed_text);
  auto traj = integrator::integrate(sys, s0, t0, t1, tol);

  auto header = ctx.header;
  header.push_back("seed = " + seed_text);
  header.push_back("t0 = " + io::g17(t0));
  header.push_back("t1 = " + io::g17(t1));
  const fs::path path = ctx.out_dir / "trajectory.csv";
  io::write_csv(path.string(), header, "t,x,y,z",
                io::trajectory_rows(traj, ctx.cfg.integer("stride")));

  const char* term = "time-limit";
  if (traj.termination.kind == integrator::TerminationKind::Escaped) term = "escaped";
  std::cout << "simulate: " << traj.times.size() << " rows, termination " << term << " at t="
            << io::g17(traj.times.back()) << " -> " << path.string() << "\n";
  return 0;
}

int cmd_equilibria(const CommandContext& ctx) {
  auto sys = ctx.cfg.make_system();
  auto eqs = spectral::equilibria(sys);
  Json body = io::equilibria_json(eqs);
  const fs::path path = ctx.out_dir / "equilibria.json";
  write_json(path, ctx, "equilibria", body);
  Json doc;
  doc["meta"] = io::meta_json(ctx.header);
  doc["equilibria"] = body;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_manifold(const CommandContext& ctx, const std::string& point, const std::string& stability,
                 int dim) {
  auto sys = ctx.cfg.make_system();
  auto eqs = spectral::equilibria(sys);
  int idx = -1;
  if (point == "p0") idx = 0;
  else if (point == "p1") idx = 1;
  else if (point == "p2") idx = 2;
  if (idx < 0 || idx >= static_cast<int>(eqs.size()))
    throw ConfigError("point: expected p0|p1|p2");
  const auto stab = stability == "stable" ? manifolds::Stability::Stable
                                          : manifolds::Stability::Unstable;
  if (stability != "stable" && stability != "unstable")
    throw ConfigError("stability: expected stable|unstable");

  manifolds::TraceSettings ts;
  ts.tol = ctx.cfg.tolerances();
  ts.tol.max_time = ctx.cfg.number("max_time");
  ts.seed_offset = 1e-6;
  ts.ring_radius = ctx.cfg.number("seed_radius");

  std::vector<manifolds::ManifoldBranch> branches;
  if (dim == 1) {
    branches.push_back(manifolds::trace_1d(sys, eqs[idx], stab, manifolds::BranchTag::Plus, ts));
    branches.push_back(manifolds::trace_1d(sys, eqs[idx], stab, manifolds::BranchTag::Minus, ts));
  } else if (dim == 2) {
    branches = manifolds::expand_2d(sys, eqs[idx], stab, ctx.cfg.integer("seeds"),
                                    ts.ring_radius, ts);
  } else {
    throw ConfigError("dim: expected 1 or 2");
  }

  Json index = Json::array();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& br = branches[i];
    std::ostringstream name;
    name << "manifold_" << point << "_" << stability << "_" << dim << "d_branch" << i << ".csv";
    const fs::path path = ctx.out_dir / name.str();

    auto header = ctx.header;
    header.push_back("point = " + point);
    header.push_back("stability = " + stability);
    header.push_back("dim = " + std::to_string(dim));
    header.push_back(br.dim == 1
                         ? "branch = " + std::string(br.branch_tag == manifolds::BranchTag::Plus
                                                         ? "plus"
                                                         : "minus")
                         : "seed_angle = " + io::g17(br.seed_angle));
    header.push_back("backward_time = " + std::string(br.backward_time ? "true" : "false"));
    std::vector<std::string> rows;
    const int stride = ctx.cfg.integer("stride");
    for (std::size_t k = 0; k < br.polyline.size(); k += stride) {
      rows.push_back(io::g17(br.times[k]) + "," + io::g17(br.polyline[k].x()) + "," +
                     io::g17(br.polyline[k].y()) + "," + io::g17(br.polyline[k].z()));
    }
    io::write_csv(path.string(), header, "t,x,y,z", rows);

    Json entry;
    entry["file"] = name.str();
    entry["fate"] = manifolds::fate_name(br.fate.kind);
    entry["points"] = br.polyline.size();
    if (br.dim == 2) entry["seed_angle"] = br.seed_angle;
    else entry["branch"] = br.branch_tag == manifolds::BranchTag::Plus ? "plus" : "minus";
    if (br.fate.kind == manifolds::FateKind::EscapesPositiveX ||
        br.fate.kind == manifolds::FateKind::EscapesNegativeX) {
      entry["exit_time"] = br.fate.exit_time;
    }
    index.push_back(entry);
  }
  const fs::path index_path = ctx.out_dir / "manifold_index.json";
  write_json(index_path, ctx, "branches", index);
  std::cout << "manifold: " << branches.size() << " branches -> " << index_path.string() << "\n";
  return 0;
}

int cmd_orbit(const CommandContext& ctx, const std::string& seed_text) {
  auto sys = ctx.cfg.make_system();
  auto ds = ctx.cfg.detect_settings();
  const State s0 = parse_state(seed_text);
  auto outcome = orbits::detect_closed_orbit(sys, s0, ds);
  if (!outcome.found()) {
    io::write_text((ctx.out_dir / "diagnostics.txt").string(),
                   "orbit: not found: " + outcome.diagnostics + "\n");
    std::cout << "orbit: not found (" << outcome.diagnostics << ")\n";
    return 1;
  }
  const auto& orbit = *outcome.orbit;
  const fs::path path = ctx.out_dir / "orbit.json";
  write_json(path, ctx, "orbit", io::orbit_json(orbit));

  auto header = ctx.header;
  header.push_back("seed = " + seed_text);
  header.push_back("period = " + io::g17(orbit.period));
  std::vector<std::string> rows;
  const double dt = orbit.period / static_cast<double>(orbit.samples.size());
  for (std::size_t i = 0; i < orbit.samples.size(); ++i) {
    rows.push_back(io::g17(i * dt) + "," + io::g17(orbit.samples[i].x()) + "," +
                   io::g17(orbit.samples[i].y()) + "," + io::g17(orbit.samples[i].z()));
  }
  io::write_csv((ctx.out_dir / "orbit_samples.csv").string(), header, "t,x,y,z", rows);

  std::cout << "orbit: period " << io::g17(orbit.period) << ", rotation "
            << orbit.rotation_number << ", "
            << (orbit.symmetry.kind == orbits::SymmetryKind::SelfSymmetric ? "self-symmetric"
                                                                           : "twin")
            << " -> " << path.string() << "\n";
  return 0;
}

int cmd_lyapunov(const CommandContext& ctx, const std::string& seed_text, double t_total,
                 double renorm_dt) {
  auto sys = ctx.cfg.make_system();
  orbits::LyapunovSettings ls;
  ls.tol = ctx.cfg.tolerances();
  ls.tol.escape_radius = std::max(ls.tol.escape_radius, 50.0);
  ls.renorm_dt = renorm_dt;
  const State s0 = parse_state(seed_text);
  auto spec = orbits::lyapunov_spectrum(sys, s0, t_total, ls);
  const fs::path path = ctx.out_dir / "lyapunov.json";
  write_json(path, ctx, "lyapunov", io::lyapunov_json(spec));
  std::cout << "lyapunov: (" << io::g17(spec.exponents[0]) << ", " << io::g17(spec.exponents[1])
            << ", " << io::g17(spec.exponents[2]) << ") over t=" << io::g17(spec.integration_time)
            << " -> " << path.string() << "\n";
  return 0;
}

int cmd_section(const CommandContext& ctx, const std::string& normal_text, double offset,
                const std::string& direction) {
  auto sys = ctx.cfg.make_system();
  auto st = ctx.cfg.atlas_settings();
  integrator::CrossDirection dir = integrator::CrossDirection::Both;
  if (direction == "up") dir = integrator::CrossDirection::Up;
  else if (direction == "down") dir = integrator::CrossDirection::Down;
  else if (direction != "both") throw ConfigError("direction: expected up|down|both");
  const State n = parse_state(normal_text);
  auto plane = integrator::PlaneEvent::make(n, offset, dir);

  auto sample = atlas::sample_attractor_class(sys, st);
  if (!sample.bounded) {
    io::write_text((ctx.out_dir / "diagnostics.txt").string(),
                   "section: the attractor sample is unbounded at these parameters\n");
    std::cout << "section: sample unbounded; no section produced\n";
    return 1;
  }
  auto section = atlas::cross_section(sys, sample, plane, st);

  auto header = ctx.header;
  header.push_back("normal = " + normal_text);
  header.push_back("offset = " + io::g17(offset));
  header.push_back("direction = " + direction);
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < section.uv.size(); ++i) {
    rows.push_back(io::g17(section.uv[i][0]) + "," + io::g17(section.uv[i][1]) + "," +
                   io::g17(section.states[i].x()) + "," + io::g17(section.states[i].y()) + "," +
                   io::g17(section.states[i].z()) + "," +
                   (section.direction[i] > 0 ? "+1" : "-1"));
  }
  const fs::path path = ctx.out_dir / "section.csv";
  io::write_csv(path.string(), header, "u,v,x,y,z,direction", rows);
  std::cout << "section: " << rows.size() << " crossings -> " << path.string() << "\n";
  return 0;
}

int cmd_scan(const CommandContext& ctx, double from, double to, double step) {
  if (!(step > 0.0)) throw ConfigError("step: must be > 0");
  if (to < from) throw ConfigError("scan: need from <= to");
  auto st = ctx.cfg.atlas_settings();
  const double a = ctx.cfg.number("a");

  std::vector<double> bs;
  for (double b = from; b <= to + 0.5 * step; b += step) bs.push_back(b);
  auto rows = atlas::scan(a, bs, st);

  const fs::path evidence_dir = ctx.out_dir / "scan_evidence";
  fs::create_directories(evidence_dir);

  std::vector<std::string> csv_rows;
  for (const auto& row : rows) {
    std::string evidence_path = "scan_evidence/b_" + format_b(row.b) + ".json";
    Json body;
    body["b"] = row.b;
    body["failed"] = row.failed;
    if (row.failed) body["error"] = row.error;
    body["verdict"] = atlas::verdict_name(row.verdict);
    body["rotation"] = row.rotation;
    body["arrangement"] = atlas::arrangement_name(row.arrangement);
    body["evidence"] = row.evidence;
    write_json(ctx.out_dir / evidence_path, ctx, "scan_point", body);

    csv_rows.push_back(io::g17(row.b) + "," +
                       (row.failed ? "error" : atlas::verdict_name(row.verdict)) + "," +
                       std::to_string(row.rotation) + "," +
                       atlas::arrangement_name(row.arrangement) + "," + evidence_path);
    std::cout << "scan: b=" << io::g17(row.b) << " -> "
              << (row.failed ? ("error: " + row.error) : atlas::verdict_name(row.verdict))
              << "\n";
  }
  auto header = ctx.header;
  header.push_back("from = " + io::g17(from));
  header.push_back("to = " + io::g17(to));
  header.push_back("step = " + io::g17(step));
  const fs::path path = ctx.out_dir / "scan.csv";
  io::write_csv(path.string(), header, "b,verdict,rotation,arrangement,evidence_path", csv_rows);
  std::cout << "scan: " << rows.size() << " rows -> " << path.string() << "\n";
  return 0;
}

int cmd_bisect(const CommandContext& ctx, const std::string& kind, double lo, double hi,
               double resolution) {
  auto st = ctx.cfg.atlas_settings();
  const double a = ctx.cfg.number("a");
  atlas::BifurcationResult result;
  if (kind == "rotation") {
    result = atlas::bisect_rotation(a, lo, hi, resolution, st);
  } else if (kind == "fate") {
    result = atlas::bisect_branch_fate(a, lo, hi, resolution, st);
  } else if (kind == "merge") {
    result = atlas::bisect_twin_merge(a, lo, hi, resolution, st);
  } else if (kind == "hopf") {
    const double b_hopf = spectral::hopf_locus(a, lo, hi);
    result.kind = atlas::BifurcationKind::Hopf;
    result.b_lo = result.b_hi = result.resolved = b_hopf;
    result.lo_value = "re>0";
    result.hi_value = "re<0";
  } else {
    throw ConfigError("kind: expected rotation|fate|merge|hopf");
  }
  const fs::path path = ctx.out_dir / "bisect.json";
  write_json(path, ctx, "bifurcation", io::bifurcation_json(result));
  std::cout << "bisect(" << kind << "): resolved " << io::g17(result.resolved) << " in ["
            << io::g17(result.b_lo) << ", " << io::g17(result.b_hi) << "] -> " << path.string()
            << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Numerical atlas of a family of three-dimensional cubic flows"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key-value configuration file")
      ->group("Configuration");

  std::map<std::string, std::string> overrides;
  std::vector<std::unique_ptr<FlagCapture>> captures;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "integrate one trajectory and export CSV");
  std::string sim_seed;
  double sim_t0 = 0.0, sim_t1 = 200.0;
  simulate->add_option("--seed", sim_seed, "initial state x,y,z")->required();
  simulate->add_option("--t0", sim_t0, "start time");
  simulate->add_option("--t1", sim_t1, "end time (t1 < t0 integrates backward)");
  register_config_flags(simulate, &overrides, captures);

  // equilibria
  auto* equil = app.add_subcommand("equilibria", "equilibria with spectra and classification");
  register_config_flags(equil, &overrides, captures);

  // manifold
  auto* manifold = app.add_subcommand("manifold", "trace 1D branches or expand a 2D fan");
  std::string mf_point = "p0", mf_stability = "unstable";
  int mf_dim = 1;
  manifold->add_option("--point", mf_point, "p0|p1|p2");
  manifold->add_option("--stability", mf_stability, "stable|unstable");
  manifold->add_option("--dim", mf_dim, "1 or 2");
  register_config_flags(manifold, &overrides, captures);

  // orbit
  auto* orbit = app.add_subcommand("orbit", "detect and refine a closed orbit");
  std::string orbit_seed;
  orbit->add_option("--seed", orbit_seed, "initial state x,y,z")->required();
  register_config_flags(orbit, &overrides, captures);

  // lyapunov
  auto* lyap = app.add_subcommand("lyapunov", "Lyapunov spectrum along one trajectory");
  std::string lyap_seed;
  double lyap_t_total = 3000.0, lyap_dt = 1.0;
  lyap->add_option("--seed", lyap_seed, "initial state x,y,z")->required();
  lyap->add_option("--t-total", lyap_t_total, "averaging time");
  lyap->add_option("--renorm-dt", lyap_dt, "reorthonormalization interval");
  register_config_flags(lyap, &overrides, captures);

  // section
  auto* section = app.add_subcommand("section", "attractor cross-section on a plane");
  std::string sec_normal = "1,0,0", sec_direction = "both";
  double sec_offset = 0.0;
  section->add_option("--normal", sec_normal, "plane normal x,y,z");
  section->add_option("--offset", sec_offset, "plane offset (n.s = offset)");
  section->add_option("--direction", sec_direction, "up|down|both");
  register_config_flags(section, &overrides, captures);

  // scan
  auto* scan = app.add_subcommand("scan", "classify a range of b values");
  double scan_from = 0.0, scan_to = 0.0, scan_step = 0.0;
  scan->add_option("--from", scan_from, "first b")->required();
  scan->add_option("--to", scan_to, "last b")->required();
  scan->add_option("--step", scan_step, "b increment")->required();
  register_config_flags(scan, &overrides, captures);

  // bisect
  auto* bisect = app.add_subcommand("bisect", "bisection on a classification predicate");
  std::string bis_kind;
  double bis_lo = 0.0, bis_hi = 0.0, bis_res = 1e-3;
  bisect->add_option("--kind", bis_kind, "rotation|fate|merge|hopf")->required();
  bisect->add_option("--lo", bis_lo, "lower b")->required();
  bisect->add_option("--hi", bis_hi, "upper b")->required();
  bisect->add_option("--resolution", bis_res, "bracket width target");
  register_config_flags(bisect, &overrides, captures);

  std::vector<const char*> argv;
  argv.push_back("flowatlas");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto& cap : captures) cap->collect();

  try {
    CommandContext ctx = make_context(config_path, overrides);
    try {
      if (simulate->parsed()) return cmd_simulate(ctx, sim_seed, sim_t0, sim_t1);
      if (equil->parsed()) return cmd_equilibria(ctx);
      if (manifold->parsed()) return cmd_manifold(ctx, mf_point, mf_stability, mf_dim);
      if (orbit->parsed()) return cmd_orbit(ctx, orbit_seed);
      if (lyap->parsed()) return cmd_lyapunov(ctx, lyap_seed, lyap_t_total, lyap_dt);
      if (section->parsed()) return cmd_section(ctx, sec_normal, sec_offset, sec_direction);
      if (scan->parsed()) return cmd_scan(ctx, scan_from, scan_to, scan_step);
      if (bisect->parsed()) return cmd_bisect(ctx, bis_kind, bis_lo, bis_hi, bis_res);
      std::cerr << "error: no subcommand\n";
      return 2;
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      io::write_text((ctx.out_dir / "diagnostics.txt").string(),
                     std::string("error: ") + e.what() + "\n");
      return 1;
    }
  } catch (const std::exception& e) {
    // Configuration-stage failure (before any computation).
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace flowatlas::cli
