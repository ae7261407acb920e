#include "flowatlas/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace flowatlas::config {

namespace {

// Every recognized key with its built-in default. Keys absent here are
// rejected wherever they appear (file or flags).
const std::vector<std::pair<std::string, std::string>>& known_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"family", "cubic2"},
      {"a", "1"},
      {"b", "0.3"},
      {"sigma", "10"},
      {"rho", "28"},
      {"beta", "2.6666666666666665"},
      {"alpha", "1"},
      {"gamma", "0"},
      {"delta", "1"},
      {"abs_tol", "1e-10"},
      {"rel_tol", "1e-10"},
      {"max_step", "1"},
      {"min_step", "1e-12"},
      {"escape_radius", "10"},
      {"max_time", "200"},
      {"seeds", "8"},
      {"seed_radius", "0.0001"},
      {"transient", "300"},
      {"sample_window", "300"},
      {"sample_dt", "0.05"},
      {"delta_visit", "0.1"},
      {"t_visit_min", "10"},
      {"faint_max_time", "40000"},
      {"detect_transient", "300"},
      {"detect_window", "700"},
      {"recurrence_dist", "0.001"},
      {"out", "out"},
      {"stride", "1"},
      {"jobs", "1"},
  };
  return keys;
}

bool is_known(const std::string& key) {
  for (const auto& [k, v] : known_keys())
    if (k == key) return true;
  return false;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
    kv[key] = value;
  }
  return kv;
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& [k, v] : known_keys()) cfg.values_[k] = v;
  return cfg;
}

RunConfig RunConfig::load(const std::string& file_path,
                          const std::map<std::string, std::string>& overrides) {
  RunConfig cfg = defaults();
  if (!file_path.empty()) {
    for (const auto& [k, v] : parse_kv_file(file_path)) {
      if (!is_known(k)) throw ConfigError(k + ": unknown key");
      cfg.values_[k] = v;
    }
  }
  for (const auto& [k, v] : overrides) {
    if (!is_known(k)) throw ConfigError(k + ": unknown key");
    cfg.values_[k] = v;
  }
  cfg.validate();
  return cfg;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key + ": unknown key");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number ('" + v + "')");
  }
}

int RunConfig::integer(const std::string& key) const {
  const double x = number(key);
  if (x != std::floor(x)) throw ConfigError(key + ": not an integer");
  return static_cast<int>(x);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError(key + ": unknown key");
  values_[key] = value;
}

systems::SystemDef RunConfig::make_system() const {
  std::map<std::string, std::string> kv;
  kv["family"] = get("family");
  const systems::Family fam = systems::family_from_name(get("family"));
  switch (fam) {
    case systems::Family::Cubic2:
    case systems::Family::Cubic2Prime:
      kv["a"] = get("a");
      kv["b"] = get("b");
      break;
    case systems::Family::Lorenz:
      kv["sigma"] = get("sigma");
      kv["rho"] = get("rho");
      kv["beta"] = get("beta");
      break;
    case systems::Family::Silnikov7:
      kv["alpha"] = get("alpha");
      kv["beta"] = get("beta");
      kv["gamma"] = get("gamma");
      kv["delta"] = get("delta");
      break;
  }
  return systems::system_from_config(kv);
}

integrator::Tolerances RunConfig::tolerances() const {
  integrator::Tolerances tol;
  tol.abs_tol = number("abs_tol");
  tol.rel_tol = number("rel_tol");
  tol.max_step = number("max_step");
  tol.min_step = number("min_step");
  tol.escape_radius = number("escape_radius");
  tol.max_time = number("max_time");
  try {
    tol.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return tol;
}

orbits::DetectSettings RunConfig::detect_settings() const {
  orbits::DetectSettings ds;
  ds.tol = tolerances();
  ds.tol.max_time = 1e9;
  ds.transient = number("detect_transient");
  ds.search_window = number("detect_window");
  ds.recurrence_dist = number("recurrence_dist");
  if (!(ds.transient > 0.0)) throw ConfigError("detect_transient: must be > 0");
  if (!(ds.search_window > 0.0)) throw ConfigError("detect_window: must be > 0");
  if (!(ds.recurrence_dist > 0.0)) throw ConfigError("recurrence_dist: must be > 0");
  return ds;
}

atlas::AtlasSettings RunConfig::atlas_settings() const {
  atlas::AtlasSettings st;
  st.tol = tolerances();
  st.seeds = integer("seeds");
  st.seed_radius = number("seed_radius");
  st.transient = number("transient");
  st.sample_window = number("sample_window");
  st.sample_dt = number("sample_dt");
  st.delta_visit = number("delta_visit");
  st.t_visit_min = number("t_visit_min");
  st.faint_max_time = number("faint_max_time");
  st.jobs = integer("jobs");
  st.detect = detect_settings();
  st.detect.transient = 50.0;  // detection starts from post-transient cloud states
  if (st.seeds < 2) throw ConfigError("seeds: must be >= 2");
  if (!(st.seed_radius > 0.0)) throw ConfigError("seed_radius: must be > 0");
  if (!(st.transient >= 0.0)) throw ConfigError("transient: must be >= 0");
  if (!(st.sample_window > 0.0)) throw ConfigError("sample_window: must be > 0");
  if (!(st.sample_dt > 0.0)) throw ConfigError("sample_dt: must be > 0");
  if (st.jobs < 1) throw ConfigError("jobs: must be >= 1");
  return st;
}

void RunConfig::validate() const {
  make_system();
  tolerances();
  atlas_settings();
  if (integer("stride") < 1) throw ConfigError("stride: must be >= 1");
}

std::vector<std::string> RunConfig::echo_lines() const {
  std::vector<std::string> lines;
  lines.reserve(values_.size());
  for (const auto& [k, v] : values_) lines.push_back(k + " = " + v);
  return lines;
}

}  // namespace flowatlas::config
