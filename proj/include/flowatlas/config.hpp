#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowatlas/atlas.hpp"
#include "flowatlas/integrator.hpp"
#include "flowatlas/systems.hpp"

namespace flowatlas::config {

// Effective run configuration: built-in defaults overlaid by an optional
// key-value file overlaid by command-line flags, validated up front.
class RunConfig {
 public:
  static RunConfig defaults();

  // Precedence: defaults < file < overrides. Unknown keys, unparsable
  // numbers, and domain violations raise ConfigError naming the key.
  static RunConfig load(const std::string& file_path,
                        const std::map<std::string, std::string>& overrides);

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  systems::SystemDef make_system() const;
  integrator::Tolerances tolerances() const;
  atlas::AtlasSettings atlas_settings() const;
  orbits::DetectSettings detect_settings() const;

  // "key = value" lines of the effective configuration, stable order.
  std::vector<std::string> echo_lines() const;

 private:
  void validate() const;
  std::map<std::string, std::string> values_;
};

// Parses a flat `key = value` file ('#' comments, blank lines allowed).
std::map<std::string, std::string> parse_kv_file(const std::string& path);

}  // namespace flowatlas::config
