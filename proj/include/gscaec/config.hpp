#pragma once

#include <string>

#include "gscaec/design_search.hpp"
#include "gscaec/harness.hpp"

namespace gscaec {

struct OutputSpec {
  std::string dir = ".";
  std::string prefix = "gscaec";

  bool operator==(const OutputSpec&) const = default;
};

/// One configuration document: a scenario, an optional design grid and
/// output naming.
struct RunConfig {
  Scenario scenario;
  DesignSpec design;
  OutputSpec output;
};

bool operator==(const FarEndModel& a, const FarEndModel& b);
bool operator==(const Scenario& a, const Scenario& b);
bool operator==(const RunConfig& a, const RunConfig& b);

/// Parses an INI document with sections [plant] [signals] [gsc] [policy]
/// [schedule] [montecarlo] [design] [output]. Unknown sections and keys are
/// rejected with ConfigError naming them. Relative paths resolve against
/// `base_dir`.
RunConfig parse_config_string(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

/// Full document with every key; parse(emit(c)) == c.
std::string emit_config(const RunConfig& cfg);

/// Schedule event grammar, e.g. "100000 dtalk_on 1 -0.9 0,0 policy pair 0 8e-5".
Event parse_event(const std::string& text, const std::string& base_dir = ".");
std::string format_event(const Event& ev);

}  // namespace gscaec
