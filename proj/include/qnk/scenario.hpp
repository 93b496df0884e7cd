#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qnk/profile.hpp"

namespace qnk::cli {

enum class ScenarioKind { penrose_check, instability, stable_well_prepared, stable_ill_prepared, bgk_build, ion_variant };

std::string kind_name(ScenarioKind k);

// One section of a config file after validation: every admissible key present, defaults filled,
// "auto" values resolved where that needs no simulation.
struct Scenario {
  std::string name;
  ScenarioKind kind = ScenarioKind::penrose_check;
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& key) const;
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  // assertion thresholds: "off" gives nullopt
  std::optional<double> threshold(const std::string& key) const;
};

// Line-oriented format:
//   # comment
//   [scenario_name]
//   kind = instability
//   profile.kind = two_stream
//   profile.T = 0.25
// Unknown keys, duplicate keys and malformed values raise Errc::config naming the section and key.
std::vector<Scenario> parse_config(const std::string& text, const std::string& origin = "<config>");
std::vector<Scenario> validate_config(const std::string& path);

// Fully resolved scenario in the same format, parseable again
std::string resolved_echo(const Scenario& s);

struct ScenarioResult {
  std::string name;
  std::string dir;
  bool completed = false;  // no runtime error
  int assertions = 0;
  int failed = 0;
  std::string error;
  bool ok() const { return completed && failed == 0; }
};

// Writes <out_root>/<name>/{report.txt, config.resolved, diag.csv, ...}. Runtime errors are caught and recorded.
ScenarioResult run_scenario(const Scenario& s, const std::string& out_root);

struct RunOptions {
  std::string out_dir = "qnk_out";
  bool parallel = false;
  std::vector<ScenarioKind> only;  // empty: all kinds
};

// "two_stream(T=0.25, u=2)": a profile kind with the same keys as the profile.* config section
Profile profile_from_spec(const std::string& spec);

// QNK_THREADS caps the worker count; sequential unless parallel is set
int worker_count(bool parallel, std::size_t scenarios);

std::vector<ScenarioResult> run_scenarios(const std::vector<Scenario>& list, const RunOptions& opt);

}  // namespace qnk::cli
