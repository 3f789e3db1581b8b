#pragma once

// Experiment orchestration for the CLI: typed configs loaded from JSON or a
// TOML subset, deterministic run directories named by config content hash,
// CSV/JSON artifacts with a generated schema file, and SVG plots.
//
// Determinism contract: identical config + seed produce byte-identical CSV and
// JSON artifacts. Wall time is therefore written to a plain-text sidecar
// (timing.txt), never into record.json.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pxfb/common.hpp"

namespace pxfb {

enum class ExperimentKind {
  dirichlet_benchmark,
  energy_benchmark,
  barrier_certification,
  viscosity_battery,
  harnack_study,
  flatness_iteration,
  neumann_check,
  norm_suite,
};

std::string kind_name(ExperimentKind k);
ExperimentKind kind_from_name(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::norm_suite;
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  // Full parameter block (defaults filled), canonical JSON text. This is what
  // gets hashed for the run directory name and echoed into record.json.
  std::string canonical_json;
  std::string source_path;
};

// Parses a config file; format chosen by extension (.json, or .toml for the
// TOML subset: comments, [tables], dotted keys, strings/numbers/bools/flat
// arrays). Validation errors list every missing/invalid field.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text,
                                       const std::string& source_path);

struct RunRecord {
  ExperimentConfig config;
  std::string toolkit_version;
  double wall_seconds = 0;                       // sidecar only, see above
  std::string run_dir;
  std::vector<std::string> artifacts;            // paths relative to run_dir
  std::map<std::string, double> metrics;         // summary metrics
  std::map<std::string, std::string> notes;
  bool certification_pass = true;                // false => CLI exit 4

  std::string record_json() const;               // deterministic
};

// Runs the experiment into out_dir/<kind>-<hash12>/ (created; existing files
// overwritten). Overrides replace the config's seed/output directory.
RunRecord run_experiment(const ExperimentConfig& cfg,
                         std::optional<std::uint64_t> seed_override = {},
                         std::optional<std::string> out_override = {});

// Re-checks a finished run directory: artifact presence, certificate and
// report invariants, and recomputation for the analytic kinds. Returns true
// when everything still passes.
bool verify_run(const std::string& run_dir, std::string* report_out = nullptr);

// Renders SVG plots for the run's CSV artifacts (two-numeric-column tables get
// a scatter/line; iteration traces get a semilog decay plot with the fitted
// rate annotated). Empty tables produce no plot and a note in the returned
// list.
std::vector<std::string> emit_plots(const std::string& run_dir);

std::string config_content_hash(const std::string& canonical_json);

}  // namespace pxfb
